"""Simulated participants.

Senders look at the full screen and attend the LED for the action that
fixes the block, occasionally attending the wrong one.  The Receiver has a
phosphene threshold found by PEST, perceives each TMS pulse through a
logistic psychometric function, and weighs conflicting Senders by a
Beta-Bernoulli reliability estimate learned from end-of-trial feedback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationError, ConfigurationError, RoleError
from .game import Decision, Role, ViewModel, action_for
from .ssvep import Frequency


@dataclass(frozen=True)
class PhospheneModel:
    """P(phosphene | intensity), intensities as fractions of max output.

    ``psychometric_slope = inf`` gives a step at the threshold (with
    probability one half exactly at it).
    """

    true_threshold: float = 0.60
    psychometric_slope: float = 20.0
    lapse_rate: float = 0.02

    def __post_init__(self):
        if not 0.0 <= self.true_threshold <= 1.0:
            raise ConfigurationError("true_threshold must lie in [0, 1]")
        if self.psychometric_slope <= 0:
            raise ConfigurationError("psychometric_slope must be positive")
        if not 0.0 <= self.lapse_rate < 0.5:
            raise ConfigurationError("lapse_rate must lie in [0, 0.5)")

    def probability(self, intensity: float) -> float:
        x = intensity - self.true_threshold
        if math.isinf(self.psychometric_slope):
            core = 0.5 if x == 0 else float(x > 0)
        else:
            core = 1.0 / (1.0 + math.exp(-self.psychometric_slope * x))
        return self.lapse_rate + (1.0 - 2.0 * self.lapse_rate) * core


def perceive(intensity: float, model: PhospheneModel, rng: np.random.Generator) -> bool:
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity {intensity} outside [0, 1]")
    return bool(rng.random() < model.probability(intensity))


@dataclass
class PestResult:
    estimate: float
    levels: list
    responses: list


def pest_calibrate(
    model: PhospheneModel,
    rng: np.random.Generator,
    start: float = 0.5,
    initial_step: float = 0.08,
    min_step: float = 0.01,
    max_step: float = 0.32,
    wald: float = 1.0,
    target: float = 0.5,
    max_trials: int = 1000,
    history: bool = False,
):
    """Locate the 50% phosphene threshold with a Taylor-Creelman PEST track.

    At each level a Wald sequential test compares the hit count with
    ``n * target``; a deviation beyond ``wald`` calls for a step.  Steps
    halve on every reversal, repeat once, double from the fourth step in a
    direction on (the third step doubles only if the step before the last
    reversal was not itself a doubling).  The track stops when the step
    called for drops below ``min_step``; the estimate is the level that
    step would have reached.
    """
    level = float(start)
    step = float(initial_step)
    direction = 0
    run = 0
    last_was_double = False
    double_before_reversal = False
    n = hits = 0
    levels, responses = [], []

    for _ in range(max_trials):
        seen = perceive(level, model, rng)
        levels.append(level)
        responses.append(seen)
        n += 1
        hits += seen
        if hits > n * target + wald:
            new_dir = -1
        elif hits < n * target - wald:
            new_dir = +1
        else:
            continue

        if direction == 0:
            run = 1
            last_was_double = False
        elif new_dir != direction:
            double_before_reversal = last_was_double
            step /= 2.0
            run = 1
            last_was_double = False
        else:
            run += 1
            if run >= 4 or (run == 3 and not double_before_reversal):
                step = min(step * 2.0, max_step)
                last_was_double = True
            else:
                last_was_double = False
        direction = new_dir
        n = hits = 0

        if step < min_step:
            estimate = float(np.clip(level + direction * step, 0.0, 1.0))
            if history:
                return PestResult(estimate, levels, responses)
            return estimate
        level = float(np.clip(level + direction * step, 0.0, 1.0))

    raise CalibrationError(f"PEST did not converge within {max_trials} trials", partial_estimate=level)


@dataclass(frozen=True)
class StimLevels:
    yes_intensity: float
    no_intensity: float
    threshold: float


def _search_level(threshold, model, rng, sign, increment, run_length):
    k = 1
    while True:
        level = round(threshold + sign * k * increment, 10)
        if not 0.0 <= level <= 1.0:
            raise CalibrationError(
                f"stimulation level left [0, 1] before {run_length} consecutive "
                f"{'hits' if sign > 0 else 'misses'}",
                partial_estimate=threshold + sign * (k - 1) * increment,
            )
        want = sign > 0
        streak = 0
        while streak < run_length and perceive(level, model, rng) == want:
            streak += 1
        if streak == run_length:
            return level
        k += 1


def derive_stim_levels(
    threshold: float,
    model: PhospheneModel,
    rng: np.random.Generator,
    increment: float = 0.05,
    run_length: int = 10,
) -> StimLevels:
    """Rotate/no-rotate intensities bracketing the calibrated threshold.

    Walk upwards from the threshold in ``increment`` steps until a level
    elicits ``run_length`` phosphenes in a row, then downwards until a level
    elicits none ``run_length`` times in a row.
    """
    yes = _search_level(threshold, model, rng, +1, increment, run_length)
    no = _search_level(threshold, model, rng, -1, increment, run_length)
    return StimLevels(yes, no, threshold)


@dataclass(frozen=True)
class SenderPolicy:
    attention_error_rate: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.attention_error_rate <= 0.5:
            raise ConfigurationError("attention_error_rate must lie in [0, 0.5]")


def sender_decide(view: ViewModel, policy: SenderPolicy, rng: np.random.Generator) -> Frequency:
    """LED a Sender attends after looking at their screen."""
    if view.role is not Role.SENDER or view.gap is None:
        raise RoleError("sender_decide needs a Sender view that shows the gap")
    target = Frequency.for_decision(action_for(view.block, view.gap))
    if rng.random() < policy.attention_error_rate:
        target = target.other
    return target


@dataclass(frozen=True)
class TrustState:
    """Beta(successes + prior, failures + prior) belief per Sender."""

    successes: tuple = (0, 0)
    failures: tuple = (0, 0)
    prior: float = 1.0

    @classmethod
    def initial(cls, n_senders: int = 2, prior: float = 1.0) -> "TrustState":
        return cls((0,) * n_senders, (0,) * n_senders, prior)

    @property
    def estimates(self) -> tuple:
        a = self.prior
        return tuple(
            (s + a) / (s + f + 2 * a) for s, f in zip(self.successes, self.failures)
        )

    def sample(self, rng: np.random.Generator) -> tuple:
        """One reliability draw per Sender from its posterior."""
        a = self.prior
        return tuple(
            float(rng.beta(s + a, f + a)) for s, f in zip(self.successes, self.failures)
        )

    def to_dict(self) -> dict:
        return {
            "successes": list(self.successes),
            "failures": list(self.failures),
            "estimates": [round(e, 12) for e in self.estimates],
        }


def receiver_decide(phosphenes, trust) -> Frequency:
    """LED the Receiver attends given one percept per Sender.

    Agreeing percepts are followed.  On conflict the Sender with the highest
    reliability estimate wins; exact ties go to the lowest-numbered Sender.
    ``trust`` is a TrustState or a plain sequence of estimates.
    """
    bits = [bool(p) for p in phosphenes]
    if all(bits) or not any(bits):
        return Frequency.F17 if bits[0] else Frequency.F15
    est = trust.estimates if isinstance(trust, TrustState) else tuple(trust)
    best = max(range(len(bits)), key=lambda i: (est[i], -i))
    return Frequency.F17 if bits[best] else Frequency.F15


def update_trust(trust: TrustState, conveyed, correct) -> TrustState:
    """Credit each Sender whose conveyed decisions matched the revealed answers.

    ``conveyed[i]`` and ``correct`` are per-round sequences for one trial
    (or single decisions); a Sender scores one success only if every round
    matched.
    """
    correct = _as_tuple(correct)
    succ, fail = list(trust.successes), list(trust.failures)
    for i, c in enumerate(conveyed):
        if _as_tuple(c) == correct:
            succ[i] += 1
        else:
            fail[i] += 1
    return replace(trust, successes=tuple(succ), failures=tuple(fail))


def _as_tuple(x):
    if isinstance(x, (Decision, bool, int)):
        return (Decision.from_bit(x) if not isinstance(x, Decision) else x,)
    return tuple(Decision.from_bit(v) if not isinstance(v, Decision) else v for v in x)


class ReceiverPolicy:
    """Strategy that turns percepts and trust into an attended LED."""

    name = "base"

    def choose(self, phosphenes, trust: TrustState, rng: np.random.Generator) -> Frequency:
        raise NotImplementedError


class GreedyTrustPolicy(ReceiverPolicy):
    """Follow the Sender with the higher posterior-mean reliability."""

    name = "greedy"

    def choose(self, phosphenes, trust, rng):
        return receiver_decide(phosphenes, trust)


class SampledTrustPolicy(ReceiverPolicy):
    """Follow the Sender whose reliability, drawn from its posterior, is higher."""

    name = "sampled"

    def choose(self, phosphenes, trust, rng):
        return receiver_decide(phosphenes, trust.sample(rng))


class FixedSenderPolicy(ReceiverPolicy):
    """Baseline: always side with one Sender on conflict."""

    def __init__(self, sender_index: int = 0):
        self.sender_index = sender_index
        self.name = f"sender{sender_index + 1}"

    def choose(self, phosphenes, trust, rng):
        return Frequency.F17 if phosphenes[self.sender_index] else Frequency.F15


class CoinFlipPolicy(ReceiverPolicy):
    """Baseline: resolve conflicts at random."""

    name = "coin"

    def choose(self, phosphenes, trust, rng):
        bits = [bool(p) for p in phosphenes]
        if all(bits) or not any(bits):
            return Frequency.F17 if bits[0] else Frequency.F15
        return Frequency.F17 if rng.random() < 0.5 else Frequency.F15


def make_policy(name: str) -> ReceiverPolicy:
    if name == "greedy":
        return GreedyTrustPolicy()
    if name == "sampled":
        return SampledTrustPolicy()
    if name == "coin":
        return CoinFlipPolicy()
    if name.startswith("sender") and name[6:].isdigit():
        return FixedSenderPolicy(int(name[6:]) - 1)
    raise ConfigurationError(f"unknown receiver policy {name!r}")
