"""Synthetic SSVEP EEG and the cursor-based decoding pipeline.

Pipeline per decision window: causal 4th-order Butterworth low-pass at
30 Hz, non-overlapping 1-s epochs, Welch PSD per epoch, a 17-vs-15 Hz
power comparison per epoch, and a cursor that integrates the epoch votes
until it hits a wall or the window times out.

17 Hz is the "Yes"/rotate LED (left wall), 15 Hz the "No" LED (right wall).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError
from .game import Decision

ROTATE_HZ = 17.0
NO_ROTATE_HZ = 15.0
SENDER_FS = 250.0
RECEIVER_FS = 500.0
_WALL_EPS = 1e-9


class Frequency(enum.Enum):
    F17 = 17
    F15 = 15

    @property
    def hz(self) -> float:
        return float(self.value)

    @property
    def other(self) -> "Frequency":
        return Frequency.F15 if self is Frequency.F17 else Frequency.F17

    @property
    def decision(self) -> Decision:
        return Decision.ROTATE if self is Frequency.F17 else Decision.NO_ROTATE

    @classmethod
    def for_decision(cls, d: Decision) -> "Frequency":
        return cls.F17 if d is Decision.ROTATE else cls.F15


@dataclass(frozen=True)
class EegWindow:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise ValueError("EEG window must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise ValueError("EEG window contains non-finite samples")
        object.__setattr__(self, "samples", x)

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class FilterSpec:
    order: int = 4
    cutoff: float = 30.0
    fs: float = SENDER_FS


@dataclass(frozen=True)
class PowerSpectrum:
    freqs: np.ndarray
    power: np.ndarray

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def at(self, hz: float) -> float:
        """Power in the bin centred on ``hz``; the bin must exist exactly."""
        idx = int(round(hz / self.resolution))
        if idx >= self.freqs.size or abs(self.freqs[idx] - hz) > 1e-9:
            raise ValueError(f"no spectral bin at {hz} Hz")
        return float(self.power[idx])


@dataclass(frozen=True)
class EpochVote:
    """Outcome of one epoch; ``winner`` is None when the powers tie."""

    winner: Frequency | None
    p17: float
    p15: float


@dataclass(frozen=True)
class CursorState:
    position: float = 0.0
    step: float = 0.1
    latched: Decision | None = None
    last_vote: Frequency | None = None


@dataclass(frozen=True)
class SsvepParams:
    """Generative model for one attending participant (amplitudes in uV).

    ``noise_amp`` is the RMS of the 1/f component and ``floor_amp`` the RMS
    of the white floor added on top of it.
    """

    target_amp: float = 1.5
    distractor_amp: float = 0.3
    noise_amp: float = 3.0
    noise_exponent: float = 1.0
    floor_amp: float = 5.0
    harmonics: int = 1

    def __post_init__(self):
        for name in ("target_amp", "distractor_amp", "noise_amp", "floor_amp"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.harmonics < 1:
            raise ConfigurationError("harmonics must be >= 1")

    @property
    def noise_rms(self) -> float:
        return float(np.hypot(self.noise_amp, self.floor_amp))


def design_filter(spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Butterworth low-pass as second-order sections."""
    if spec.order < 1:
        raise ConfigurationError("filter order must be >= 1")
    if not 0 < spec.cutoff < spec.fs / 2:
        raise ConfigurationError(
            f"cutoff {spec.cutoff} Hz must lie inside (0, Nyquist={spec.fs / 2} Hz)"
        )
    return sps.butter(spec.order, spec.cutoff, btype="lowpass", fs=spec.fs, output="sos")


def apply_filter(sos: np.ndarray, x) -> np.ndarray:
    """Causal (forward-only) filtering from a zero initial state."""
    return sps.sosfilt(sos, np.asarray(x, dtype=float))


def epoch(window: EegWindow, seconds: float = 1.0) -> list:
    """Split into consecutive non-overlapping epochs; the remainder is dropped."""
    n = int(round(window.fs * seconds))
    count = window.samples.size // n
    return [EegWindow(window.samples[i * n : (i + 1) * n], window.fs) for i in range(count)]


def welch_psd(epoch: EegWindow, nperseg: int | None = None, noverlap: int | None = None) -> PowerSpectrum:
    """Welch estimate: averaged Hann-windowed periodograms, one-sided density.

    Defaults to a single segment spanning the whole epoch so that a 1-s
    epoch yields 1 Hz bins.
    """
    x = np.asarray(epoch.samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot estimate the spectrum of an empty epoch")
    nperseg = x.size if nperseg is None else int(nperseg)
    if nperseg > x.size:
        raise ValueError(f"segment length {nperseg} exceeds epoch length {x.size}")
    noverlap = nperseg // 2 if noverlap is None else int(noverlap)
    stride = nperseg - noverlap
    if stride <= 0:
        raise ValueError("overlap must be shorter than the segment")

    win = sps.get_window("hann", nperseg)
    scale = 1.0 / (epoch.fs * np.sum(win**2))
    starts = range(0, x.size - nperseg + 1, stride)
    acc = np.zeros(nperseg // 2 + 1)
    for s in starts:
        seg = x[s : s + nperseg]
        seg = seg - seg.mean()
        acc += np.abs(np.fft.rfft(seg * win)) ** 2
    power = acc * scale / len(starts)
    # one-sided: double everything except DC and (for even lengths) Nyquist
    if nperseg % 2:
        power[1:] *= 2
    else:
        power[1:-1] *= 2
    freqs = np.fft.rfftfreq(nperseg, 1.0 / epoch.fs)
    return PowerSpectrum(freqs, power)


def classify_epoch(psd: PowerSpectrum) -> EpochVote:
    p17, p15 = psd.at(ROTATE_HZ), psd.at(NO_ROTATE_HZ)
    if p17 > p15:
        winner = Frequency.F17
    elif p15 > p17:
        winner = Frequency.F15
    else:
        winner = None
    return EpochVote(winner, p17, p15)


def update_cursor(c: CursorState, v: EpochVote) -> CursorState:
    """Move one step towards the voted wall; touching a wall latches."""
    if c.latched is not None or v.winner is None:
        return c
    delta = -c.step if v.winner is Frequency.F17 else c.step
    pos = c.position + delta
    latched = None
    if pos <= -1.0 + _WALL_EPS:
        pos, latched = -1.0, Decision.ROTATE
    elif pos >= 1.0 - _WALL_EPS:
        pos, latched = 1.0, Decision.NO_ROTATE
    return replace(c, position=pos, latched=latched, last_vote=v.winner)


def tally_decision(votes, cursor: CursorState | None = None) -> Decision:
    """Final decision of one window: the latched wall, else the nearer wall.

    A cursor that times out exactly at the centre follows the last
    non-abstaining vote; with no votes at all it keeps the block as is.
    """
    c = run_cursor(votes, cursor)
    if c.latched is not None:
        return c.latched
    if c.position < -_WALL_EPS:
        return Decision.ROTATE
    if c.position > _WALL_EPS:
        return Decision.NO_ROTATE
    if c.last_vote is not None:
        return c.last_vote.decision
    return Decision.NO_ROTATE


def run_cursor(votes, cursor: CursorState | None = None) -> CursorState:
    c = CursorState() if cursor is None else cursor
    for v in votes:
        c = update_cursor(c, v)
    return c


def pink_noise(n: int, exponent: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS Gaussian noise with power spectral density ~ 1/f**exponent."""
    if n == 0:
        return np.zeros(0)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size, dtype=float)
    f[0] = 1.0
    spec *= f ** (-exponent / 2.0)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    rms = np.sqrt(np.mean(x**2))
    return x / rms if rms > 0 else x


def synthesize_eeg(
    target: Frequency,
    duration: float,
    params: SsvepParams,
    rng: np.random.Generator,
    fs: float = SENDER_FS,
) -> EegWindow:
    """Single-channel occipital EEG of someone attending the ``target`` LED."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    x = np.zeros(n)
    for freq, amp in ((target, params.target_amp), (target.other, params.distractor_amp)):
        for k in range(1, params.harmonics + 1):
            phase = rng.uniform(0, 2 * np.pi)
            x += (amp / k) * np.sin(2 * np.pi * k * freq.hz * t + phase)
    x += params.noise_amp * pink_noise(n, params.noise_exponent, rng)
    x += params.floor_amp * rng.standard_normal(n)
    return EegWindow(x, fs)


def synthesize_rest(duration, params: SsvepParams, rng, fs=SENDER_FS) -> EegWindow:
    """Background activity only (no LED attended)."""
    quiet = replace(params, target_amp=0.0, distractor_amp=0.0)
    return synthesize_eeg(Frequency.F17, duration, quiet, rng, fs)


@dataclass(frozen=True)
class DecodeResult:
    decision: Decision
    votes: tuple
    cursor: CursorState


class SsvepDecoder:
    """Filter, epoch, Welch, vote and tally one decision window."""

    def __init__(self, fs: float = SENDER_FS, cutoff: float = 30.0, order: int = 4, step: float = 0.1):
        self.fs = fs
        self.step = step
        self.sos = design_filter(FilterSpec(order, cutoff, fs))

    def spectra(self, window: EegWindow) -> list:
        filtered = EegWindow(apply_filter(self.sos, window.samples), window.fs)
        return [welch_psd(e) for e in epoch(filtered)]

    def decode(self, window: EegWindow) -> DecodeResult:
        votes = tuple(classify_epoch(p) for p in self.spectra(window))
        cursor = run_cursor(votes, CursorState(step=self.step))
        return DecodeResult(tally_decision((), cursor), votes, cursor)


def average_spectra(phases: dict) -> dict:
    """Elementwise mean spectrum per task phase (e.g. pre/during/post)."""
    out = {}
    for name, spectra in phases.items():
        spectra = list(spectra)
        if not spectra:
            raise ValueError(f"phase {name!r} has no epochs")
        freqs = spectra[0].freqs
        out[name] = PowerSpectrum(freqs, np.mean([s.power for s in spectra], axis=0))
    return out


def simulate_phases(
    target: Frequency,
    params: SsvepParams,
    rng: np.random.Generator,
    decoder: SsvepDecoder | None = None,
    task_seconds: float = 10.0,
    rest_seconds: float = 3.0,
) -> dict:
    """Epoch spectra before, during and after one attention window."""
    decoder = decoder or SsvepDecoder()
    fs = decoder.fs
    pre = synthesize_rest(rest_seconds, params, rng, fs)
    task = synthesize_eeg(target, task_seconds, params, rng, fs)
    post = synthesize_rest(rest_seconds, params, rng, fs)
    return {"pre": decoder.spectra(pre), "during": decoder.spectra(task), "post": decoder.spectra(post)}
