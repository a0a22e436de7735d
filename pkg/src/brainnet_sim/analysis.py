"""Statistics for simulated BrainNet sessions.

Everything operates on :class:`~brainnet_sim.sessionlog.SessionLog`
objects or plain arrays.  Exact tests enumerate their null distributions;
larger samples fall back to normal approximations with continuity
correction.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import AnalysisError

EXACT_LIMIT = 20
ROLES = ("receiver", "good", "bad")


# -- performance --------------------------------------------------------------


def _completed(log):
    trials = log.trials
    if not trials:
        raise AnalysisError(f"log {log.session_id} contains no completed trials")
    return trials


def accuracy(log, exclude=()) -> float:
    """Fraction of trials whose line was cleared."""
    trials = [t for t in _completed(log) if t["trial"] not in set(exclude)]
    if not trials:
        raise AnalysisError("every trial is excluded")
    return sum(t["outcome"] for t in trials) / len(trials)


def binomial_test(k: int, n: int, p0: float = 0.5, alternative: str = "greater") -> float:
    """Exact binomial tail probability.

    ``greater`` gives P[X >= k], ``less`` P[X <= k], and ``two-sided`` sums
    every outcome no more likely than ``k``.
    """
    if n < 1 or not 0 <= k <= n:
        raise AnalysisError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    if not 0.0 <= p0 <= 1.0:
        raise AnalysisError("p0 must lie in [0, 1]")
    p = Fraction(p0).limit_denominator(10**9) if isinstance(p0, float) else Fraction(p0)
    pmf = [math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(n + 1)]
    if alternative == "greater":
        tail = sum(pmf[k:])
    elif alternative == "less":
        tail = sum(pmf[: k + 1])
    elif alternative == "two-sided":
        tail = sum(q for q in pmf if q <= pmf[k])
    else:
        raise AnalysisError(f"unknown alternative {alternative!r}")
    return float(min(tail, 1))


@dataclass(frozen=True)
class RocPoint:
    tpr: float
    fpr: float

    @property
    def auc(self) -> float:
        """Trapezoid through (0, 0), (fpr, tpr), (1, 1)."""
        return (self.tpr + 1.0 - self.fpr) / 2.0


def roc_auc(decisions, truth) -> RocPoint:
    d = np.asarray(decisions, dtype=int)
    t = np.asarray(truth, dtype=int)
    if d.shape != t.shape:
        raise AnalysisError("decisions and truth differ in length")
    pos, neg = t == 1, t == 0
    if not pos.any() or not neg.any():
        raise AnalysisError("ROC rates are undefined unless truth contains both classes")
    return RocPoint(float(d[pos].mean()), float(d[neg].mean()))


def angular_transform(x):
    """Arcsine square-root transform of proportions."""
    a = np.asarray(x, dtype=float)
    if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
        raise AnalysisError("angular transform needs values in [0, 1]")
    out = np.arcsin(np.sqrt(a))
    return float(out) if out.ndim == 0 else out


# -- t tests -----------------------------------------------------------------


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float


def _t_p(t, df, alternative):
    if alternative == "two-sided":
        return float(2 * stats.t.sf(abs(t), df))
    if alternative == "greater":
        return float(stats.t.sf(t, df))
    if alternative == "less":
        return float(stats.t.cdf(t, df))
    raise AnalysisError(f"unknown alternative {alternative!r}")


def t_test_one_sample(values, mu0: float = 0.0, alternative: str = "two-sided") -> TTestResult:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise AnalysisError("one-sample t-test needs at least two values")
    sd = x.std(ddof=1)
    if sd == 0:
        raise AnalysisError("degenerate sample: zero variance")
    t = (x.mean() - mu0) / (sd / math.sqrt(x.size))
    df = x.size - 1
    return TTestResult(float(t), df, _t_p(t, df, alternative))


def t_test_two_sample(a, b, alternative: str = "two-sided") -> TTestResult:
    """Pooled-variance Student t-test."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise AnalysisError("two-sample t-test needs at least two values per sample")
    df = a.size + b.size - 2
    pooled = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / df
    if pooled == 0:
        raise AnalysisError("degenerate samples: zero pooled variance")
    t = (a.mean() - b.mean()) / math.sqrt(pooled * (1 / a.size + 1 / b.size))
    return TTestResult(float(t), df, _t_p(t, df, alternative))


def t_test_paired(a, b, alternative: str = "two-sided") -> TTestResult:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AnalysisError("paired samples differ in length")
    return t_test_one_sample(a - b, 0.0, alternative)


# -- Wilcoxon tests ------------------------------------------------------------


@dataclass(frozen=True)
class RankTestResult:
    statistic: float
    p: float
    exact: bool


def _tail(dist: dict, observed, center, alternative) -> float:
    """Tail mass of a discrete null distribution {value: count}."""
    total = sum(dist.values())
    if alternative == "greater":
        hit = sum(c for v, c in dist.items() if v >= observed)
    elif alternative == "less":
        hit = sum(c for v, c in dist.items() if v <= observed)
    elif alternative == "two-sided":
        dev = abs(observed - center)
        hit = sum(c for v, c in dist.items() if abs(v - center) >= dev - 1e-9)
    else:
        raise AnalysisError(f"unknown alternative {alternative!r}")
    return min(1.0, float(Fraction(hit, total)))


def _normal_p(z, alternative):
    if alternative == "greater":
        return float(stats.norm.sf(z))
    if alternative == "less":
        return float(stats.norm.cdf(z))
    return float(min(1.0, 2 * stats.norm.sf(abs(z))))


def _cc_z(stat, mean, sd, alternative):
    diff = stat - mean
    if alternative == "greater":
        diff -= 0.5
    elif alternative == "less":
        diff += 0.5
    else:
        diff = math.copysign(max(abs(diff) - 0.5, 0.0), diff)
    return diff / sd


def signed_rank_null(ranks) -> dict:
    """Exact null distribution of V over all sign patterns.

    Ranks may be midranks; they are doubled to stay integral and the
    dictionary maps V to the number of the 2**n patterns producing it.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    dist = {0: 1}
    for r in doubled:
        nxt = Counter(dist)
        for v, c in dist.items():
            nxt[v + r] += c
        dist = dict(nxt)
    return {v / 2: c for v, c in dist.items()}


def wilcoxon_signed_rank(values, mu0: float = 0.0, alternative: str = "greater") -> RankTestResult:
    """One-sample signed-rank test; V is the rank sum of positive differences."""
    d = np.asarray(values, dtype=float) - mu0
    d = d[d != 0]
    if d.size == 0:
        raise AnalysisError("all differences are zero")
    ranks = stats.rankdata(np.abs(d))
    v = float(ranks[d > 0].sum())
    n = d.size
    center = n * (n + 1) / 4
    if n <= EXACT_LIMIT:
        return RankTestResult(v, _tail(signed_rank_null(ranks), v, center, alternative), True)
    ties = Counter(np.abs(d)).values()
    var = n * (n + 1) * (2 * n + 1) / 24 - sum(t**3 - t for t in ties) / 48
    return RankTestResult(v, _normal_p(_cc_z(v, center, math.sqrt(var), alternative), alternative), False)


def rank_sum_null(pooled_ranks, n_a: int) -> dict:
    """Exact null distribution of U for sample a over every assignment of ranks."""
    ranks = list(pooled_ranks)
    offset = n_a * (n_a + 1) / 2
    dist = Counter()
    for idx in itertools.combinations(range(len(ranks)), n_a):
        dist[sum(ranks[i] for i in idx) - offset] += 1
    return dict(dist)


def wilcoxon_rank_sum(a, b, alternative: str = "two-sided") -> RankTestResult:
    """Rank-sum test reporting W as the Mann-Whitney U of ``a``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise AnalysisError("rank-sum test needs two non-empty samples")
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    na, nb = a.size, b.size
    u = float(ranks[:na].sum() - na * (na + 1) / 2)
    center = na * nb / 2
    if math.comb(na + nb, na) <= 200_000 and na + nb <= 2 * EXACT_LIMIT:
        return RankTestResult(u, _tail(rank_sum_null(ranks, na), u, center, alternative), True)
    ties = Counter(pooled).values()
    n = na + nb
    var = na * nb / 12 * ((n + 1) - sum(t**3 - t for t in ties) / (n * (n - 1)))
    return RankTestResult(u, _normal_p(_cc_z(u, center, math.sqrt(var), alternative), alternative), False)


# -- information ---------------------------------------------------------------


def joint_counts(r, s) -> np.ndarray:
    """2x2 table n[r, s] of paired binary decisions."""
    r, s = np.asarray(r, dtype=int), np.asarray(s, dtype=int)
    if r.shape != s.shape:
        raise AnalysisError("decision vectors differ in length")
    table = np.zeros((2, 2), dtype=int)
    np.add.at(table, (r, s), 1)
    return table


def mutual_information(counts) -> float:
    """Plug-in mutual information in bits; 0 log 0 terms vanish."""
    n = np.asarray(counts, dtype=float)
    total = n.sum()
    if total <= 0 or np.any(n < 0):
        raise AnalysisError("joint counts must be non-negative with a positive total")
    p = n / total
    pr = p.sum(axis=1, keepdims=True)
    ps = p.sum(axis=0, keepdims=True)
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log2(p[nz] / (pr @ ps)[nz])))
    return max(mi, 0.0)


def mi_bias(n_responses: int, n_samples: int) -> float:
    """Leading-order plug-in bias, -N_R / (2 N_S ln 2)."""
    if n_samples <= 0:
        raise AnalysisError("n_samples must be positive")
    return -n_responses / (2.0 * n_samples * math.log(2))


# -- learning ------------------------------------------------------------------


def _role_sender(log, role):
    victim = log.victim
    if role == "bad":
        return victim
    if role == "good":
        others = [e["sender_id"] for e in log.rounds[0]["senders"] if e["sender_id"] != victim]
        return others[0]
    raise AnalysisError(f"unknown sender role {role!r}")


def decisions(log, role: str, rounds=(1, 2), exclude=()) -> dict:
    """{(trial, round): bit} for the Receiver or the good/bad Sender.

    Sender decisions are those conveyed to the Receiver.
    """
    out = {}
    sid = None if role == "receiver" else _role_sender(log, role)
    for r in log.rounds:
        if r["round"] not in rounds or r["trial"] in set(exclude):
            continue
        if sid is None:
            value = r["receiver"]["decision"]
        else:
            value = next(e["conveyed"] for e in r["senders"] if e["sender_id"] == sid)
        out[(r["trial"], r["round"])] = 1 if value == "rotate" else 0
    return out


def block_vectors(logs, block_index: int, role: str, block_size: int = 4, rnd: int = 1, exclude=None) -> np.ndarray:
    """Concatenated round-``rnd`` decisions of one role within one block.

    Triad-major, trial-minor.  ``exclude`` maps a log position to trial
    indices to drop; any other missing trial is an error.
    """
    if role not in ROLES:
        raise AnalysisError(f"unknown role {role!r}")
    exclude = exclude or {}
    lo = (block_index - 1) * block_size
    out = []
    for i, lg in enumerate(logs):
        dec = decisions(lg, role, rounds=(rnd,))
        for t in range(lo, lo + block_size):
            if t in exclude.get(i, ()):
                continue
            if (t, rnd) not in dec:
                raise AnalysisError(f"log {i} lacks trial {t} round {rnd}")
            out.append(dec[(t, rnd)])
    return np.array(out, dtype=int)


def regression_beta(S, R) -> float:
    """No-intercept least squares weight (S'S)^-1 S'R."""
    S, R = np.asarray(S, dtype=float), np.asarray(R, dtype=float)
    ss = S @ S
    if ss == 0:
        raise AnalysisError("singular regression: predictor is all zero")
    return float((S @ R) / ss)


def pearson_r(S, R) -> float:
    S, R = np.asarray(S, dtype=float), np.asarray(R, dtype=float)
    sc, rc = S - S.mean(), R - R.mean()
    denom = math.sqrt((sc @ sc) * (rc @ rc))
    if denom == 0:
        raise AnalysisError("correlation undefined for a constant vector")
    return float((sc @ rc) / denom)


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    se_slope: float
    n: int


def trend_fit(values, x=None) -> TrendFit:
    """Ordinary least-squares line through per-block values."""
    y = np.asarray(values, dtype=float)
    x = np.arange(1, y.size + 1, dtype=float) if x is None else np.asarray(x, dtype=float)
    if y.size < 3:
        raise AnalysisError("a trend needs at least three points")
    xc = x - x.mean()
    sxx = xc @ xc
    slope = (xc @ (y - y.mean())) / sxx
    intercept = y.mean() - slope * x.mean()
    resid = y - (intercept + slope * x)
    se = math.sqrt((resid @ resid) / (y.size - 2) / sxx)
    return TrendFit(float(slope), float(intercept), float(se), int(y.size))


@dataclass(frozen=True)
class SlopeComparison:
    z: float
    p: float


def paternoster_z(g: TrendFit, b: TrendFit) -> SlopeComparison:
    """Z for the difference of two independent regression slopes."""
    se = math.sqrt(g.se_slope**2 + b.se_slope**2)
    if se == 0:
        raise AnalysisError("combined slope standard error is zero")
    z = (g.slope - b.slope) / se
    return SlopeComparison(z, float(2 * stats.norm.sf(abs(z))))


# -- report ----------------------------------------------------------------------


@dataclass
class AnalysisReport:
    triads: list = field(default_factory=list)
    roc: list = field(default_factory=list)
    mi: list = field(default_factory=list)
    learning: list = field(default_factory=list)
    tests: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2) + "\n"

    def tables(self) -> dict:
        """Flat CSV text per table, one row per measurement."""
        out = {}
        for name in ("triads", "roc", "mi", "learning"):
            rows = getattr(self, name)
            buf = io.StringIO()
            if rows:
                w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
                w.writeheader()
                for row in rows:
                    w.writerow({k: _fmt(v) for k, v in row.items()})
            out[name] = buf.getvalue()
        return out

    def write(self, path) -> list:
        """Write the JSON report at ``path`` and ``<stem>_<table>.csv`` beside it."""
        path = Path(path)
        path.write_text(self.to_json())
        written = [path]
        for name, text in self.tables().items():
            p = path.with_name(f"{path.stem}_{name}.csv")
            p.write_text(text)
            written.append(p)
        return written


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _safe(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except AnalysisError:
        return None


def _test_dict(res):
    return None if res is None else asdict(res)


def _bits(dmap, keys):
    return [dmap[k] for k in keys]


def triad_measures(log, exclude=()):
    """Accuracy, ROC points and MI values for one session."""
    trials = [t for t in _completed(log) if t["trial"] not in set(exclude)]
    rounds = [r for r in log.rounds if r["trial"] not in set(exclude)]
    truth_trial = [int(t["requires_rotation"]) for t in trials]
    by_trial = {}
    for r in rounds:
        by_trial.setdefault(r["trial"], []).append(r)
    net = []
    for t in trials:
        rs = sorted(by_trial[t["trial"]], key=lambda r: r["round"])
        net.append(sum(r["receiver"]["decision"] == "rotate" for r in rs) % 2)

    out = {"accuracy": sum(t["outcome"] for t in trials) / len(trials), "n_trials": len(trials),
           "n_cleared": sum(t["outcome"] for t in trials)}
    out["roc_triad"] = _safe(roc_auc, net, truth_trial)
    truth_round = [1 if r["correct_action"] == "rotate" else 0 for r in rounds]
    keys = [(r["trial"], r["round"]) for r in rounds]
    rec = decisions(log, "receiver", exclude=exclude)
    for role in ("good", "bad"):
        s = decisions(log, role, exclude=exclude)
        out[f"roc_{role}"] = _safe(roc_auc, _bits(s, keys), truth_round)
        counts = joint_counts(_bits(rec, keys), _bits(s, keys))
        out[f"mi_{role}"] = mutual_information(counts)
        out[f"counts_{role}"] = counts.tolist()
    return out


def learning_curves(logs, n_blocks: int = 4, block_size: int = 4, rnd: int = 1, exclude=None) -> dict:
    """Per-block beta and correlation between Receiver and each Sender type."""
    curves = {}
    for role in ("good", "bad"):
        betas, rs = [], []
        for b in range(1, n_blocks + 1):
            R = block_vectors(logs, b, "receiver", block_size, rnd, exclude)
            S = block_vectors(logs, b, role, block_size, rnd, exclude)
            betas.append(_safe(regression_beta, S, R))
            rs.append(_safe(pearson_r, S, R))
        curves[role] = {"beta": betas, "r": rs}
    return curves


def _trend(series):
    pts = [(i + 1, v) for i, v in enumerate(series) if v is not None]
    if len(pts) < 3:
        return None
    x, y = zip(*pts)
    return trend_fit(y, x)


def compare_trends(curves: dict, measure: str):
    g, b = _trend(curves["good"][measure]), _trend(curves["bad"][measure])
    if g is None or b is None:
        return g, b, None
    return g, b, _safe(paternoster_z, g, b)


def report(logs, exclude=None, n_blocks: int = 4, block_size: int = 4, rnd: int = 1) -> AnalysisReport:
    """Every measure and test over a campaign of session logs.

    ``exclude`` maps a log position to trial indices left out of all
    measures (block vectors skip them too).
    """
    logs = list(logs)
    if not logs:
        raise AnalysisError("report needs at least one session log")
    exclude = exclude or {}
    rep = AnalysisReport()
    per = []
    for i, lg in enumerate(logs):
        try:
            m = triad_measures(lg, exclude.get(i, ()))
        except AnalysisError as exc:
            raise AnalysisError(f"triad {i + 1} ({lg.session_id}): {exc}") from exc
        per.append(m)
        rep.triads.append({"triad": i + 1, "session_id": lg.session_id, "victim": lg.victim,
                           "n_trials": m["n_trials"], "n_cleared": m["n_cleared"], "accuracy": m["accuracy"]})
        for who in ("triad", "good", "bad"):
            pt = m[f"roc_{who}"]
            rep.roc.append({"triad": i + 1, "entity": who,
                            "tpr": pt.tpr if pt else None, "fpr": pt.fpr if pt else None,
                            "auc": pt.auc if pt else None})
        for who in ("good", "bad"):
            n_s = int(np.sum(m[f"counts_{who}"]))
            rep.mi.append({"triad": i + 1, "pair": f"receiver-{who}", "mi": m[f"mi_{who}"],
                           "n_samples": n_s, "bias": mi_bias(2, n_s)})

    k = sum(m["n_cleared"] for m in per)
    n = sum(m["n_trials"] for m in per)
    accs = [m["accuracy"] for m in per]
    t = rep.tests
    t["accuracy"] = {"mean": float(np.mean(accs)), "k": k, "n": n, "binomial_p": binomial_test(k, n)}

    chance_auc = angular_transform(0.5)
    auc = {who: [m[f"roc_{who}"].auc for m in per if m[f"roc_{who}"]] for who in ("triad", "good", "bad")}
    for who, vals in auc.items():
        t[f"auc_{who}"] = {
            "mean": float(np.mean(vals)) if vals else None,
            "t_angular": _test_dict(_safe(t_test_one_sample, angular_transform(vals), chance_auc)) if vals else None,
            "wilcoxon": _test_dict(_safe(wilcoxon_signed_rank, vals, 0.5)) if vals else None,
        }
    if len(auc["triad"]) == len(auc["good"]) == len(auc["bad"]):
        for other in ("good", "bad"):
            a, b = auc["triad"], auc[other]
            t[f"auc_triad_vs_{other}"] = {
                "t_angular_paired": _test_dict(_safe(t_test_paired, angular_transform(a), angular_transform(b))),
                "t_angular_pooled": _test_dict(_safe(t_test_two_sample, angular_transform(a), angular_transform(b))),
                "wilcoxon_rank_sum": _test_dict(_safe(wilcoxon_rank_sum, a, b)),
            }

    mi = {who: [m[f"mi_{who}"] for m in per] for who in ("good", "bad")}
    for who, vals in mi.items():
        t[f"mi_{who}"] = {
            "mean": float(np.mean(vals)),
            "t_angular": _test_dict(_safe(t_test_one_sample, angular_transform(np.clip(vals, 0, 1)), 0.0)),
            "wilcoxon": _test_dict(_safe(wilcoxon_signed_rank, vals, 0.0)),
        }
    ag, ab = angular_transform(np.clip(mi["good"], 0, 1)), angular_transform(np.clip(mi["bad"], 0, 1))
    t["mi_good_vs_bad"] = {
        "t_angular_pooled": _test_dict(_safe(t_test_two_sample, ag, ab)),
        "t_angular_paired": _test_dict(_safe(t_test_paired, ag, ab)),
        "wilcoxon_rank_sum": _test_dict(_safe(wilcoxon_rank_sum, mi["good"], mi["bad"])),
    }
    rep.notes.append(
        f"MI values are uncorrected; estimated plug-in bias per pair is {mi_bias(2, 32):.4f} bits at 32 samples"
    )

    curves = learning_curves(logs, n_blocks, block_size, rnd, exclude)
    for role in ("good", "bad"):
        for b in range(n_blocks):
            rep.learning.append({"block": b + 1, "sender": role,
                                 "beta": curves[role]["beta"][b], "r": curves[role]["r"][b]})
    for measure in ("beta", "r"):
        g, b, z = compare_trends(curves, measure)
        t[f"trend_{measure}"] = {
            "good": _test_dict(g), "bad": _test_dict(b),
            "z": z.z if z else None, "p": z.p if z else None,
        }
    return rep
