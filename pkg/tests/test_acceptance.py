"""Acceptance criteria, one test each.

Every test prints a single ``CRITERION n PASS|FAIL`` line with the measured
quantities before asserting, so a plain ``pytest -v`` run doubles as the
acceptance report.  Run this file directly for just those lines.
"""

import math
import subprocess
import sys
import threading
import time
from fractions import Fraction

import numpy as np
import pytest

from brainnet_sim.agents import PhospheneModel, derive_stim_levels, pest_calibrate
from brainnet_sim.analysis import mi_bias, mutual_information, report, wilcoxon_rank_sum, wilcoxon_signed_rank
from brainnet_sim.errors import CalibrationError
from brainnet_sim.protocol import TICKS_PER_SECOND
from brainnet_sim.session import AgentConfig, SessionConfig, SessionSeeds, SessionServer, run_session
from brainnet_sim.sessionlog import replay
from brainnet_sim.ssvep import FilterSpec, Frequency, SsvepDecoder, SsvepParams, apply_filter, design_filter, synthesize_eeg


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def test_criterion_1_exact_wilcoxon_anchors(verdict):
    t0 = time.perf_counter()
    v = wilcoxon_signed_rank([0.6, 0.7, 0.8, 0.9, 0.95], 0.5, alternative="greater")
    w = wilcoxon_rank_sum([0.9, 0.85, 0.8, 0.75, 0.7], [0.5, 0.45, 0.4, 0.35, 0.3], alternative="two-sided")
    err_v = abs(Fraction(v.p) - Fraction(1, 32))
    err_w = abs(Fraction(w.p) - Fraction(2, 252))
    ms = (time.perf_counter() - t0) * 1e3
    ok = v.statistic == 15 and w.statistic == 25 and err_v <= 1e-9 and err_w <= 1e-9 and v.exact and w.exact
    verdict(1, ok, f"V={v.statistic:g} p={v.p!r} (err {float(err_v):.1e}); "
                   f"W={w.statistic:g} p={w.p!r} (err {float(err_w):.1e}); {ms:.1f} ms")


def test_criterion_2_mi_bias_anchor(verdict):
    b = mi_bias(2, 32)
    verdict(2, abs(b - (-0.045)) <= 0.0005, f"mi_bias(2, 32) = {b:.6f}")


def _mi_oracle(t):
    n = sum(map(sum, t))
    total = 0.0
    for r in range(2):
        for s in range(2):
            if t[r][s]:
                p = t[r][s] / n
                total += p * math.log2(p / (sum(t[r]) / n * (t[0][s] + t[1][s]) / n))
    return total


def test_criterion_3_mi_endpoints_and_oracle(verdict):
    perfect = mutual_information([[8, 0], [0, 8]])
    chance = mutual_information([[4, 4], [4, 4]])
    rng = np.random.default_rng(2024)
    worst, checked = 0.0, 0
    while checked < 10_000:
        t = rng.integers(0, 30, (2, 2))
        if t.sum() == 0:
            continue
        worst = max(worst, abs(mutual_information(t) - _mi_oracle(t.tolist())))
        checked += 1
    ok = abs(perfect - 1) <= 1e-12 and abs(chance) <= 1e-12 and worst <= 1e-12
    verdict(3, ok, f"perfect={perfect!r} independent={chance!r}; max |MI - oracle| over {checked} tables = {worst:.1e}")


def test_criterion_4_dsp_pipeline(verdict):
    t0 = time.perf_counter()
    dec = SsvepDecoder()
    base = SsvepParams()
    strong = SsvepParams(target_amp=2.0 * base.noise_rms)
    silent = SsvepParams(target_amp=0.0, distractor_amp=0.0)
    hits = rot = 0
    for seed in range(1000):
        target = Frequency.F17 if seed % 2 else Frequency.F15
        hits += dec.decode(synthesize_eeg(target, 10, strong, np.random.default_rng(seed))).decision is target.decision
        res = dec.decode(synthesize_eeg(Frequency.F17, 10, silent, np.random.default_rng(10_000 + seed)))
        rot += res.decision is Frequency.F17.decision
    fs = 250.0
    t = np.arange(int(20 * fs)) / fs
    y = apply_filter(design_filter(FilterSpec(4, 30.0, fs)), np.sin(2 * np.pi * 30.0 * t))
    gain_db = 20 * math.log10(math.sqrt(2 * np.mean(y[len(y) // 2 :] ** 2)))
    elapsed = time.perf_counter() - t0
    ok = hits / 1000 >= 0.95 and abs(rot / 1000 - 0.5) <= 0.05 and abs(gain_db + 3.01) <= 0.1 and elapsed < 60
    verdict(4, ok, f"ratio 2 correct {hits / 1000:.3f}; zero-target correct {rot / 1000:.3f}; "
                   f"30 Hz gain {gain_db:.3f} dB; {elapsed:.1f} s")


def test_criterion_5_paper_scale_campaign(verdict):
    t0 = time.perf_counter()
    a = b = cb = cr = 0
    n = 100
    for master in range(1000, 1000 + n):
        logs = [run_session(seeds=SessionSeeds.derive(master, i)) for i in range(5)]
        tests = report(logs).tests
        acc = tests["accuracy"]
        a += acc["mean"] > 0.5 and acc["binomial_p"] < 0.01
        good, bad = tests["mi_good"]["mean"], tests["mi_bad"]["mean"]
        b += good > bad
        zb, zr = tests["trend_beta"]["z"], tests["trend_r"]["z"]
        cb += zb is not None and zb > 0
        cr += zr is not None and zr > 0
    elapsed = time.perf_counter() - t0
    ok = a / n >= 0.95 and b / n >= 0.90 and cb / n >= 0.90 and cr / n >= 0.90 and elapsed < 300
    verdict(5, ok, f"(a) binomial {a / n:.2f}; (b) MI good>bad {b / n:.2f}; "
                   f"(c) Z_beta>0 {cb / n:.2f}, Z_r>0 {cr / n:.2f}; {elapsed:.0f} s")


def test_criterion_6_corruption_accounting(verdict):
    clean = AgentConfig(
        sender_error_rates=(0.0, 0.0),
        ssvep=SsvepParams(target_amp=1.0, distractor_amp=0.0, noise_amp=0.0, floor_amp=0.0),
    )
    bad_logs = []
    for seed in range(100):
        log = run_session(agents=clean, seeds=SessionSeeds.derive(seed))
        wrong = {1: 0, 2: 0}
        for r in log.rounds:
            for s in r["senders"]:
                wrong[s["sender_id"]] += s["conveyed"] != r["correct_action"]
        if wrong[log.victim] != 20 or wrong[3 - log.victim] != 0:
            bad_logs.append(seed)
    verdict(6, not bad_logs, f"100 seeds, victim wrong in exactly 20 rounds and non-victim never: "
                             f"{100 - len(bad_logs)}/100 logs")


def test_criterion_7_transport_equivalence(verdict):
    t0 = time.perf_counter()
    seeds = SessionSeeds.derive(77)
    cfg = SessionConfig(clock="virtual")
    server = SessionServer(cfg, AgentConfig(), seeds, accept_timeout=30)
    out = {}

    def serve():
        try:
            out["log"] = server.serve()
        except Exception as exc:
            out["error"] = exc

    th = threading.Thread(target=serve)
    th.start()
    procs = [
        subprocess.Popen([sys.executable, "-m", "brainnet_sim", "client", "--role", role,
                          "--connect", f"{server.host}:{server.port}"],
                         stdout=subprocess.PIPE, stderr=subprocess.PIPE)
        for role in ("sender", "sender", "receiver")
    ]
    codes = [p.wait(30) for p in procs]
    th.join(30)
    local = run_session(cfg, AgentConfig(), seeds)
    elapsed = time.perf_counter() - t0
    tcp = out.get("log")
    same = tcp is not None and tcp.decision_sequence() == local.decision_sequence()
    verdicts = (str(replay(tcp)) if tcp else "missing", str(replay(local)))
    ok = same and codes == [0, 0, 0] and verdicts == ("PASS", "PASS") and elapsed < 30
    verdict(7, ok, f"clients exit {codes}; sequences identical: {same}; replay {verdicts}; {elapsed:.1f} s")


def test_criterion_8_pest_calibration(verdict):
    t0 = time.perf_counter()
    model = PhospheneModel(true_threshold=0.6, psychometric_slope=20.0, lapse_rate=0.0)
    close = ordered = failed = 0
    for seed in range(500):
        rng = np.random.default_rng(seed)
        thr = pest_calibrate(model, rng)
        close += abs(thr - 0.6) <= 0.05
        try:
            lv = derive_stim_levels(thr, model, rng)
        except CalibrationError:
            failed += 1
            continue
        ordered += lv.no_intensity < thr < lv.yes_intensity
    elapsed = time.perf_counter() - t0
    ok = close / 500 >= 0.95 and ordered == 500 and elapsed < 10
    verdict(8, ok, f"within 0.05: {close / 500:.3f}; no < thr < yes in {ordered}/500 "
                   f"({failed} level searches left [0, 1]); {elapsed:.1f} s")


def test_criterion_9_fast_virtual_campaign(verdict):
    t0 = time.perf_counter()
    logs = [run_session(seeds=SessionSeeds.derive(9, i)) for i in range(5)]
    elapsed = time.perf_counter() - t0
    gaps = min(
        sum(r["senders"][1]["stim_tick"] - r["senders"][0]["stim_tick"] for r in lg.rounds) / TICKS_PER_SECOND
        for lg in logs
    )
    simulated = min(lg.end["tick"] for lg in logs) / TICKS_PER_SECOND
    ok = elapsed < 10 and gaps >= 16 * 2 * 8 and all(lg.complete for lg in logs)
    verdict(9, ok, f"5 triads in {elapsed:.2f} s wall; per session {gaps:.0f} s of stimulation gaps, "
                   f"{simulated:.0f} s simulated")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
