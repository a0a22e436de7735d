import json
import os
import subprocess
import sys
import time

import pytest

from brainnet_sim.cli import main
from brainnet_sim.config import HarnessConfig, RunManifest, load_config, sha256
from brainnet_sim.errors import ConfigurationError
from brainnet_sim.sessionlog import SessionLog


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--triads", "5", "--virtual", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_simulate_writes_logs_and_manifest(sim_dir):
    logs = sorted(sim_dir.glob("triad*.jsonl"))
    assert len(logs) == 5
    for p in logs:
        log = SessionLog.read(p)
        assert len(log.trials) == 16 and log.complete
    man = RunManifest.read(sim_dir / "manifest.json")
    assert len(man.sessions) == 5 and man.config["seed"] == 7
    assert all(s["sha256"] == sha256(s["log"]) for s in man.sessions)
    assert all(s["virtual_seconds"] >= 16 * 2 * 28 for s in man.sessions)
    assert set(man.versions) >= {"brainnet_sim", "numpy", "scipy", "python"}


def test_simulate_is_byte_identical(sim_dir, tmp_path):
    assert main(["simulate", "--triads", "5", "--seed", "7", "--out", str(tmp_path)]) == 0
    for p in sim_dir.glob("triad*.jsonl"):
        assert (tmp_path / p.name).read_bytes() == p.read_bytes()


def test_seed_fan_out(sim_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 7, "output": {"report": str(tmp_path / "elsewhere.json")}}))
    assert main(["simulate", str(cfg), "--triads", "1", "--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "triad01.jsonl").read_bytes() == (sim_dir / "triad01.jsonl").read_bytes()
    assert main(["simulate", "--triads", "1", "--seed", "8", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "triad01.jsonl").read_bytes() != (sim_dir / "triad01.jsonl").read_bytes()


def test_triads_zero_is_usage_error(capsys):
    assert main(["simulate", "--triads", "0"]) == 2
    assert main([]) == 2
    assert main(["client", "--role", "sender", "--connect", "nohost"]) == 2


def test_env_override_log_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("BRAINNET_LOG_DIR", str(tmp_path / "env"))
    monkeypatch.setenv("BRAINNET_PORT", "6123")
    cfg = load_config().with_env()
    assert cfg.output.log_dir == str(tmp_path / "env") and cfg.server.port == 6123
    assert main(["simulate", "--triads", "1"]) == 0
    assert (tmp_path / "env" / "triad01.jsonl").exists()
    monkeypatch.setenv("BRAINNET_PORT", "http")
    with pytest.raises(ConfigurationError):
        load_config().with_env()


# -- config ---------------------------------------------------------------------


def test_default_config_matches_study_design():
    cfg = load_config()
    assert cfg == HarnessConfig()
    s = cfg.session
    assert (s.n_trials, s.corruption_count, s.stim_gap, s.decision_window) == (16, 10, 8.0, 10.0)
    assert cfg.session.clock == "virtual"


def test_config_roundtrip(tmp_path):
    cfg = load_config()
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict(), indent=2))
    assert load_config(p) == cfg


@pytest.mark.parametrize("text,needle", [
    ('{\n  "session": {\n    "n_trails": 16\n  }\n}', ":3: session.n_trails: unknown field"),
    ('{\n  "agents": {"trust_prior": "high"}\n}', ":2: agents.trust_prior: expected a number"),
    ('{\n  "session": {"corruption_count": 20}\n}', "session: corruption_count"),
    ('{\n  "seed": 1,\n  "signal": {"target_amp": -1}\n}', ":3: signal"),
    ('{\n  "seed": 1\n  "triads": 2\n}', ":3:3: invalid JSON"),
    ('{"agents": {"receiver_policy": "psychic"}}', "agents"),
    ('{"nonsense": 1}', "nonsense: unknown section"),
])
def test_config_diagnostics(tmp_path, text, needle, capsys):
    p = tmp_path / "bad.json"
    p.write_text(text)
    with pytest.raises(ConfigurationError, match="bad.json") as info:
        load_config(p)
    assert needle in str(info.value)
    assert main(["simulate", str(p), "--out", str(tmp_path)]) == 3
    assert needle in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.json")]) == 3


# -- analyze -------------------------------------------------------------------------


def test_analyze_report(sim_dir, tmp_path, capsys):
    logs = sorted(str(p) for p in sim_dir.glob("triad*.jsonl"))
    assert main(["analyze", *logs, "--report", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert len(rep["triads"]) == 5 and len(rep["mi"]) == 10
    assert sorted({row["block"] for row in rep["learning"]}) == [1, 2, 3, 4]
    assert (tmp_path / "r_mi.csv").read_text().count("\n") == 11
    first = (tmp_path / "r.json").read_bytes()
    assert main(["analyze", *logs, "--report", str(tmp_path / "r.json")]) == 0
    assert (tmp_path / "r.json").read_bytes() == first


def test_analyze_exclusion(sim_dir, tmp_path):
    logs = sorted(str(p) for p in sim_dir.glob("triad*.jsonl"))
    assert main(["analyze", *logs, "--report", str(tmp_path / "r.json"), "--exclude", "1:8-12"]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["triads"][0]["n_trials"] == 11


def test_analyze_malformed_log_names_line(sim_dir, tmp_path, capsys):
    lines = (sim_dir / "triad01.jsonl").read_text().splitlines()
    lines[5] = lines[5][:40]
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["analyze", str(bad), "--report", str(tmp_path / "r.json")]) == 5
    assert "line 6" in capsys.readouterr().err


def test_analyze_unwritable_report(sim_dir, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["analyze", str(sim_dir / "triad01.jsonl"), "--report", str(blocker / "r.json")]) == 6
    assert "filesystem error" in capsys.readouterr().err


def test_analyze_missing_log(tmp_path):
    assert main(["analyze", str(tmp_path / "none.jsonl")]) == 6


# -- replay ------------------------------------------------------------------------


def test_replay_verdicts(sim_dir, tmp_path, capsys):
    assert main(["replay", str(sim_dir / "triad02.jsonl")]) == 0
    assert capsys.readouterr().out.strip() == "PASS"

    text = (sim_dir / "triad02.jsonl").read_text()
    lines = text.splitlines()
    i = next(k for k, ln in enumerate(lines) if '"type":"trial"' in ln and '"trial":5,' in ln)
    rec = json.loads(lines[i])
    rec["outcome"] = 1 - rec["outcome"]
    lines[i] = json.dumps(rec, sort_keys=True, separators=(",", ":"))
    flipped = tmp_path / "flipped.jsonl"
    flipped.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(flipped)]) == 1
    assert "trial 5" in capsys.readouterr().out

    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["replay", str(empty)]) == 1
    assert "FAIL: empty log" in capsys.readouterr().out
    header_only = tmp_path / "header.jsonl"
    header_only.write_text(lines[0] + "\n")
    assert main(["replay", str(header_only)]) == 1
    assert "empty log" in capsys.readouterr().out


# -- serve / client across processes ------------------------------------------------------------


def _cli(*args):
    return [sys.executable, "-m", "brainnet_sim", *args]


def _start_server(tmp_path, *extra):
    proc = subprocess.Popen(_cli("serve", "--port", "0", "--seed", "7", "--log", str(tmp_path / "tcp.jsonl"),
                                 "--accept-timeout", "30", *extra),
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    assert line.startswith("listening on "), line + proc.stderr.read()
    host, port = line.split()[-1].rsplit(":", 1)
    return proc, f"{host}:{port}"


def test_serve_and_clients_match_in_process(sim_dir, tmp_path):
    server, addr = _start_server(tmp_path)
    clients = []
    for role in ("sender", "sender", "receiver"):
        clients.append(subprocess.Popen(_cli("client", "--role", role, "--connect", addr),
                                        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True))
        time.sleep(0.3)
    assert [c.wait(60) for c in clients] == [0, 0, 0]
    assert server.wait(60) == 0
    tcp = SessionLog.read(tmp_path / "tcp.jsonl")
    local = SessionLog.read(sim_dir / "triad01.jsonl")
    assert tcp.decision_sequence() == local.decision_sequence()
    assert main(["replay", str(tmp_path / "tcp.jsonl")]) == 0


def test_client_without_server_reports_refusal(capsys):
    import socket

    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    assert main(["client", "--role", "sender", "--connect", f"127.0.0.1:{port}"]) == 4
    assert "refused" in capsys.readouterr().err


def test_serve_times_out_without_participants(tmp_path):
    proc, addr = _start_server(tmp_path, "--accept-timeout", "0.5")
    assert proc.wait(30) == 4
    assert "not all participants" in proc.stderr.read()


def test_module_entry_point_help():
    out = subprocess.run(_cli("--help"), capture_output=True, text=True, env=dict(os.environ))
    assert out.returncode == 0
    for cmd in ("simulate", "serve", "client", "analyze", "replay"):
        assert cmd in out.stdout
