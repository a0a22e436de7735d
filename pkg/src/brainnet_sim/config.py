"""Harness configuration and run manifests.

The config file is JSON.  Every section is optional; anything left out
takes the defaults below, which follow the original study (16 trials,
10 corrupted trials, 8 s between pulses, 10 s decision windows, 17 Hz for
Rotate and 15 Hz for NoRotate)::

    {
      "seed": 0,
      "triads": 5,
      "session": {"n_trials": 16, "corruption_count": 10, "bad_sender": "random",
                  "stim_gap": 8.0, "decision_window": 10.0, "clock": "virtual"},
      "agents":  {"sender_error_rates": [0.05, 0.05], "receiver_policy": "sampled",
                  "trust_prior": 8.0,
                  "phosphene": {"true_threshold": 0.6, "psychometric_slope": 40.0,
                                "lapse_rate": 0.01}},
      "signal":  {"target_amp": 1.5, "distractor_amp": 0.3, "noise_amp": 3.0,
                  "floor_amp": 5.0, "cursor_step": 0.1},
      "output":  {"log_dir": "logs", "report": null},
      "server":  {"host": "127.0.0.1", "port": 5050}
    }

``BRAINNET_PORT`` and ``BRAINNET_LOG_DIR`` override ``server.port`` and
``output.log_dir``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import platform
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .agents import PhospheneModel, make_policy
from .errors import ConfigurationError
from .session import AgentConfig, SessionConfig, SessionSeeds
from .ssvep import SsvepParams

ENV_PORT = "BRAINNET_PORT"
ENV_LOG_DIR = "BRAINNET_LOG_DIR"
DEFAULT_PORT = 5050

_AGENT_KEYS = {"sender_error_rates", "receiver_policy", "trust_prior", "phosphene"}
_SIGNAL_KEYS = {"cursor_step", "sender_fs", "receiver_fs"}


@dataclass(frozen=True)
class OutputConfig:
    log_dir: str = "logs"
    report: str | None = None


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT


@dataclass(frozen=True)
class HarnessConfig:
    seed: int = 0
    triads: int = 5
    session: SessionConfig = SessionConfig()
    agents: AgentConfig = AgentConfig()
    output: OutputConfig = OutputConfig()
    server: ServerConfig = ServerConfig()
    source: str | None = field(default=None, compare=False)

    def seeds_for(self, triad: int) -> SessionSeeds:
        return SessionSeeds.derive(self.seed, triad, self.session.n_senders)

    def to_dict(self) -> dict:
        agents = self.agents.to_dict()
        signal = dict(agents.pop("ssvep"))
        for k in _SIGNAL_KEYS:
            signal[k] = agents.pop(k)
        return {
            "seed": self.seed,
            "triads": self.triads,
            "session": dataclasses.asdict(self.session),
            "agents": agents,
            "signal": signal,
            "output": dataclasses.asdict(self.output),
            "server": dataclasses.asdict(self.server),
        }

    def with_env(self, environ=None) -> "HarnessConfig":
        environ = os.environ if environ is None else environ
        cfg = self
        if environ.get(ENV_PORT):
            try:
                port = int(environ[ENV_PORT])
            except ValueError:
                raise ConfigurationError(f"{ENV_PORT}={environ[ENV_PORT]!r} is not a port number") from None
            cfg = dataclasses.replace(cfg, server=dataclasses.replace(cfg.server, port=port))
        if environ.get(ENV_LOG_DIR):
            cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, log_dir=environ[ENV_LOG_DIR]))
        return cfg


# -- loading ----------------------------------------------------------------


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    """Turns a parsed JSON document into dataclasses with precise errors."""

    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, path: str, message: str):
        line = _line_of(self.text, path.rsplit(".", 1)[-1]) if self.text else None
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigurationError(f"{where}: {path}: {message}")

    def section(self, doc: dict, name: str) -> dict:
        sec = doc.get(name, {})
        if not isinstance(sec, dict):
            self.fail(name, f"expected an object, got {type(sec).__name__}")
        return sec

    def build(self, cls, values: dict, prefix: str, extra=()):
        known = {f.name for f in dataclasses.fields(cls)} | set(extra)
        for key in values:
            if key not in known:
                self.fail(f"{prefix}.{key}", f"unknown field (expected one of {', '.join(sorted(known))})")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name in values:
                kwargs[f.name] = self.coerce(values[f.name], getattr(cls(), f.name), f"{prefix}.{f.name}")
        try:
            return cls(**kwargs)
        except (ConfigurationError, ValueError, TypeError) as exc:
            self.fail(prefix, str(exc))

    def coerce(self, value, default, path):
        if isinstance(default, bool):
            if not isinstance(value, bool):
                self.fail(path, f"expected true/false, got {value!r}")
            return value
        if isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(path, f"expected a number, got {value!r}")
            return float(value)
        if isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(path, f"expected an integer, got {value!r}")
            return value
        if isinstance(default, tuple):
            if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
                self.fail(path, f"expected a list of numbers, got {value!r}")
            return tuple(float(v) for v in value)
        return value


def load_config(path=None, text: str | None = None) -> HarnessConfig:
    """Parse a harness config; ``path=None`` and ``text=None`` gives defaults."""
    source = str(path) if path is not None else "<config>"
    if text is None:
        if path is None:
            return HarnessConfig()
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"{source}: cannot read config: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{source}: top level must be an object")
    r = _Reader(text, source)
    top = {"seed", "triads", "session", "agents", "signal", "output", "server"}
    for key in doc:
        if key not in top:
            r.fail(key, f"unknown section (expected one of {', '.join(sorted(top))})")

    seed = r.coerce(doc.get("seed", 0), 0, "seed")
    triads = r.coerce(doc.get("triads", 5), 0, "triads")
    if seed < 0:
        r.fail("seed", "must be non-negative")
    if triads < 1:
        r.fail("triads", "must be at least 1")

    session = r.build(SessionConfig, r.section(doc, "session"), "session")

    agents_doc = r.section(doc, "agents")
    for key in agents_doc:
        if key not in _AGENT_KEYS:
            r.fail(f"agents.{key}", f"unknown field (expected one of {', '.join(sorted(_AGENT_KEYS))})")
    signal_doc = r.section(doc, "signal")
    ssvep_doc = {k: v for k, v in signal_doc.items() if k not in _SIGNAL_KEYS}
    ssvep = r.build(SsvepParams, ssvep_doc, "signal")
    base = AgentConfig()
    kwargs = {"ssvep": ssvep}
    if "phosphene" in agents_doc:
        ph = agents_doc["phosphene"]
        if not isinstance(ph, dict):
            r.fail("agents.phosphene", "expected an object")
        kwargs["phosphene"] = r.build(PhospheneModel, ph, "agents.phosphene")
    for key in _AGENT_KEYS - {"phosphene"}:
        if key in agents_doc:
            kwargs[key] = r.coerce(agents_doc[key], getattr(base, key), f"agents.{key}")
    for key in _SIGNAL_KEYS:
        if key in signal_doc:
            kwargs[key] = r.coerce(signal_doc[key], getattr(base, key), f"signal.{key}")
    try:
        agents = AgentConfig(**kwargs)
        if len(agents.sender_error_rates) not in (1, session.n_senders):
            raise ConfigurationError(f"need 1 or {session.n_senders} error rates")
        for sid in range(1, session.n_senders + 1):
            agents.sender_policy(sid)
        make_policy(agents.receiver_policy)
    except (ConfigurationError, ValueError) as exc:
        r.fail("agents", str(exc))

    output = r.build(OutputConfig, r.section(doc, "output"), "output")
    server = r.build(ServerConfig, r.section(doc, "server"), "server")
    if not 0 <= server.port <= 65535:
        r.fail("server.port", f"{server.port} is not a valid port")
    return HarnessConfig(seed, triads, session, agents, output, server, source=source)


# -- manifest ---------------------------------------------------------------


def component_versions() -> dict:
    from . import __version__

    return {
        "brainnet_sim": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config: dict
    versions: dict = field(default_factory=component_versions)
    sessions: list = field(default_factory=list)
    wall_seconds: float = 0.0

    def add(self, triad: int, path, seeds: SessionSeeds, virtual_seconds: float, wall_seconds: float, score: int):
        self.sessions.append({
            "triad": triad,
            "log": str(path),
            "sha256": sha256(path),
            "seeds": seeds.to_dict(),
            "virtual_seconds": virtual_seconds,
            "wall_seconds": round(wall_seconds, 6),
            "score": score,
        })

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))
