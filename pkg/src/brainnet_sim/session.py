"""Session orchestration for one triad: two Senders and one Receiver.

Participants are message-driven clients.  The orchestrator owns the game
state and talks to every participant through an endpoint, either in the
same process (frames still go through encode/decode) or over TCP.  All
randomness lives in seeded generators owned by whoever uses them, so a
virtual-clock run is reproducible regardless of transport.
"""

from __future__ import annotations

import logging
import socket
import threading
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .agents import (
    PhospheneModel,
    SenderPolicy,
    TrustState,
    derive_stim_levels,
    make_policy,
    perceive,
    pest_calibrate,
    sender_decide,
    update_trust,
)
from .errors import CalibrationError, ConfigurationError, FramingError, ProtocolError, SessionAborted
from .game import (
    Decision,
    FallStage,
    Role,
    ViewModel,
    apply_decision,
    correct_action,
    generate_schedule,
    render_view,
    score_trial,
)
from .protocol import (
    PROTOCOL_VERSION,
    Connection,
    IntensityClass,
    MessageKind,
    ProtocolMessage,
    corrupt,
    decode,
    encode,
    make_clock,
    plan_corruption,
)
from .sessionlog import SCHEMA, SCHEMA_VERSION, SessionLog
from .ssvep import RECEIVER_FS, SENDER_FS, Frequency, SsvepDecoder, SsvepParams, synthesize_eeg

log = logging.getLogger(__name__)

CALIBRATION_ATTEMPTS = 3


@dataclass(frozen=True)
class SessionConfig:
    n_trials: int = 16
    bad_sender: object = "random"
    corruption_count: int = 10
    stim_gap: float = 8.0
    decision_window: float = 10.0
    clock: str = "virtual"
    time_scale: float = 1.0
    n_senders: int = 2
    reply_timeout: float = 30.0

    def __post_init__(self):
        if self.n_trials <= 0 or self.n_trials % 4:
            raise ConfigurationError("n_trials must be a positive multiple of 4")
        if not 0 <= self.corruption_count <= self.n_trials:
            raise ConfigurationError("corruption_count must not exceed n_trials")
        if self.n_senders < 1:
            raise ConfigurationError("a session needs at least one Sender")
        if self.bad_sender != "random" and self.bad_sender not in range(1, self.n_senders + 1):
            raise ConfigurationError("bad_sender must be 'random' or a Sender id")
        if self.stim_gap < 0 or self.decision_window < 1:
            raise ConfigurationError("stim_gap must be >= 0 and decision_window >= 1 s")
        if self.clock not in ("virtual", "realtime"):
            raise ConfigurationError("clock must be 'virtual' or 'realtime'")


@dataclass(frozen=True)
class AgentConfig:
    sender_error_rates: tuple = (0.05, 0.05)
    phosphene: PhospheneModel = PhospheneModel(0.60, 40.0, 0.01)
    receiver_policy: str = "sampled"
    trust_prior: float = 8.0  # Beta(8, 8): trust builds over several blocks
    ssvep: SsvepParams = SsvepParams()
    cursor_step: float = 0.1
    sender_fs: float = SENDER_FS
    receiver_fs: float = RECEIVER_FS

    def sender_policy(self, sender_id: int) -> SenderPolicy:
        rates = self.sender_error_rates
        return SenderPolicy(rates[min(sender_id - 1, len(rates) - 1)])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sender_error_rates"] = list(self.sender_error_rates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        d = dict(d)
        if "phosphene" in d:
            d["phosphene"] = PhospheneModel(**d["phosphene"])
        if "ssvep" in d:
            d["ssvep"] = SsvepParams(**d["ssvep"])
        if "sender_error_rates" in d:
            d["sender_error_rates"] = tuple(float(r) for r in d["sender_error_rates"])
        return cls(**d)


@dataclass(frozen=True)
class SessionSeeds:
    schedule: int
    corruption: int
    senders: tuple
    receiver: int

    @classmethod
    def derive(cls, master: int, triad: int = 0, n_senders: int = 2) -> "SessionSeeds":
        ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(triad),))
        words = ss.generate_state(3 + n_senders, dtype=np.uint32)
        w = [int(x) for x in words]
        return cls(schedule=w[0], corruption=w[1], receiver=w[2], senders=tuple(w[3:]))

    def sender(self, sender_id: int) -> int:
        return self.senders[sender_id - 1]

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule,
            "corruption": self.corruption,
            "senders": list(self.senders),
            "receiver": self.receiver,
        }


# -- participants -----------------------------------------------------------


class SenderClient:
    """Sender: attends an LED per screen update and reports the decoded decision."""

    role = Role.SENDER

    def __init__(self):
        self.sender_id = None
        self.session_id = None

    def _configure(self, m: ProtocolMessage):
        p = m.payload
        agents = AgentConfig.from_dict(p["agents"])
        self.sender_id = int(p["sender_id"])
        self.session_id = m.session_id
        self.policy = agents.sender_policy(self.sender_id)
        self.params = agents.ssvep
        self.fs = agents.sender_fs
        self.window = float(p["decision_window"])
        self.rng = np.random.default_rng(int(p["seed"]))
        self.decoder = SsvepDecoder(fs=self.fs, step=agents.cursor_step)

    def handle(self, m: ProtocolMessage) -> list:
        if m.kind is MessageKind.ROLE_ASSIGN:
            if not m.payload.get("accepted", False):
                return []
            self._configure(m)
            return [self._reply(m, MessageKind.HELLO, {"ready": True, "role": "sender"})]
        if m.kind is MessageKind.STATE_PUSH:
            view = ViewModel.from_dict(m.payload["view"])
            if view.fall_stage is FallStage.DROPPED:
                return []
            target = sender_decide(view, self.policy, self.rng)
            eeg = synthesize_eeg(target, self.window, self.params, self.rng, self.fs)
            res = self.decoder.decode(eeg)
            payload = {
                "decision": res.decision.value,
                "target": target.value,
                "votes": _votes(res.votes),
            }
            return [self._reply(m, MessageKind.DECISION_SUBMIT, payload)]
        return []

    def _reply(self, m, kind, payload):
        return ProtocolMessage(
            kind, m.session_id, m.trial_index, m.round, self.sender_id, payload, m.timestamp
        )


class ReceiverClient:
    """Receiver: calibrates, perceives pulses, decides, learns whom to trust."""

    role = Role.RECEIVER

    def __init__(self):
        self.session_id = None

    def _configure(self, m: ProtocolMessage):
        p = m.payload
        agents = AgentConfig.from_dict(p["agents"])
        self.n_senders = int(p["n_senders"])
        self.model = agents.phosphene
        self.params = agents.ssvep
        self.fs = agents.receiver_fs
        self.window = float(p["decision_window"])
        self.policy = make_policy(agents.receiver_policy)
        self.rng = np.random.default_rng(int(p["seed"]))
        self.decoder = SsvepDecoder(fs=self.fs, step=agents.cursor_step)
        self.trust = TrustState.initial(self.n_senders, agents.trust_prior)
        self.percepts = {}
        self.trial_percepts = []

    def calibrate(self) -> dict:
        last = None
        for attempt in range(1, CALIBRATION_ATTEMPTS + 1):
            try:
                threshold = pest_calibrate(self.model, self.rng)
                self.levels = derive_stim_levels(threshold, self.model, self.rng)
            except CalibrationError as exc:
                last = exc
                continue
            return {
                "threshold": threshold,
                "yes_intensity": self.levels.yes_intensity,
                "no_intensity": self.levels.no_intensity,
                "attempts": attempt,
            }
        raise CalibrationError(
            f"phosphene calibration failed {CALIBRATION_ATTEMPTS} times: {last}",
            partial_estimate=last.partial_estimate,
        )

    def handle(self, m: ProtocolMessage) -> list:
        if m.kind is MessageKind.ROLE_ASSIGN:
            if not m.payload.get("accepted", False):
                return []
            self._configure(m)
            cal = self.calibrate()
            return [self._reply(m, MessageKind.HELLO, {"ready": True, "role": "receiver", "calibration": cal})]
        if m.kind is MessageKind.STATE_PUSH:
            if m.round == 1:
                self.trial_percepts = []
            self.percepts = {}
            return []
        if m.kind is MessageKind.STIM_DELIVER:
            cls = IntensityClass(m.payload["intensity"])
            level = self.levels.yes_intensity if cls is IntensityClass.ABOVE else self.levels.no_intensity
            self.percepts[m.sender_id] = perceive(level, self.model, self.rng)
            if len(self.percepts) < self.n_senders:
                return []
            bits = tuple(self.percepts[i] for i in range(1, self.n_senders + 1))
            self.trial_percepts.append(bits)
            target = self.policy.choose(bits, self.trust, self.rng)
            eeg = synthesize_eeg(target, self.window, self.params, self.rng, self.fs)
            res = self.decoder.decode(eeg)
            payload = {
                "decision": res.decision.value,
                "target": target.value,
                "percepts": list(bits),
                "votes": _votes(res.votes),
            }
            return [self._reply(m, MessageKind.DECISION_SUBMIT, payload)]
        if m.kind is MessageKind.FEEDBACK_PUSH:
            correct = [Decision(c) for c in m.payload["correct_actions"]]
            per_sender = [
                [Decision.from_bit(bits[i]) for bits in self.trial_percepts]
                for i in range(self.n_senders)
            ]
            self.trust = update_trust(self.trust, per_sender, correct)
            return [self._reply(m, MessageKind.FEEDBACK_PUSH, {"ack": True, "trust": self.trust.to_dict()})]
        return []

    def _reply(self, m, kind, payload):
        return ProtocolMessage(kind, m.session_id, m.trial_index, m.round, None, payload, m.timestamp)


def _votes(votes) -> list:
    return [[v.p17, v.p15] for v in votes]


def make_client(role) -> SenderClient | ReceiverClient:
    role = Role(role)
    return SenderClient() if role is Role.SENDER else ReceiverClient()


# -- endpoints --------------------------------------------------------------


class LocalEndpoint:
    """In-process participant; every message still crosses the wire format."""

    def __init__(self, client):
        self.client = client
        self.inbox = deque()

    def send(self, m: ProtocolMessage) -> None:
        for reply in self.client.handle(decode(encode(m))):
            self.inbox.append(encode(reply))

    def recv(self, timeout=None) -> ProtocolMessage:
        if not self.inbox:
            raise ProtocolError("participant produced no reply")
        return decode(self.inbox.popleft())

    def close(self):
        pass


class RemoteEndpoint:
    """Participant on the far side of a TCP connection."""

    def __init__(self, conn: Connection):
        self.conn = conn

    def send(self, m: ProtocolMessage) -> None:
        self.conn.send(m)

    def recv(self, timeout=None) -> ProtocolMessage:
        self.conn.settimeout(timeout)
        try:
            return self.conn.recv()
        finally:
            self.conn.settimeout(None)

    def close(self):
        self.conn.close()


# -- orchestration ----------------------------------------------------------


def session_id_for(seeds: SessionSeeds, triad: int = 0) -> str:
    return f"s{seeds.schedule:08x}-{triad}"


class Orchestrator:
    """Runs the trial loop; the only owner of game and session state."""

    def __init__(self, config: SessionConfig, agents: AgentConfig, seeds: SessionSeeds, session_id: str | None = None):
        self.config = config
        self.agents = agents
        self.seeds = seeds
        self.session_id = session_id or session_id_for(seeds)
        self.clock = make_clock(config.clock, config.time_scale)
        self._late = set()

    def _msg(self, kind, trial=-1, rnd=0, sender_id=None, payload=None) -> ProtocolMessage:
        return ProtocolMessage(kind, self.session_id, trial, rnd, sender_id, payload or {}, self.clock.now())

    def _await(self, ep, kind, trial, rnd, who) -> ProtocolMessage | None:
        """Next reply of ``kind`` for (trial, round); None if it is late."""
        timeout = self.config.reply_timeout
        while True:
            try:
                m = ep.recv(timeout)
            except socket.timeout:
                log.warning("%s missed the reply deadline for trial %s round %s", who, trial, rnd)
                self._late.add((who, trial, rnd))
                return None
            if m.kind is MessageKind.ERROR:
                raise ProtocolError(f"{who} reported an error: {m.payload}")
            if (who, m.trial_index, m.round) in self._late:
                self._late.discard((who, m.trial_index, m.round))
                continue
            if m.kind is not kind or m.trial_index != trial or m.round != rnd:
                raise ProtocolError(
                    f"{who}: expected {kind.value} for trial {trial} round {rnd}, "
                    f"got {m.kind.value} for trial {m.trial_index} round {m.round}"
                )
            return m

    def header(self) -> dict:
        return {
            "type": "header",
            "schema": SCHEMA,
            "version": SCHEMA_VERSION,
            "session_id": self.session_id,
            "protocol_version": PROTOCOL_VERSION,
            "config": {k: v for k, v in asdict(self.config).items()},
            "agents": self.agents.to_dict(),
            "seeds": self.seeds.to_dict(),
        }

    def run(self, senders: dict, receiver) -> SessionLog:
        """``senders`` maps sender id (1-based) to endpoint."""
        slog = SessionLog(self.header())
        try:
            self._run(senders, receiver, slog)
        except (EOFError, OSError, FramingError, ProtocolError) as exc:
            slog.append({"type": "end", "tick": self.clock.now(), "aborted": True, "reason": str(exc)})
            raise SessionAborted(f"session {self.session_id} aborted: {exc}", log=slog) from exc
        return slog

    def _run(self, senders, receiver, slog):
        cfg = self.config
        ids = sorted(senders)
        common = {"decision_window": cfg.decision_window, "agents": self.agents.to_dict(), "accepted": True}
        for sid in ids:
            payload = dict(common, role="sender", sender_id=sid, seed=self.seeds.sender(sid))
            senders[sid].send(self._msg(MessageKind.ROLE_ASSIGN, sender_id=sid, payload=payload))
            self._await(senders[sid], MessageKind.HELLO, -1, 0, f"sender{sid}")
        payload = dict(common, role="receiver", n_senders=len(ids), seed=self.seeds.receiver)
        receiver.send(self._msg(MessageKind.ROLE_ASSIGN, payload=payload))
        hello = self._await(receiver, MessageKind.HELLO, -1, 0, "receiver")
        slog.append(dict(hello.payload["calibration"], type="calibration", tick=self.clock.now()))

        schedule = generate_schedule(self.seeds.schedule, cfg.n_trials)
        plan = plan_corruption(
            cfg.n_trials, cfg.corruption_count, cfg.bad_sender,
            np.random.default_rng(self.seeds.corruption), len(ids),
        )
        slog.append(dict(plan.to_dict(), type="plan", tick=self.clock.now()))

        score = 0
        for state in schedule:
            corrects = []
            for rnd in (1, 2):
                state, correct = self._round(state, rnd, senders, receiver, plan, slog)
                corrects.append(correct)
            outcome = score_trial(state)
            score += outcome
            trust = self._feedback(state, corrects, senders, receiver)
            slog.append({
                "type": "trial",
                "trial": state.trial_index,
                "tick": self.clock.now(),
                "requires_rotation": state.requires_rotation,
                "correct_actions": [c.value for c in corrects],
                "outcome": outcome,
                "trust": trust,
            })

        for ep in [senders[s] for s in ids] + [receiver]:
            ep.send(self._msg(MessageKind.SESSION_END, payload={"score": score}))
        slog.append({"type": "end", "tick": self.clock.now(), "score": score,
                     "n_trials": cfg.n_trials, "aborted": False})

    def _round(self, state, rnd, senders, receiver, plan, slog):
        cfg = self.config
        trial = state.trial_index
        tick0 = self.clock.now()
        before = state
        for sid, ep in sorted(senders.items()):
            ep.send(self._msg(MessageKind.STATE_PUSH, trial, rnd, sid,
                              {"view": render_view(state, Role.SENDER).to_dict()}))
        receiver.send(self._msg(MessageKind.STATE_PUSH, trial, rnd, None,
                                {"view": render_view(state, Role.RECEIVER).to_dict()}))

        correct = correct_action(state)
        entries = []
        for sid, ep in sorted(senders.items()):
            m = self._await(ep, MessageKind.DECISION_SUBMIT, trial, rnd, f"sender{sid}")
            submitted = m.decision if m is not None else Decision.NO_ROTATE
            conveyed = corrupt(submitted, trial, plan, sid, correct)
            entries.append({
                "sender_id": sid,
                "target": m.payload["target"] if m else None,
                "submitted": submitted.value,
                "conveyed": conveyed.value,
                "corrupted": sid == plan.victim and trial in plan.corrupted_trials,
                "timed_out": m is None,
                "votes": m.payload["votes"] if m else [],
            })
        self.clock.advance(cfg.decision_window)

        for k, e in enumerate(entries):
            if k:
                self.clock.advance(cfg.stim_gap)
            cls = IntensityClass.for_decision(Decision(e["conveyed"]))
            e["stim_tick"] = self.clock.now()
            e["intensity"] = cls.value
            receiver.send(self._msg(MessageKind.STIM_DELIVER, trial, rnd, e["sender_id"],
                                    {"intensity": cls.value, "prompt": f"Sender {e['sender_id']}"}))
        m = self._await(receiver, MessageKind.DECISION_SUBMIT, trial, rnd, "receiver")
        self.clock.advance(cfg.decision_window)
        decision = m.decision if m is not None else Decision.NO_ROTATE
        if m is not None:
            for e, bit in zip(entries, m.payload["percepts"]):
                e["percept"] = bool(bit)
        state = apply_decision(state, decision)
        slog.append({
            "type": "round",
            "trial": trial,
            "round": rnd,
            "tick": tick0,
            "state_before": before.to_dict(),
            "correct_action": correct.value,
            "senders": entries,
            "receiver": {
                "decision": decision.value,
                "target": m.payload["target"] if m else None,
                "timed_out": m is None,
                "decision_tick": self.clock.now(),
                "votes": m.payload["votes"] if m else [],
            },
            "state_after": state.to_dict(),
        })
        return state, correct

    def _feedback(self, state, corrects, senders, receiver):
        payload = {"outcome": score_trial(state), "correct_actions": [c.value for c in corrects]}
        trial = state.trial_index
        for sid, ep in sorted(senders.items()):
            view = render_view(state, Role.SENDER).to_dict()
            ep.send(self._msg(MessageKind.FEEDBACK_PUSH, trial, 2, sid, dict(payload, view=view)))
        view = render_view(state, Role.RECEIVER).to_dict()
        receiver.send(self._msg(MessageKind.FEEDBACK_PUSH, trial, 2, None, dict(payload, view=view)))
        ack = self._await(receiver, MessageKind.FEEDBACK_PUSH, trial, 2, "receiver")
        return ack.payload["trust"] if ack is not None else None


def run_session(
    config: SessionConfig = SessionConfig(),
    agents: AgentConfig = AgentConfig(),
    seeds: SessionSeeds | None = None,
    session_id: str | None = None,
) -> SessionLog:
    """One complete session with all three participants in this process."""
    seeds = seeds or SessionSeeds.derive(0)
    orch = Orchestrator(config, agents, seeds, session_id)
    senders = {sid: LocalEndpoint(SenderClient()) for sid in range(1, config.n_senders + 1)}
    return orch.run(senders, LocalEndpoint(ReceiverClient()))


# -- TCP --------------------------------------------------------------------


class SessionServer:
    """Accepts exactly one Receiver and ``n_senders`` Senders, then runs.

    Further clients are turned away with a rejected RoleAssign; clients
    speaking another protocol version get an Error message.
    """

    def __init__(self, config, agents, seeds, host="127.0.0.1", port=0, session_id=None, accept_timeout=60.0):
        self.orch = Orchestrator(config, agents, seeds, session_id)
        self.n_senders = config.n_senders
        self.accept_timeout = accept_timeout
        self.listener = socket.create_server((host, port))
        self.host, self.port = self.listener.getsockname()[:2]
        self.senders = {}
        self.receiver = None
        self._ready = threading.Event()
        self._closing = False
        self._lock = threading.Lock()
        self._acceptor = threading.Thread(target=self._accept_loop, daemon=True)

    @property
    def session_id(self):
        return self.orch.session_id

    def _reject(self, conn, kind, payload):
        try:
            conn.send(ProtocolMessage(kind, self.session_id, payload=payload))
        except OSError:
            pass
        conn.close()

    def _accept_loop(self):
        while not self._closing:
            try:
                sock, addr = self.listener.accept()
            except OSError:
                return
            conn = Connection(sock)
            try:
                conn.settimeout(10.0)
                hello = conn.recv()
                conn.settimeout(None)
            except ProtocolError as exc:
                self._reject(conn, MessageKind.ERROR, {"code": "protocol_version", "message": str(exc)})
                continue
            except (EOFError, OSError):
                conn.close()
                continue
            role = hello.payload.get("role")
            with self._lock:
                if hello.kind is not MessageKind.HELLO or role not in ("sender", "receiver"):
                    self._reject(conn, MessageKind.ERROR, {"code": "bad_hello", "message": "expected Hello with a role"})
                elif role == "sender" and len(self.senders) < self.n_senders:
                    self.senders[len(self.senders) + 1] = RemoteEndpoint(conn)
                elif role == "receiver" and self.receiver is None:
                    self.receiver = RemoteEndpoint(conn)
                else:
                    self._reject(conn, MessageKind.ROLE_ASSIGN,
                                 {"accepted": False, "role": role, "reason": f"{role} role already taken"})
                    continue
                log.info("%s connected from %s", role, addr)
                if self.receiver is not None and len(self.senders) == self.n_senders:
                    self._ready.set()

    def serve(self) -> SessionLog:
        self._acceptor.start()
        if not self._ready.wait(self.accept_timeout):
            self.close()
            raise SessionAborted("not all participants connected in time")
        try:
            return self.orch.run(dict(self.senders), self.receiver)
        finally:
            self.close()

    def close(self):
        self._closing = True
        try:
            self.listener.close()
        except OSError:
            pass
        for ep in list(self.senders.values()) + ([self.receiver] if self.receiver else []):
            ep.close()


def run_client(role, host: str, port: int, connect_timeout: float = 10.0) -> int:
    """Attach one simulated participant to a server; returns an exit status.

    0 after a clean SessionEnd, 1 when rejected or told about an error.
    """
    client = make_client(role)
    sock = socket.create_connection((host, port), timeout=connect_timeout)
    sock.settimeout(None)
    conn = Connection(sock)
    try:
        conn.send(ProtocolMessage(MessageKind.HELLO, "pending", payload={"role": client.role.value,
                                                                           "version": PROTOCOL_VERSION}))
        while True:
            try:
                m = conn.recv()
            except EOFError:
                log.error("server closed the connection")
                return 1
            if m.kind is MessageKind.ERROR:
                log.error("server error: %s", m.payload)
                return 1
            if m.kind is MessageKind.ROLE_ASSIGN and not m.payload.get("accepted", False):
                log.error("rejected: %s", m.payload.get("reason"))
                return 1
            for reply in client.handle(m):
                conn.send(reply)
            if m.kind is MessageKind.SESSION_END:
                return 0
    finally:
        conn.close()
