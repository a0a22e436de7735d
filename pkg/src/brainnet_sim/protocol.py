"""Wire protocol, clocks and corruption planning.

Frames are a 4-byte big-endian length followed by a UTF-8 JSON payload
with sorted keys and no insignificant whitespace, so equal messages always
encode to identical bytes.
"""

from __future__ import annotations

import enum
import json
import socket
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FramingError, ProtocolVersionError
from .game import Decision

PROTOCOL_VERSION = 1
MAX_FRAME = 1 << 20
_HEADER = struct.Struct("!I")
TICKS_PER_SECOND = 1000


class MessageKind(enum.Enum):
    HELLO = "Hello"
    ROLE_ASSIGN = "RoleAssign"
    STATE_PUSH = "StatePush"
    DECISION_SUBMIT = "DecisionSubmit"
    STIM_DELIVER = "StimDeliver"
    FEEDBACK_PUSH = "FeedbackPush"
    SESSION_END = "SessionEnd"
    ERROR = "Error"


class IntensityClass(enum.Enum):
    ABOVE = "AboveThreshold"
    BELOW = "BelowThreshold"

    @classmethod
    def for_decision(cls, d: Decision) -> "IntensityClass":
        return cls.ABOVE if d is Decision.ROTATE else cls.BELOW


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    session_id: str
    trial_index: int = -1
    round: int = 0
    sender_id: int | None = None
    payload: dict = field(default_factory=dict)
    timestamp: int = 0

    def __post_init__(self):
        if not self.session_id:
            raise ValueError("every message needs a session_id")
        if self.kind is MessageKind.DECISION_SUBMIT:
            Decision(self.payload.get("decision"))
        if self.kind is MessageKind.STIM_DELIVER:
            IntensityClass(self.payload.get("intensity"))
            if self.sender_id is None:
                raise ValueError("StimDeliver must name its originating sender")

    @property
    def decision(self) -> Decision:
        return Decision(self.payload["decision"])

    def to_dict(self) -> dict:
        return {
            "v": PROTOCOL_VERSION,
            "kind": self.kind.value,
            "session_id": self.session_id,
            "trial_index": self.trial_index,
            "round": self.round,
            "sender_id": self.sender_id,
            "payload": self.payload,
            "timestamp": self.timestamp,
        }


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False).encode()


def encode(m: ProtocolMessage) -> bytes:
    body = _canonical(m.to_dict())
    if len(body) > MAX_FRAME:
        raise FramingError(f"message of {len(body)} bytes exceeds the {MAX_FRAME}-byte limit")
    return _HEADER.pack(len(body)) + body


def _from_body(body: bytes) -> ProtocolMessage:
    try:
        d = json.loads(body.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"undecodable payload: {exc}") from exc
    if d.get("v") != PROTOCOL_VERSION:
        raise ProtocolVersionError(f"unsupported protocol version {d.get('v')!r}")
    try:
        kind = MessageKind(d["kind"])
    except (KeyError, ValueError):
        raise ProtocolVersionError(f"unknown message kind {d.get('kind')!r}") from None
    try:
        return ProtocolMessage(
            kind=kind,
            session_id=d["session_id"],
            trial_index=d["trial_index"],
            round=d["round"],
            sender_id=d["sender_id"],
            payload=d["payload"],
            timestamp=d["timestamp"],
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise FramingError(f"malformed {kind.value} message: {exc}") from exc


def decode(frame: bytes) -> ProtocolMessage:
    """Inverse of :func:`encode` for exactly one complete frame."""
    if len(frame) < _HEADER.size:
        raise FramingError("truncated frame header")
    (length,) = _HEADER.unpack_from(frame)
    if length > MAX_FRAME:
        raise FramingError(f"declared length {length} exceeds the {MAX_FRAME}-byte limit")
    body = frame[_HEADER.size :]
    if len(body) != length:
        raise FramingError(f"frame declares {length} payload bytes but carries {len(body)}")
    return _from_body(body)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks, got = [], 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            if got == 0:
                raise EOFError("peer closed the connection")
            raise FramingError(f"connection closed after {got} of {n} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class Connection:
    """Length-prefixed message stream over a connected socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send(self, m: ProtocolMessage) -> None:
        self.sock.sendall(encode(m))

    def recv(self) -> ProtocolMessage:
        header = _recv_exact(self.sock, _HEADER.size)
        (length,) = _HEADER.unpack(header)
        if length > MAX_FRAME:
            raise FramingError(f"declared length {length} exceeds the {MAX_FRAME}-byte limit")
        return _from_body(_recv_exact(self.sock, length))

    def settimeout(self, seconds):
        self.sock.settimeout(seconds)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class VirtualClock:
    """Simulated time in integer milliseconds; advancing never blocks."""

    mode = "virtual"

    def __init__(self, start: int = 0):
        self.ticks = int(start)

    def now(self) -> int:
        return self.ticks

    def advance(self, seconds: float) -> int:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        self.ticks += int(round(seconds * TICKS_PER_SECOND))
        return self.ticks

    @property
    def elapsed_seconds(self) -> float:
        return self.ticks / TICKS_PER_SECOND


class RealtimeClock(VirtualClock):
    """Simulated time that also waits on the wall clock.

    ``time_scale`` shrinks the waits (1.0 paces the session faithfully).
    """

    mode = "realtime"

    def __init__(self, start: int = 0, time_scale: float = 1.0):
        super().__init__(start)
        self.time_scale = time_scale

    def advance(self, seconds: float) -> int:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        time.sleep(seconds * self.time_scale)
        return super().advance(seconds)


def make_clock(mode: str, time_scale: float = 1.0):
    if mode == "virtual":
        return VirtualClock()
    if mode == "realtime":
        return RealtimeClock(time_scale=time_scale)
    raise ConfigurationError(f"unknown clock mode {mode!r}")


def advance_clock(clock, duration: float):
    clock.advance(duration)
    return clock


@dataclass(frozen=True)
class CorruptionPlan:
    corrupted_trials: frozenset
    victim: int

    def to_dict(self) -> dict:
        return {"corrupted_trials": sorted(self.corrupted_trials), "victim": self.victim}


def plan_corruption(
    n_trials: int,
    corruption_count: int,
    bad_sender,
    rng: np.random.Generator,
    n_senders: int = 2,
) -> CorruptionPlan:
    """Pick the unreliable Sender and the trials in which it is overridden."""
    if not 0 <= corruption_count <= n_trials:
        raise ConfigurationError(
            f"corruption_count={corruption_count} must lie in [0, n_trials={n_trials}]"
        )
    if bad_sender == "random":
        victim = int(rng.integers(1, n_senders + 1))
    elif int(bad_sender) in range(1, n_senders + 1):
        victim = int(bad_sender)
    else:
        raise ConfigurationError(f"bad_sender must be 'random' or 1..{n_senders}")
    trials = rng.choice(n_trials, size=corruption_count, replace=False)
    return CorruptionPlan(frozenset(int(t) for t in trials), victim)


def corrupt(d: Decision, trial_index: int, plan: CorruptionPlan, sender_id: int, correct: Decision) -> Decision:
    """Force the victim's decision to the wrong answer in planned trials."""
    if sender_id == plan.victim and trial_index in plan.corrupted_trials:
        return correct.flipped()
    return d
