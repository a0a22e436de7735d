"""Line-oriented session log: one JSON record per line, header first.

Record types, in order of appearance::

    header       schema, version, session_id, config snapshot, seeds
    calibration  Receiver threshold and stimulation levels
    plan         corruption victim and corrupted trials
    round        one per trial x round: state before/after, every Sender's
                 submitted and conveyed decision, stimulation ticks and
                 percepts, the Receiver decision, epoch band powers
    trial        one per trial: correct actions, outcome, trust snapshot
    end          final score; ``aborted`` marks a partial log
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LogFormatError
from .game import Decision, TrialState, apply_decision, score_trial

SCHEMA = "brainnet-sim/session-log"
SCHEMA_VERSION = 1


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class SessionLog:
    header: dict
    records: list = field(default_factory=list)

    def append(self, record: dict) -> None:
        last = self.last_tick
        tick = record.get("tick")
        if tick is not None and last is not None and tick < last:
            raise ValueError(f"non-monotone tick {tick} after {last}")
        self.records.append(record)

    @property
    def last_tick(self):
        for r in reversed(self.records):
            if "tick" in r:
                return r["tick"]
        return None

    @property
    def session_id(self) -> str:
        return self.header["session_id"]

    def of_type(self, kind: str) -> list:
        return [r for r in self.records if r["type"] == kind]

    @property
    def rounds(self) -> list:
        return self.of_type("round")

    @property
    def trials(self) -> list:
        return self.of_type("trial")

    @property
    def plan(self) -> dict:
        plans = self.of_type("plan")
        if not plans:
            raise LogFormatError("log has no corruption plan record")
        return plans[0]

    @property
    def victim(self) -> int:
        return int(self.plan["victim"])

    @property
    def end(self) -> dict | None:
        ends = self.of_type("end")
        return ends[0] if ends else None

    @property
    def complete(self) -> bool:
        end = self.end
        return end is not None and not end.get("aborted", False)

    def lines(self) -> list:
        return [dumps(self.header)] + [dumps(r) for r in self.records]

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path

    def decision_sequence(self) -> list:
        """Ordered (trial, round, sender submissions, conveyed, receiver) tuples."""
        seq = []
        for r in self.rounds:
            seq.append(
                (
                    r["trial"],
                    r["round"],
                    tuple(s["submitted"] for s in r["senders"]),
                    tuple(s["conveyed"] for s in r["senders"]),
                    r["receiver"]["decision"],
                )
            )
        return seq

    @classmethod
    def from_text(cls, text: str) -> "SessionLog":
        lines = text.splitlines()
        if not lines or not lines[0].strip():
            raise LogFormatError("empty log", line=1)
        parsed = []
        for no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"invalid JSON ({exc.msg})", line=no) from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise LogFormatError("record lacks a 'type' field", line=no)
            parsed.append((no, rec))
        no, header = parsed[0]
        if header.get("type") != "header" or header.get("schema") != SCHEMA:
            raise LogFormatError("first line is not a session-log header", line=no)
        if header.get("version") != SCHEMA_VERSION:
            raise LogFormatError(f"unsupported log version {header.get('version')!r}", line=no)
        log = cls(header)
        for no, rec in parsed[1:]:
            if rec["type"] not in {"calibration", "plan", "round", "trial", "end"}:
                raise LogFormatError(f"unknown record type {rec['type']!r}", line=no)
            try:
                log.append(rec)
            except ValueError as exc:
                raise LogFormatError(str(exc), line=no) from None
        return log

    @classmethod
    def read(cls, path) -> "SessionLog":
        return cls.from_text(Path(path).read_text())


@dataclass
class ReplayVerdict:
    passed: bool
    problems: list

    def __bool__(self):
        return self.passed

    def __str__(self):
        if self.passed:
            return "PASS"
        return "FAIL: " + "; ".join(self.problems)


def replay(log: SessionLog) -> ReplayVerdict:
    """Re-run every logged Receiver decision through the game rules."""
    problems = []
    rounds, trials = log.rounds, log.trials
    if not rounds or not trials:
        return ReplayVerdict(False, ["empty log: no trials recorded"])
    by_trial = {}
    for r in rounds:
        by_trial.setdefault(r["trial"], []).append(r)
    outcomes = {t["trial"]: t for t in trials}
    for idx, rs in sorted(by_trial.items()):
        rs = sorted(rs, key=lambda r: r["round"])
        if [r["round"] for r in rs] != [1, 2]:
            problems.append(f"trial {idx}: expected rounds [1, 2], found {[r['round'] for r in rs]}")
            continue
        try:
            state = TrialState.from_dict(rs[0]["state_before"])
            for r in rs:
                if TrialState.from_dict(r["state_before"]) != state:
                    problems.append(f"trial {idx} round {r['round']}: state_before mismatch")
                state = apply_decision(state, Decision(r["receiver"]["decision"]))
                if TrialState.from_dict(r["state_after"]) != state:
                    problems.append(f"trial {idx} round {r['round']}: state_after mismatch")
            outcome = score_trial(state)
        except Exception as exc:  # malformed state payloads
            problems.append(f"trial {idx}: {exc}")
            continue
        if idx not in outcomes:
            problems.append(f"trial {idx}: missing trial record")
        elif outcomes[idx]["outcome"] != outcome:
            problems.append(
                f"trial {idx}: logged outcome {outcomes[idx]['outcome']} but replay gives {outcome}"
            )
    end = log.end
    if end is not None and not end.get("aborted") and "score" in end:
        total = sum(t["outcome"] for t in trials)
        if end["score"] != total:
            problems.append(f"session score {end['score']} != sum of trial outcomes {total}")
    return ReplayVerdict(not problems, problems)
