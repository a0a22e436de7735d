"""Command-line harness: ``brainnet-sim {simulate,serve,client,analyze,replay}``.

Exit codes:

    0  success
    1  replay verdict FAIL, or a client was rejected by the server
    2  usage error
    3  configuration error
    4  protocol or network failure (includes aborted sessions)
    5  analysis failure or malformed session log
    6  filesystem error
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

from .analysis import report
from .config import RunManifest, load_config
from .errors import AnalysisError, ConfigurationError, LogFormatError, ProtocolError, SessionAborted
from .protocol import TICKS_PER_SECOND
from .session import SessionServer, run_client, run_session, session_id_for
from .sessionlog import SessionLog, replay

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PROTOCOL = 4
EXIT_ANALYSIS = 5
EXIT_FS = 6

def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {n}")
    return n


def _host_port(text):
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _exclusion(text):
    """``TRIAD:FIRST-LAST`` with 1-based triads and 0-based trial indices."""
    try:
        triad, span = text.split(":")
        first, _, last = span.partition("-")
        lo, hi = int(first), int(last or first)
        return int(triad) - 1, range(lo, hi + 1)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected TRIAD:FIRST-LAST, got {text!r}") from None


def _load(args):
    cfg = load_config(args.config).with_env()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "triads", None) is not None:
        cfg = dataclasses.replace(cfg, triads=args.triads)
    clock = getattr(args, "clock", None)
    if clock:
        cfg = dataclasses.replace(cfg, session=dataclasses.replace(cfg.session, clock=clock))
    if getattr(args, "time_scale", None) is not None:
        cfg = dataclasses.replace(cfg, session=dataclasses.replace(cfg.session, time_scale=args.time_scale))
    out = getattr(args, "out", None)
    if out:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, log_dir=out))
    return cfg


def _log_name(triad: int) -> str:
    return f"triad{triad + 1:02d}.jsonl"


# -- subcommands ------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output.log_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.to_dict())
    t_run = time.perf_counter()
    for triad in range(cfg.triads):
        seeds = cfg.seeds_for(triad)
        t0 = time.perf_counter()
        slog = run_session(cfg.session, cfg.agents, seeds, session_id_for(seeds, triad))
        wall = time.perf_counter() - t0
        path = slog.write(out / _log_name(triad))
        manifest.add(triad + 1, path, seeds, slog.end["tick"] / TICKS_PER_SECOND, wall, slog.end["score"])
        print(f"triad {triad + 1}: {slog.end['score']}/{cfg.session.n_trials} cleared -> {path}")
    manifest.wall_seconds = round(time.perf_counter() - t_run, 6)
    print(f"manifest -> {manifest.write(out / 'manifest.json')}")
    if cfg.output.report:
        logs = [SessionLog.read(s["log"]) for s in manifest.sessions]
        print(f"report -> {', '.join(map(str, report(logs).write(cfg.output.report)))}")
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = _load(args)
    port = cfg.server.port if args.port is None else args.port
    seeds = cfg.seeds_for(args.triad - 1)
    try:
        server = SessionServer(cfg.session, cfg.agents, seeds, cfg.server.host, port,
                               session_id_for(seeds, args.triad - 1), accept_timeout=args.accept_timeout)
    except OSError as exc:
        raise ProtocolError(f"cannot listen on {cfg.server.host}:{port}: {exc.strerror or exc}") from None
    print(f"listening on {server.host}:{server.port}", flush=True)
    out = Path(args.log) if args.log else Path(cfg.output.log_dir) / _log_name(args.triad - 1)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        slog = server.serve()
    except SessionAborted as exc:
        if exc.log is not None:
            exc.log.write(out)
            print(f"partial log -> {out}", file=sys.stderr)
        raise
    slog.write(out)
    print(f"session {slog.session_id}: {slog.end['score']}/{cfg.session.n_trials} cleared -> {out}")
    return EXIT_OK


def cmd_client(args) -> int:
    host, port = args.connect
    try:
        return run_client(args.role, host, port)
    except ConnectionRefusedError:
        raise ProtocolError(f"cannot connect to {host}:{port}: connection refused (is the server running?)") from None
    except ConnectionResetError:
        raise ProtocolError(f"connection to {host}:{port} was reset by the server") from None
    except OSError as exc:
        raise ProtocolError(f"cannot reach {host}:{port}: {exc.strerror or exc}") from None


def cmd_analyze(args) -> int:
    logs = [SessionLog.read(p) for p in args.logs]
    exclude = {}
    for triad, trials in args.exclude or []:
        exclude.setdefault(triad, set()).update(trials)
    rep = report(logs, exclude=exclude)
    written = rep.write(args.report)
    acc = rep.tests["accuracy"]
    print(f"{len(logs)} sessions, mean accuracy {acc['mean']:.4f} "
          f"({acc['k']}/{acc['n']}, binomial p = {acc['binomial_p']:.3g})")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.log)
    text = path.read_text()
    if not text.strip():
        print("FAIL: empty log: file has no records")
        return EXIT_FAIL
    try:
        slog = SessionLog.from_text(text)
    except LogFormatError as exc:
        print(f"FAIL: {exc}")
        return EXIT_FAIL
    verdict = replay(slog)
    print(verdict)
    return EXIT_OK if verdict else EXIT_FAIL


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brainnet-sim", description="Simulated three-brain BrainNet sessions.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run triad sessions in one process")
    s.add_argument("config", nargs="?", help="JSON harness config (defaults if omitted)")
    s.add_argument("--triads", type=_positive_int, help="number of triads (sessions)")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--virtual", dest="clock", action="store_const", const="virtual", help="simulated time (default)")
    mode.add_argument("--realtime", dest="clock", action="store_const", const="realtime", help="pace gaps on the wall clock")
    s.add_argument("--time-scale", type=float, help="wall seconds per simulated second in realtime mode")
    s.add_argument("--seed", type=int, help="master seed")
    s.add_argument("--out", help="log directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("serve", help="host one session over TCP")
    s.add_argument("config", nargs="?")
    s.add_argument("--port", type=int, help="TCP port (0 picks a free one)")
    s.add_argument("--seed", type=int)
    s.add_argument("--triad", type=_positive_int, default=1, help="which triad's seeds to use")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--virtual", dest="clock", action="store_const", const="virtual")
    mode.add_argument("--realtime", dest="clock", action="store_const", const="realtime")
    s.add_argument("--time-scale", type=float)
    s.add_argument("--log", help="session log path")
    s.add_argument("--accept-timeout", type=float, default=60.0, help="seconds to wait for all participants")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("client", help="attach a simulated participant to a server")
    s.add_argument("--role", choices=("sender", "receiver"), required=True)
    s.add_argument("--connect", type=_host_port, required=True, metavar="HOST:PORT")
    s.set_defaults(func=cmd_client)

    s = sub.add_parser("analyze", help="statistics report over session logs")
    s.add_argument("logs", nargs="+")
    s.add_argument("--report", default="report.json", help="JSON report path; CSV tables go beside it")
    s.add_argument("--exclude", type=_exclusion, action="append", metavar="TRIAD:FIRST-LAST",
                   help="drop trials of one triad from every measure (repeatable)")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("replay", help="re-run a log through the game rules")
    s.add_argument("log")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SessionAborted, ProtocolError, EOFError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (AnalysisError, LogFormatError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except OSError as exc:
        where = f" {exc.filename}" if exc.filename else ""
        print(f"filesystem error:{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FS
