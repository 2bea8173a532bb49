"""
Command-line front end: single sessions, sweeps, naive-versus-refined
comparison tables and hash-family self-tests.

Exit codes: 0 success or Accept, 1 usage/config error, 2 protocol Abort.
"""
import argparse
import asyncio
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence, TextIO

from pydantic import ValidationError

from app.config import settings
from app.errors import ConfigError
from app.models import BiasedAttackParams, ProtocolConfig, RunSpec, SessionSummary, SweepAxis, Verdict
from app.privacy import check_universality
from app.protocol import run_session
from app.rng import RandomStream, entropy_seed
from app.session_manager import save_sessions
from app.sweep import COMPARE_COLUMNS, compare, sweep, sweep_columns, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2

# flag destination -> ProtocolConfig field
CONFIG_FLAGS = {
    "n": "n",
    "epsilon": "epsilon",
    "epsilon_alice": "epsilon_alice",
    "epsilon_bob": "epsilon_bob",
    "e_max": "e_max",
    "m1": "m1",
    "m2": "m2",
    "s": "s",
    "eta": "eta",
    "seed": "seed",
    "delta": "delta",
    "confidence": "confidence",
    "block_size": "block_size",
}

DEFAULT_PAIRS = [(0.0, 0.0), (0.0, 0.09), (0.12, 0.12)]


class UsageError(Exception):
    """Invalid command-line input."""


def _protocol_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("protocol")
    group.add_argument("--config", type=Path, help="JSON file with ProtocolConfig fields (flags override it)")
    group.add_argument("--n", type=int, help="photon count N")
    group.add_argument("--epsilon", type=float, help="bias for both parties")
    group.add_argument("--epsilon-alice", type=float)
    group.add_argument("--epsilon-bob", type=float)
    group.add_argument("--e-max", type=float, help="maximal tolerable error rate")
    group.add_argument("--m1", type=int, help="rectilinear test-sample size")
    group.add_argument("--m2", type=int, help="diagonal test-sample size")
    group.add_argument("--s", type=int, help="privacy-amplification security parameter")
    group.add_argument("--eta", type=float, help="channel bit-flip probability")
    group.add_argument("--seed", type=int, help="64-bit master seed")
    group.add_argument("--delta", type=float, help="explicit estimation slack (default: Hoeffding)")
    group.add_argument("--confidence", type=float, help="confidence of the Hoeffding delta")
    group.add_argument("--block-size", type=int, help="reconciliation block size")
    group.add_argument("--eve-p1", type=float, help="Eve's rectilinear measurement probability")
    group.add_argument("--eve-p2", type=float, help="Eve's diagonal measurement probability")
    group.add_argument("--require-seed", action="store_true", help="fail instead of drawing an entropy seed")
    group.add_argument("--archive", type=Path, default=settings.archive_path, help="SQLite session archive")
    group.add_argument("-o", "--output", type=Path, help="output file (default: stdout for tables)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkd-sift", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--log-level", default=settings.log_level)
    commands = parser.add_subparsers(dest="command", required=True)
    parent = _protocol_parent()

    commands.add_parser("run", parents=[parent], help="run one session and write its transcript (default transcript.json)")

    sweep_cmd = commands.add_parser("sweep", parents=[parent], help="sweep parameters and tabulate sessions")
    sweep_cmd.add_argument("--axis", action="append", default=[], metavar="NAME:START:STOP:STEPS[:SCALE]",
                           help="sweep axis; repeat for a grid")
    sweep_cmd.add_argument("--trials", type=int, default=1)
    sweep_cmd.add_argument("--threads", type=int, help="worker threads (default QKD_SIFT_THREADS)")
    sweep_cmd.add_argument("--format", choices=["csv", "json"], default="csv")

    compare_cmd = commands.add_parser("compare", parents=[parent], help="naive vs refined verdict table")
    compare_cmd.add_argument("--pairs", help="comma-separated p1:p2 pairs, e.g. 0:0.09,0.12:0.12")
    compare_cmd.add_argument("--trials", type=int, default=1)
    compare_cmd.add_argument("--threads", type=int)
    compare_cmd.add_argument("--format", choices=["csv", "json"], default="csv")

    hash_cmd = commands.add_parser("hash-check", help="verify 2-universality of the Toeplitz family")
    hash_cmd.add_argument("--n", type=int, default=4, help="hash input length")
    hash_cmd.add_argument("--k", type=int, default=2, help="hash output length")
    hash_cmd.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")
    hash_cmd.add_argument("--seed", type=int, default=0, help="seed for sampled mode")
    return parser


def parse_axis(text: str) -> SweepAxis:
    parts = text.split(":")
    if len(parts) not in (4, 5):
        raise UsageError(f"axis {text!r} must look like NAME:START:STOP:STEPS[:SCALE]")
    name, start, stop, steps = parts[:4]
    try:
        return SweepAxis(name=name, start=float(start), stop=float(stop), steps=int(steps),
                         scale=parts[4] if len(parts) == 5 else "linear")
    except ValueError as exc:
        raise UsageError(f"invalid axis {text!r}: {exc}") from exc


def parse_pairs(text: Optional[str]) -> list[tuple[float, float]]:
    if not text:
        return list(DEFAULT_PAIRS)
    pairs = []
    for item in text.split(","):
        try:
            p1, p2 = item.split(":")
            pairs.append((float(p1), float(p2)))
        except ValueError as exc:
            raise UsageError(f"pair {item!r} must look like P1:P2") from exc
    return pairs


def _load_config_file(path: Optional[Path]) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return data


def resolve_config(args: argparse.Namespace) -> ProtocolConfig:
    """File values, overridden by flags; the seed falls back to system entropy."""
    data = _load_config_file(args.config)
    data.pop("attack", None)
    flags = {field: getattr(args, dest) for dest, field in CONFIG_FLAGS.items() if getattr(args, dest) is not None}
    if "epsilon" in flags:
        data.pop("epsilon_alice", None)
        data.pop("epsilon_bob", None)
    data.update(flags)
    if "seed" not in data:
        if args.require_seed:
            raise UsageError("--seed is required with --require-seed")
        data["seed"] = entropy_seed()
        print(f"seed={data['seed']} drawn from system entropy", file=sys.stderr)
    return ProtocolConfig.model_validate(data)


def resolve_attack(args: argparse.Namespace) -> Optional[BiasedAttackParams]:
    file_attack = _load_config_file(args.config).get("attack") or {}
    values = dict(file_attack)
    if args.eve_p1 is not None:
        values["p1"] = args.eve_p1
    if args.eve_p2 is not None:
        values["p2"] = args.eve_p2
    if not values:
        return None
    return BiasedAttackParams.model_validate(values)


def build_spec(args: argparse.Namespace) -> RunSpec:
    if args.command == "hash-check":
        return RunSpec(command="hash-check", hash_n=args.n, hash_k=args.k, hash_mode=args.mode)
    spec: dict[str, Any] = {
        "command": args.command,
        "config": resolve_config(args),
        "attack": resolve_attack(args),
        "output": args.output,
        "archive": args.archive,
    }
    if args.command in ("sweep", "compare"):
        spec["trials"] = args.trials
        spec["format"] = args.format
    if args.command == "sweep":
        spec["axes"] = [parse_axis(text) for text in args.axis]
    if args.command == "compare":
        spec["pairs"] = parse_pairs(args.pairs)
    return RunSpec.model_validate(spec)


@contextmanager
def _open_output(path: Optional[Path]) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="" keeps csv's CRLF terminators intact
    with path.open("w", encoding="utf-8", newline="") as stream:
        yield stream


def _archive(spec: RunSpec, summaries: Sequence[SessionSummary]) -> None:
    if spec.archive is None:
        return
    ids = asyncio.run(save_sessions(spec.archive, summaries))
    logger.info("Archived %d sessions to %s", len(ids), spec.archive)


def format_summary(transcript) -> str:
    estimate = transcript.estimate
    e1 = "n/a" if estimate is None else f"{estimate.e1_hat:.4f}"
    e2 = "n/a" if estimate is None else f"{estimate.e2_hat:.4f}"
    reason = f" reason={transcript.abort_reason.value}" if transcript.abort_reason else ""
    return (
        f"seed={transcript.config.seed} naive={transcript.verdict_naive.value} "
        f"refined={transcript.verdict_refined.value} e1_hat={e1} e2_hat={e2} "
        f"sift={transcript.sift_fraction:.4f} final_key_len={transcript.final_key_len}{reason}"
    )


def cmd_run(spec: RunSpec) -> int:
    transcript = run_session(spec.config, spec.attack)
    output = spec.output or Path("transcript.json")
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(transcript.to_json(), encoding="utf-8")
    _archive(spec, [transcript.summary()])
    print(format_summary(transcript))
    return EXIT_OK if transcript.verdict_refined is Verdict.ACCEPT else EXIT_ABORT


def cmd_sweep(spec: RunSpec, threads: Optional[int] = None) -> int:
    rows, summaries = sweep(spec.config, spec.attack, spec.axes, spec.trials, threads)
    with _open_output(spec.output) as stream:
        if spec.format == "json":
            write_json(rows, stream)
        else:
            write_csv(rows, sweep_columns(spec.axes), stream)
    _archive(spec, summaries)
    return EXIT_OK


def cmd_compare(spec: RunSpec, threads: Optional[int] = None) -> int:
    rows, summaries = compare(spec.config, spec.pairs, spec.trials, threads)
    for row in rows:
        if not row["agree"]:
            logger.warning("Theory and simulation disagree at p1=%s p2=%s", row["p1"], row["p2"])
    with _open_output(spec.output) as stream:
        if spec.format == "json":
            write_json(rows, stream)
        else:
            write_csv(rows, COMPARE_COLUMNS, stream)
    _archive(spec, summaries)
    return EXIT_OK


def cmd_hash_check(spec: RunSpec, seed: int = 0) -> int:
    try:
        report = check_universality(spec.hash_n, spec.hash_k, spec.hash_mode, RandomStream(seed))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(
        f"n={report.n} k={report.k} mode={report.mode} worst_collision_fraction={report.worst_fraction:.6f} "
        f"bound={report.bound:.6f} {'PASS' if report.passed else 'FAIL'}"
    )
    return EXIT_OK if report.passed else EXIT_USAGE


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(name)s %(levelname)s %(message)s")

    try:
        return _dispatch(build_spec(args), args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        # also raised for sweep grid values outside a parameter's range
        for error in exc.errors():
            location = ".".join(str(part) for part in error["loc"]) or "config"
            print(f"error: {location}: {error['msg']}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(spec: RunSpec, args: argparse.Namespace) -> int:
    if spec.command == "run":
        return cmd_run(spec)
    if spec.command == "sweep":
        return cmd_sweep(spec, args.threads)
    if spec.command == "compare":
        return cmd_compare(spec, args.threads)
    return cmd_hash_check(spec, args.seed)


if __name__ == "__main__":
    sys.exit(main())
