"""Command-line front end: ``popclock <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .experiments import ExperimentSpec, run_experiment, write_result
from .monitors import verify_phase_clock
from .phase_clock import make_params

SUBCOMMANDS = ("clock-run", "recovery", "majority", "epidemic", "polya", "verify")


def _seed_default() -> int:
    env = os.environ.get("POPCLOCK_SEED")
    return int(env) if env else 0


def _inputs(text: str) -> tuple[int, int, int]:
    parts = [int(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated counts A,B,U")
    return tuple(parts)


def _init(text: str) -> str:
    if text in ("homogeneous", "random") or text.startswith("file:"):
        return text
    raise argparse.ArgumentTypeError("expected homogeneous, random or file:PATH")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=128, help="population size")
    p.add_argument("--w", type=int, default=26, help="overlap parameter (hours)")
    p.add_argument("--c", type=int, default=6, help="robustness exponent")
    p.add_argument("--kappa", type=float, default=8.0,
                   help="minutes-per-hour multiplier; 0 selects 36*(c+4)")
    p.add_argument("--seed", type=int, default=None, help="master seed (fallback: $POPCLOCK_SEED, then 0)")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="popclock", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        _common(p)
        if name == "verify":
            p.add_argument("log", help="signal log: lines 'step,agent', or a clock-run jsonl with --keep-signals")
            p.add_argument("--t1", type=int, default=0)
            p.add_argument("--t2", type=int, default=None, help="interval end (default: last logged step)")
            p.add_argument("--trial", type=int, default=0, help="trial to check when LOG is a jsonl result")
            continue
        p.add_argument("--trials", type=int, default=1)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--phases", type=int, default=3)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--mode", choices=("cancel", "usd"), default="cancel")
        p.add_argument("--rate", type=float, default=0.0, help="input-change probability per interaction")
        p.add_argument("--symmetric-changes", action="store_true",
                       help="flip a random decided input instead of converting A to B")
        p.add_argument("--inputs", type=_inputs, default=None, help="A,B,U counts (polya: a,b,m)")
        p.add_argument("--init", type=_init, default="homogeneous" if name != "recovery" else "random")
        p.add_argument("--stride", type=int, default=None, help="sampling stride in interactions (default n)")
        p.add_argument("--step-cap", type=int, default=None)
        p.add_argument("--coupling", action="store_true", help="polya: also sample the protocol's adoption subphase")
        p.add_argument("--keep-signals", action="store_true", help="store the full signal log in trial records")
    return parser


def _verify(args: argparse.Namespace) -> int:
    if args.log.endswith(".jsonl"):
        with open(args.log, encoding="utf-8") as fh:
            objs = [json.loads(line) for line in fh if line.strip()]
        meta = next(o for o in objs if o.get("type") == "metadata")
        cp = meta["clock_params"]
        params = make_params(cp["n"], cp["c"], cp["w"], kappa_override=cp["kappa"])
        trial = next(o for o in objs if o.get("type") == "trial" and o["trial"] == args.trial)
        if "signal_log" not in trial:
            raise SystemExit("trial record has no signal_log; rerun with --keep-signals")
        log = [tuple(x) for x in trial["signal_log"]]
        t2 = args.t2 if args.t2 is not None else trial["steps"]
    else:
        params = make_params(args.n, args.c, args.w, kappa_override=args.kappa or None)
        log = []
        with open(args.log, encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if line:
                    t, a = line.split(",")
                    log.append((int(t), int(a)))
        t2 = args.t2 if args.t2 is not None else (log[-1][0] if log else 0)
    report = verify_phase_clock(log, params, (args.t1, t2), params.n)
    out = {"type": "phase_report", "clock_params": params.to_dict(), "interval": [args.t1, t2], **report.to_dict()}
    text = json.dumps(out) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if report.ok else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is None:
        args.seed = _seed_default()
    if args.command == "verify":
        return _verify(args)
    try:
        spec = ExperimentSpec(
            kind=args.command,
            n=args.n,
            w=args.w,
            c=args.c,
            kappa=args.kappa or None,
            seed=args.seed,
            trials=args.trials,
            phases=args.phases,
            steps=args.steps,
            mode="usd" if args.mode == "usd" else "cancel-broadcast",
            rate=args.rate,
            direction="symmetric" if args.symmetric_changes else "a-to-b",
            inputs=args.inputs,
            init=args.init,
            stride=args.stride,
            step_cap=args.step_cap,
            workers=args.workers,
            coupling=args.coupling,
            keep_signals=args.keep_signals,
        )
    except ValueError as exc:
        print(f"popclock: {exc}", file=sys.stderr)
        return 2
    result = run_experiment(spec)
    text = write_result(result, args.out, args.format)
    if not args.out:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
