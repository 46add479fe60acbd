"""Command-line front end.

Subcommands: ``mine-bench``, ``pbft-table``, ``attack-prob`` and
``simulate``. Exit codes: 0 success, 1 safety failure, 2 usage error.
Every file written gets a ``<file>.manifest.json`` next to it recording
the command, resolved configuration, seed and tool version.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

from . import __version__
from .mining import collision_probability
from .security import AttackScenario, GRID_COLUMNS, grid_rows, grid_to_csv
from .sim import (SimConfig, TRACE_VERSION, records_to_csv, replay, run_experiment_1,
                  run_experiment_2, run_safety_campaign, write_trace)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def parse_int(text: str) -> int:
    """Integer with optional ``a^b`` (or ``a**b``) power notation."""
    t = text.strip().replace("**", "^")
    try:
        if "^" in t:
            base, exp = t.split("^", 1)
            return int(base) ** int(exp)
        return int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def parse_int_list(text: str) -> List[int]:
    return [parse_int(p) for p in text.split(",") if p.strip()]


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: Optional[int]
    outputs: List[str]
    argv: List[str]
    tool_version: str = __version__
    trace_version: str = TRACE_VERSION

    def write(self, path: str) -> str:
        mpath = path + ".manifest.json"
        with open(mpath, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return mpath


def write_manifest(path: str, command: str, config, seed, outputs: Sequence[str],
                   argv: Sequence[str]) -> str:
    return RunManifest(command, config, seed, list(outputs), list(argv)).write(path)


def _write(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


# flag name -> SimConfig field, for flags that override the config file
_OVERRIDES = {
    "seed": "seed", "miners": "miners", "trials": "trials", "difficulty": "difficulty",
    "difficulty_band": "difficulty_band", "hash_rate": "hash_rate",
    "poll_interval": "poll_interval", "remap_timeout": "remap_timeout",
    "latency": "latency", "drop_rate": "drop_rate", "real_hash": "real_hash",
    "runs": "runs", "verifiers": "verifiers", "max_step": "max_step",
    "heights": "heights", "exp2_trials": "exp2_trials",
}


def resolve_config(args) -> SimConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    try:
        return SimConfig.from_dict(base)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None


def cmd_mine_bench(args) -> int:
    cfg = resolve_config(args)
    res = run_experiment_1(cfg)
    for name, s in (("solo", res.solo), ("sharded", res.sharded)):
        print(f"{name:8s} mean={s.mean:.3f}s median={s.median:.3f}s "
              f"IQR=[{s.q1:.3f}, {s.q3:.3f}] ({s.iqr:.3f}s)")
    print(f"solo/sharded mean ratio={res.ratio:.3f} "
          f"welch t(log time)={res.t_stat:.2f} p={res.p_value:.3g}")
    _write(args.output, records_to_csv(res.records))
    write_manifest(args.output, "mine-bench", cfg.to_dict(), cfg.seed, [args.output], args.argv)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_pbft_table(args) -> int:
    if args.trials is not None:
        args.exp2_trials, args.trials = args.trials, None
    cfg = resolve_config(args)
    res = run_experiment_2(cfg)
    print(res.table())
    if args.output:
        _write(args.output, records_to_csv(res.records))
        write_manifest(args.output, "pbft-table", cfg.to_dict(), cfg.seed, [args.output],
                       args.argv)
    return EXIT_OK


def cmd_attack_prob(args) -> int:
    if args.collision:
        if not args.m:
            raise UsageError("--collision needs --m")
        lines = ["m,probability,form"]
        for m in args.m:
            lines.append(f"{m},{collision_probability(m, args.form)!r},{args.form}")
        text = "\n".join(lines) + "\n"
        config = {"m": [str(m) for m in args.m], "form": args.form}
    else:
        missing = [f for f in ("N", "T", "M", "z") if getattr(args, f) is None]
        if missing:
            raise UsageError("need --N --T --M --z (or --collision --m); missing "
                             + ", ".join("--" + f for f in missing))
        if args.mc_trials and args.mc_trials < 1000:
            raise UsageError("--mc-trials must be at least 1000")
        try:
            scenarios = [AttackScenario(n, t, m, z) for n, t, m, z in
                         itertools.product(args.N, args.T, args.M, args.z)]
        except ValueError as e:
            raise UsageError(str(e)) from None
        rows = grid_rows(scenarios, args.mc_trials or 0, args.seed)
        if not args.mc_trials:
            text = grid_to_csv(rows, [c for c in GRID_COLUMNS if not c.startswith("mc_")])
        else:
            text = grid_to_csv(rows)
        config = {"N": args.N, "T": args.T, "M": args.M, "z": args.z,
                  "mc_trials": args.mc_trials or 0}
    sys.stdout.write(text)
    if args.output:
        _write(args.output, text)
        write_manifest(args.output, "attack-prob", config, args.seed, [args.output], args.argv)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.replay:
        try:
            res = replay(args.replay)
        except (OSError, ValueError, KeyError, IndexError) as e:
            raise UsageError(f"cannot replay {args.replay}: {e}") from None
        print(f"replay matches recorded trace: {'yes' if res.matches else 'no'}")
        for p in res.problems:
            print(f"violation: {p}")
        return EXIT_OK if res.matches and not res.problems else EXIT_FAILURE
    if not args.config:
        raise UsageError("simulate needs --config or --replay")
    cfg = resolve_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    try:
        report = run_safety_campaign(cfg, trace_dir=args.out_dir)
    except ValueError as e:
        raise UsageError(str(e)) from None
    path = os.path.join(args.out_dir, "safety_report.json")
    _write(path, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    outputs = [path] + ([report.trace_path] if report.trace_path else [])
    if args.trace_run is not None:
        tpath = os.path.join(args.out_dir, f"run{args.trace_run}.trace.jsonl")
        write_trace(cfg, args.trace_run, tpath)
        outputs.append(tpath)
        print(f"recorded trace of run {args.trace_run}: {tpath}")
    write_manifest(path, "simulate", cfg.to_dict(), cfg.seed, outputs, args.argv)
    print(f"runs={report.runs} committed_heights={report.committed_heights} "
          f"aborted_runs={report.aborted_runs} delayed_vote_scenario="
          f"{'ok' if report.scenario_ok else 'FAILED'}")
    if report.ok:
        print("no safety violations")
        return EXIT_OK
    for i, problems in report.violations[:10]:
        for p in problems:
            print(f"run {i}: {p}")
    if report.trace_path:
        print(f"trace: {report.trace_path}")
    return EXIT_FAILURE


def _pair(kind):
    return lambda s: tuple(kind(x) for x in s.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dpow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def sim_flags(sp):
        sp.add_argument("--config", help="JSON SimConfig file; flags override its values")
        sp.add_argument("--seed", type=parse_int)

    mb = sub.add_parser("mine-bench", help="solo vs sharded mining in virtual time")
    sim_flags(mb)
    mb.add_argument("--miners", type=int)
    mb.add_argument("--trials", type=int)
    mb.add_argument("--difficulty", type=parse_int, help="fixed difficulty for every trial")
    mb.add_argument("--difficulty-band", type=_pair(float), metavar="LO,HI",
                    help="log2 range sampled log-uniformly per trial")
    mb.add_argument("--hash-rate", type=float, help="hashes per virtual second")
    mb.add_argument("--poll-interval", type=float)
    mb.add_argument("--remap-timeout", type=float)
    mb.add_argument("--latency", type=_pair(float), metavar="MIN,MAX")
    mb.add_argument("--real-hash", action="store_const", const=True,
                    help="count real Keccak hashes instead of sampling")
    mb.add_argument("--output", default="mine_bench.csv")
    mb.set_defaults(func=cmd_mine_bench)

    pt = sub.add_parser("pbft-table", help="verdict grid for six verifier groups")
    sim_flags(pt)
    pt.add_argument("--trials", type=int, help="columns in the grid")
    pt.add_argument("--output", help="optional per-trial CSV")
    pt.set_defaults(func=cmd_pbft_table)

    ap = sub.add_parser("attack-prob", help="collision and double-spend probabilities")
    ap.add_argument("--collision", action="store_true")
    ap.add_argument("--m", type=parse_int_list, help="message counts, e.g. 2^128,2^127")
    ap.add_argument("--form", choices=("approx", "exp"), default="approx")
    for f in ("N", "T", "M", "z"):
        ap.add_argument(f"--{f}", type=parse_int_list, help="value or comma list")
    ap.add_argument("--mc-trials", type=parse_int, default=0)
    ap.add_argument("--seed", type=parse_int, default=0)
    ap.add_argument("--output")
    ap.set_defaults(func=cmd_attack_prob)

    sm = sub.add_parser("simulate", help="seeded safety campaign or trace replay")
    sim_flags(sm)
    sm.add_argument("--runs", type=int)
    sm.add_argument("--verifiers", type=int)
    sm.add_argument("--drop-rate", type=float)
    sm.add_argument("--latency", type=_pair(float), metavar="MIN,MAX")
    sm.add_argument("--heights", type=int)
    sm.add_argument("--max-step", type=int)
    sm.add_argument("--out-dir", default="dpow-out")
    sm.add_argument("--trace-run", type=int, metavar="I", help="also record run I as a trace")
    sm.add_argument("--replay", metavar="TRACE")
    sm.set_defaults(func=cmd_simulate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"dpow: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
