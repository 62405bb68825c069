"""Command-line entry point: ``turboscale {solve,simulate,compare,bench,gen-trace}``.

Exit codes: 0 success, 1 input or validation error, 2 infeasible instance,
3 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import model, sim, trace_io
from .bench import BENCH_COLUMNS, run_bench
from .errors import (
    InfeasibleError,
    InvariantBreach,
    SimulationError,
    TurboScaleError,
)
from .governor import ARBITER_ALIASES
from .solver import SOLVERS, Method, SolveRequest, solve_lookup_uniform

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 1, 2, 3

METHODS = {"exact": Method.EXACT_DP, "greedy": Method.GREEDY, "oracle": Method.BRUTE_FORCE, "lookup": Method.LOOKUP}


class CliError(TurboScaleError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _bins(text: str) -> dict[int, int]:
    try:
        pairs = (item.split(":") for item in text.split(",") if item.strip())
        return {int(k): int(v) for k, v in pairs}
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected bins like 1:2,2:1, got {text!r}") from exc


def _target(text: str):
    return text if text == "indicator" else int(text)


def _cap(text: str) -> Optional[int]:
    return None if text.lower() == "none" else int(text)


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _load_spec(source: str) -> model.ProcessorSpec:
    return model.check(model.load_spec(source))


# --- solve ------------------------------------------------------------------


def _active_cores(args, spec: model.ProcessorSpec) -> tuple[int, ...]:
    if args.cores is not None:
        return tuple(args.cores)
    if args.active is not None:
        if not 0 <= args.active <= spec.n_cores:
            raise CliError(f"--active must lie in 0..{spec.n_cores}")
        return tuple(range(args.active))
    if "active_cores" in spec.extras:
        return tuple(int(c) for c in spec.extras["active_cores"])
    return tuple(range(spec.n_cores))


def cmd_solve(args, out) -> int:
    spec = _load_spec(args.spec)
    cores = _active_cores(args, spec)
    budget = args.budget if args.budget is not None else spec.extras.get("budget_watts", spec.pow_max_watts)
    budget = float(budget)
    method = METHODS[args.method]
    w = csv.writer(out, lineterminator="\n")

    if method is Method.LOOKUP:
        table = spec.power.lookup_table
        if not table:
            raise CliError("spec has no lookup_table")
        j = solve_lookup_uniform(table, len(cores), budget)
        if j is None:
            out.write(f"# infeasible: no turbo level fits {budget} W for {len(cores)} active cores\n")
            return EXIT_INFEASIBLE
        khz = spec.ladder.levels[spec.ladder.ladder_index(j)].freq_khz
        watts = table[(len(cores), j)]
        w.writerow(["core_id", "chosen_khz", "watts"])
        for c in cores:
            w.writerow([c, khz, repr(round(watts / len(cores), 9))])
        out.write(f"# method=lookup level={j} chosen_khz={khz} table_watts={watts!r}\n")
        out.write(f"# objective_khz={khz * len(cores)} total_watts={watts!r} budget_watts={budget!r}\n")
        return EXIT_OK

    req = SolveRequest(spec, cores, budget, args.granularity)
    result = SOLVERS[method](req)
    w.writerow(["core_id", "chosen_khz", "watts"])
    for c, lvl in result.assignment.granted_levels(spec).items():
        w.writerow([c, spec.ladder.levels[lvl].freq_khz, repr(spec.power.watts(lvl))])
    out.write(f"# method={result.method.value} optimal={str(result.optimal).lower()}\n")
    out.write(
        f"# objective_khz={result.objective_khz} total_watts={result.assignment.total_watts!r} "
        f"budget_watts={budget!r}\n"
    )
    return EXIT_OK


# --- simulate / compare ------------------------------------------------------


def _overrides(args, **extra) -> dict:
    o = {
        "governor": args.governor,
        "target_khz": args.target_khz,
        "up_threshold": args.up,
        "down_threshold": args.down,
        "arbiter": args.arbiter,
        "bins": args.bins,
        "budget": args.budget,
        "turbo_enabled": args.turbo,
        "tick_seconds": args.tick,
        "seed": args.seed,
        "granularity": args.granularity,
        "idle_threshold": args.idle_threshold,
    }
    o.update(extra)
    return o


def _write_run(result: sim.SimResult, spec: model.ProcessorSpec, out_dir: Path, summary_path: Optional[Path]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.csv").write_text(trace_io.format_sim_trace(result.rows), encoding="utf-8")
    trace_io.emit_plot_data(result.rows, spec.ladder.guaranteed_khz, out_dir)
    trace_io.dump_json(result.summary.to_dict(), summary_path or out_dir / "summary.json")


def cmd_simulate(args, out) -> int:
    spec = _load_spec(args.spec)
    trace = trace_io.load_trace(args.trace)
    config = _side_config(spec, args, args.arbiter, args.cap_khz)
    result = sim.run(config, trace)
    _write_run(result, spec, Path(args.out_dir), Path(args.summary) if args.summary else None)
    s = result.summary
    out.write(
        f"ticks={s.ticks} total_core_cycles={s.total_core_cycles} total_granted_khz={s.total_granted_khz} "
        f"budget_violations={s.budget_violations}\n"
    )
    return EXIT_OK


def _side_config(spec, args, arbiter: Optional[str], cap: str):
    """Config for one run; ``cap`` is kHz, 'none', or 'spec' to keep the file's cap."""
    extra = {"arbiter": arbiter}
    if cap != "spec":
        parsed = _cap(cap)
        extra.update({"no_cap": True} if parsed is None else {"cap_khz": parsed})
    return sim.config_from_spec(spec, **_overrides(args, **extra))


def cmd_compare(args, out) -> int:
    spec = _load_spec(args.spec)
    trace = trace_io.load_trace(args.trace)
    cfg_a = _side_config(spec, args, args.arbiter_a, args.cap_a)
    cfg_b = _side_config(spec, args, args.arbiter_b, args.cap_b)
    res = sim.compare(cfg_a, cfg_b, trace)
    out_dir = Path(args.out_dir)
    _write_run(res["a"], spec, out_dir / "a", None)
    _write_run(res["b"], spec, out_dir / "b", None)
    trace_io.dump_json(res["report"], Path(args.summary) if args.summary else out_dir / "compare.json")
    rep = res["report"]
    for side in ("a", "b"):
        s = rep[side]
        out.write(
            f"{side}: arbiter={s['arbiter']} total_core_cycles={s['total_core_cycles']} "
            f"total_granted_khz={s['total_granted_khz']} budget_violations={s['budget_violations']}\n"
        )
    out.write(f"performance_delta_pct={rep['performance_delta_pct']!r}\n")
    out.write(f"ticks_a_freq_ge_b={rep['ticks_a_freq_ge_b']} ticks_b_freq_gt_a={rep['ticks_b_freq_gt_a']}\n")
    return EXIT_OK


# --- bench / gen-trace -------------------------------------------------------


def cmd_bench(args, out) -> int:
    if any(x < 1 for x in args.n) or any(x < 1 for x in args.m) or args.repetitions < 1:
        raise CliError("sizes and repetitions must be >= 1")
    rows = run_bench(args.n, args.m, args.repetitions, args.seed, args.granularity)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    _emit(buf.getvalue(), args.out, out)
    return EXIT_OK


def cmd_gen_trace(args, out) -> int:
    try:
        spec = trace_io.WorkloadSpec(
            n_cores=args.cores,
            duration_ticks=args.ticks,
            pattern=args.pattern,
            u=args.u,
            period=args.period,
            hi=args.hi,
            lo=args.lo,
            step=args.step,
            seed=args.seed,
            tick_seconds=args.tick,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _emit(trace_io.emit_trace(trace_io.generate_trace(spec)), args.out, out)
    return EXIT_OK


def _emit(text: str, path: Optional[str], out) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        out.write(text)


# --- parser ------------------------------------------------------------------


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", required=True, help="spec JSON path or bundled name (%s)" % ", ".join(model.BUILTIN_SPECS))
    p.add_argument("--trace", required=True, help="trace CSV path or bundled name (%s)" % ", ".join(trace_io.BUILTIN_TRACES))
    p.add_argument("--out-dir", required=True, help="directory for trace.csv, core_<id>.csv, reference.csv, summary")
    p.add_argument("--summary", help="summary JSON path (default: inside --out-dir)")
    p.add_argument("--governor", choices=["ondemand", "userspace"], help="OSPM governor")
    p.add_argument("--target-khz", type=_target, help="userspace target kHz, or 'indicator' for the Turbo P-state")
    p.add_argument("--up", type=float, help="ondemand up threshold (default 0.80)")
    p.add_argument("--down", type=float, help="ondemand down threshold (default 0.20)")
    p.add_argument("--bins", type=_bins, help="baseline bin table, e.g. 1:2,2:1,3:1,4:1")
    p.add_argument("--budget", type=float, help="package power budget in watts (default: spec)")
    p.add_argument("--turbo", type=_on_off, help="on/off: export the Turbo indicator P-state")
    p.add_argument("--tick", type=float, help="tick length in seconds (default 1.0)")
    p.add_argument("--seed", type=int, help="seed recorded in outputs (default 0)")
    p.add_argument("--granularity", type=int, help="DP power grid in deciwatts (default 1)")
    p.add_argument("--idle-threshold", type=float, help="utilization below which a core sleeps (default: only 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="turboscale", description="Power-capped Turbo frequency assignment")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one frequency-assignment instance")
    p.add_argument("--spec", required=True, help="spec/instance JSON path or bundled name")
    p.add_argument("--budget", type=float, help="power budget in watts (default: file budget or Pow_max)")
    p.add_argument("--active", type=int, help="number of active cores, taken as cores 0..N-1")
    p.add_argument("--cores", type=_int_list, help="explicit comma-separated active core ids")
    p.add_argument("--method", choices=list(METHODS), default="exact", help="solver (default exact)")
    p.add_argument("--granularity", type=int, default=1, help="DP power grid in deciwatts (default 1)")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; solvers are deterministic")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="replay a utilization trace")
    _add_sim_flags(p)
    p.add_argument("--arbiter", choices=sorted(ARBITER_ALIASES), help="Turbo arbiter")
    p.add_argument("--cap-khz", default="spec", help="baseline BIOS cap in kHz, 'none', or 'spec' (default)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run two arbiters on one trace; B's delta is relative to A")
    _add_sim_flags(p)
    p.add_argument("--arbiter-a", choices=sorted(ARBITER_ALIASES), default="optimal")
    p.add_argument("--arbiter-b", choices=sorted(ARBITER_ALIASES), default="baseline")
    p.add_argument("--cap-a", default="spec", help="BIOS cap for A in kHz, 'none', or 'spec' (default)")
    p.add_argument("--cap-b", default="spec", help="BIOS cap for B in kHz, 'none', or 'spec' (default)")
    p.set_defaults(func=cmd_compare, arbiter=None)

    p = sub.add_parser("bench", help="time exact DP and greedy on random instances")
    p.add_argument("--n", type=_int_list, default=[1, 10, 100, 1000], help="core counts (default 1,10,100,1000)")
    p.add_argument("--m", type=_int_list, default=[2, 4, 14], help="turbo level counts (default 2,4,14)")
    p.add_argument("--granularity", type=int, default=1, help="DP power grid in deciwatts (default 1)")
    p.add_argument("--repetitions", type=int, default=3, help="timed runs per size (default 3)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-trace", help="generate a synthetic utilization trace")
    p.add_argument("--cores", type=int, required=True)
    p.add_argument("--ticks", type=int, required=True)
    p.add_argument("--pattern", choices=trace_io.PATTERNS, default="constant")
    p.add_argument("--u", type=float, default=1.0, help="constant utilization")
    p.add_argument("--period", type=int, default=4, help="square wave period in ticks")
    p.add_argument("--hi", type=float, default=1.0, help="square wave high level")
    p.add_argument("--lo", type=float, default=0.0, help="square wave low level")
    p.add_argument("--step", type=float, default=0.1, help="random walk step bound")
    p.add_argument("--tick", type=float, default=1.0, help="tick length in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; here 2 means infeasible
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        return args.func(args, out)
    except InvariantBreach as exc:
        print(f"internal invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except InfeasibleError as exc:
        print(str(exc), file=sys.stderr)
        out.write(f"# {exc}\n")
        return EXIT_INFEASIBLE
    except SimulationError as exc:
        print(str(exc), file=sys.stderr)
        if isinstance(exc.cause, InvariantBreach):
            return EXIT_INVARIANT
        return EXIT_INFEASIBLE if isinstance(exc.cause, InfeasibleError) else EXIT_INPUT
    except (TurboScaleError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
