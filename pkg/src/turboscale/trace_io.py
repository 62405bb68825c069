"""Utilization traces: CSV parsing, synthetic generation, and output files.

Input CSV header is ``time_s,core_id,utilization`` with one row per core per
tick. Numbers are written with ``repr`` so that emitting and re-parsing a
trace is lossless.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import TraceError
from .model import data_path

INPUT_HEADER = ("time_s", "core_id", "utilization")
OUTPUT_HEADER = ("time_s", "core_id", "utilization", "granted_khz", "measured_khz", "package_watts")

BUILTIN_TRACES = {
    "tblastx-like": "tblastx_like.csv",
    "saturated-3core": "saturated_3core.csv",
}


@dataclass(frozen=True)
class Trace:
    times: tuple[float, ...]
    utilization: tuple[tuple[float, ...], ...]  # [tick][core]

    @property
    def n_ticks(self) -> int:
        return len(self.times)

    @property
    def n_cores(self) -> int:
        return len(self.utilization[0]) if self.utilization else 0

    def rows(self) -> Iterator[tuple[float, int, float]]:
        for t, utils in zip(self.times, self.utilization):
            for core, u in enumerate(utils):
                yield t, core, u

    def __len__(self) -> int:
        return self.n_ticks * self.n_cores


def _num(x: float) -> str:
    return repr(float(x))


def parse_trace(data: bytes | str) -> Trace:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    if not lines or tuple(h.strip() for h in lines[0].split(",")) != INPUT_HEADER:
        raise TraceError([(1, f"header must be {','.join(INPUT_HEADER)}")])

    problems: list[tuple[int, str]] = []
    groups: list[tuple[float, int, dict[int, float]]] = []  # (time, first line, core->u)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 3:
            problems.append((lineno, f"expected 3 fields, got {len(fields)}"))
            continue
        try:
            t, core, u = float(fields[0]), int(fields[1]), float(fields[2])
        except ValueError as exc:
            problems.append((lineno, f"unparsable value ({exc})"))
            continue
        if not math.isfinite(t):
            problems.append((lineno, f"time {fields[0].strip()} is not finite"))
            continue
        if core < 0:
            problems.append((lineno, f"negative core id {core}"))
            continue
        if not 0.0 <= u <= 1.0:
            problems.append((lineno, f"utilization {fields[2].strip()} outside [0, 1]"))
            continue
        if groups and t < groups[-1][0]:
            problems.append((lineno, f"time {t} earlier than {groups[-1][0]} (unsorted times)"))
            continue
        if not groups or t > groups[-1][0]:
            groups.append((t, lineno, {}))
        tick = groups[-1][2]
        if core in tick:
            problems.append((lineno, f"duplicate row for core {core} at time {t}"))
            continue
        tick[core] = u

    if not problems and not groups:
        problems.append((0, "empty trace"))
    cores = sorted(set().union(*(g[2] for g in groups))) if groups else []
    if cores and cores != list(range(len(cores))):
        problems.append((0, f"core ids must be 0..n-1, got {cores}"))
    for t, lineno, tick in groups:
        missing = [c for c in cores if c not in tick]
        if missing:
            problems.append((lineno, f"tick at time {t} missing cores {missing}"))
    if problems:
        raise TraceError(problems)
    return Trace(
        tuple(g[0] for g in groups),
        tuple(tuple(g[2][c] for c in cores) for g in groups),
    )


def emit_trace(trace: Trace) -> str:
    out = [",".join(INPUT_HEADER)]
    out.extend(f"{_num(t)},{c},{_num(u)}" for t, c, u in trace.rows())
    return "\n".join(out) + "\n"


def load_trace(source: str | Path) -> Trace:
    name = str(source)
    path = data_path(BUILTIN_TRACES[name]) if name in BUILTIN_TRACES else Path(name)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise TraceError([(0, f"cannot read {path}: {exc}")]) from exc
    return parse_trace(raw)


# --- synthetic workloads -----------------------------------------------------

PATTERNS = ("constant", "square", "phased_ramp", "random_walk")


@dataclass(frozen=True)
class WorkloadSpec:
    n_cores: int
    duration_ticks: int
    pattern: str = "constant"
    u: float = 1.0  # constant
    period: int = 4  # square
    hi: float = 1.0
    lo: float = 0.0
    step: float = 0.1  # random_walk
    seed: int = 0
    tick_seconds: float = 1.0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; choose from {PATTERNS}")
        if self.n_cores < 1 or self.duration_ticks < 1:
            raise ValueError("n_cores and duration_ticks must be >= 1")
        if self.period < 1 or self.tick_seconds <= 0 or self.step < 0:
            raise ValueError("period >= 1, tick_seconds > 0 and step >= 0 required")
        for name in ("u", "hi", "lo"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def generate_trace(spec: WorkloadSpec) -> Trace:
    n, ticks = spec.n_cores, spec.duration_ticks
    t_idx = np.arange(ticks)[:, None]
    if spec.pattern == "constant":
        util = np.full((ticks, n), spec.u)
    elif spec.pattern == "square":
        high = (t_idx % spec.period) < spec.period / 2
        util = np.where(high, spec.hi, spec.lo) * np.ones((1, n))
    elif spec.pattern == "phased_ramp":
        # triangle wave over the whole run, each core shifted by 1/n of it
        phase = (t_idx / ticks + np.arange(n)[None, :] / n) % 1.0
        util = 1.0 - np.abs(2.0 * phase - 1.0)
    else:
        rng = np.random.default_rng(spec.seed)
        steps = rng.uniform(-spec.step, spec.step, size=(ticks, n))
        util = np.empty((ticks, n))
        level = rng.uniform(0.0, 1.0, size=n)
        for t in range(ticks):
            level = np.clip(level + steps[t], 0.0, 1.0)
            util[t] = level
    util = np.clip(np.round(util, 3), 0.0, 1.0)
    times = tuple(round(i * spec.tick_seconds, 9) for i in range(ticks))
    return Trace(times, tuple(tuple(float(u) for u in row) for row in util))


def tblastx_like(seed: int = 7) -> Trace:
    """Four cores whose active count falls 4 -> 3 -> 2 -> 1 over 60 ticks.

    Busy cores wander between 0.3 and 1.0 so that load drops while the core
    stays active; retired cores go fully idle.
    """
    rng = np.random.default_rng(seed)
    ticks, n = 60, 4
    util = np.round(rng.uniform(0.3, 1.0, size=(ticks, n)), 3)
    for phase in range(4):
        rows = slice(phase * 15, (phase + 1) * 15)
        util[rows, n - phase :] = 0.0
    return Trace(tuple(float(t) for t in range(ticks)), tuple(tuple(float(u) for u in r) for r in util))


def saturated(n_cores: int = 4, busy: int = 3, ticks: int = 20) -> Trace:
    row = tuple(1.0 if c < busy else 0.0 for c in range(n_cores))
    return Trace(tuple(float(t) for t in range(ticks)), (row,) * ticks)


# --- simulation outputs ------------------------------------------------------


def _opt(x) -> str:
    return "" if x is None else str(x)


def format_sim_trace(rows: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTPUT_HEADER)
    for r in rows:
        w.writerow(
            [_num(r.time_s), r.core_id, _num(r.utilization), _opt(r.granted_khz), _opt(r.measured_khz), _num(r.package_watts)]
        )
    return buf.getvalue()


def emit_plot_data(rows: Sequence, guaranteed_khz: int, out_dir: str | Path) -> list[Path]:
    """Write ``core_<id>.csv`` series plus ``reference.csv`` holding f_0."""
    if not rows:
        raise ValueError("empty simulation trace")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_core: dict[int, list[str]] = defaultdict(list)
    for r in rows:
        per_core[r.core_id].append(f"{_num(r.time_s)},{_opt(r.measured_khz)},{_num(r.utilization)}")
    paths = []
    for core in sorted(per_core):
        p = out / f"core_{core}.csv"
        p.write_text("time_s,measured_khz,utilization\n" + "\n".join(per_core[core]) + "\n", encoding="utf-8")
        paths.append(p)
    ref = out / "reference.csv"
    ref.write_text(f"guaranteed_khz\n{guaranteed_khz}\n", encoding="utf-8")
    paths.append(ref)
    return paths


def dump_json(doc: Mapping, path: Optional[str | Path] = None) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text
