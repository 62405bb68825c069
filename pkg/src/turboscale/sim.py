"""Discrete-time replay of utilization traces through governor and arbiter.

Every tick each core is classified asleep or active, active cores issue a
P-state request, the arbiter grants levels, and two fixed counters per core
advance: unhalted core cycles at the granted frequency and unhalted
reference cycles at the base operating frequency. Frequency is then
recovered from the counter deltas exactly as a measurement tool would.

Unhalted time is accounted in whole milliseconds (at least 1 ms for any
non-zero load), so that kHz x ms gives integer cycle counts and the
measured/granted ratio is exact.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .errors import MeasurementError, SimulationError, TraceError, TurboScaleError
from .governor import (
    ArbiterKind,
    GovernorKind,
    GovernorPolicy,
    TurboArbiter,
    arbitrate,
    ospm_request,
)
from .model import ProcessorSpec, ProcessorState
from .trace_io import Trace

HISTOGRAM_BIN_WATTS = 10.0


@dataclass(frozen=True)
class SimConfig:
    spec: ProcessorSpec
    policy: GovernorPolicy
    arbiter: TurboArbiter
    tick_seconds: float = 1.0
    budget_watts: Optional[float] = None
    rng_seed: int = 0
    idle_sleep_threshold: float = 0.0
    turbo_enabled: bool = True
    granularity_deciwatts: int = 1
    temperature_c: float = 45.0

    def __post_init__(self):
        if not self.tick_seconds > 0:
            raise ValueError("tick_seconds must be > 0")
        if not 0.0 <= self.idle_sleep_threshold <= 1.0:
            raise ValueError("idle_sleep_threshold must lie in [0, 1]")

    @property
    def budget(self) -> float:
        return self.spec.pow_max_watts if self.budget_watts is None else self.budget_watts


@dataclass(frozen=True)
class CounterSample:
    unhalted_core_cycles: int
    unhalted_ref_cycles: int
    base_ratio: int
    bus_clock_khz: int


@dataclass(frozen=True)
class SimTraceRow:
    time_s: float
    core_id: int
    utilization: float
    granted_khz: Optional[int]  # None while asleep
    measured_khz: Optional[int]  # None when the core was halted all tick
    package_watts: float


@dataclass(frozen=True)
class SimState:
    tick: int
    requests: tuple[int, ...]
    last_util: tuple[Optional[float], ...]
    counters: tuple[CounterSample, ...]
    processor: ProcessorState


def base_operating_frequency(base_ratio: int, bus_clock_khz: int) -> int:
    if base_ratio < 1:
        raise ValueError("invalid platform ratio")
    return base_ratio * bus_clock_khz


def measure_frequency(prev: CounterSample, curr: CounterSample) -> int:
    """Base frequency scaled by the unhalted core/reference cycle ratio, in kHz."""
    d_core = curr.unhalted_core_cycles - prev.unhalted_core_cycles
    d_ref = curr.unhalted_ref_cycles - prev.unhalted_ref_cycles
    if d_core < 0 or d_ref < 0:
        raise MeasurementError("counter went backwards")
    if d_ref == 0:
        raise MeasurementError("no reference cycles: core idle")
    base = base_operating_frequency(curr.base_ratio, curr.bus_clock_khz)
    # integer round-half-up of base * d_core / d_ref
    return (2 * base * d_core + d_ref) // (2 * d_ref)


def base_ratio_of(spec: ProcessorSpec) -> int:
    return max(1, round(spec.ladder.guaranteed_khz / spec.ladder.bus_clock_khz))


def initial_state(config: SimConfig) -> SimState:
    spec = config.spec
    zero = CounterSample(0, 0, base_ratio_of(spec), spec.ladder.bus_clock_khz)
    n = spec.n_cores
    return SimState(
        tick=0,
        requests=(spec.ladder.guaranteed_index,) * n,
        last_util=(None,) * n,
        counters=(zero,) * n,
        processor=ProcessorState((None,) * n, config.temperature_c),
    )


def _unhalted_ms(utilization: float, tick_seconds: float) -> int:
    if utilization <= 0.0:
        return 0
    return max(1, math.floor(utilization * tick_seconds * 1000.0 + 0.5))


def advance_tick(
    state: SimState,
    config: SimConfig,
    utilization: Sequence[float],
    time_s: Optional[float] = None,
) -> tuple[SimState, list[SimTraceRow]]:
    spec = config.spec
    ladder = spec.ladder
    n = spec.n_cores
    if len(utilization) != n or any(not 0.0 <= u <= 1.0 for u in utilization):
        raise TraceError([(0, "trace row out of range")])
    if time_s is None:
        time_s = state.tick * config.tick_seconds

    thr = config.idle_sleep_threshold
    active = [c for c, u in enumerate(utilization) if u > 0.0 and not u < thr]

    requests = list(state.requests)
    for c in active:
        requests[c] = ospm_request(config.policy, state.last_util[c], requests[c], ladder, config.turbo_enabled)
    grants = arbitrate(
        config.arbiter,
        {c: requests[c] for c in active},
        active,
        spec,
        config.budget,
        config.granularity_deciwatts,
    )
    package_watts = round(math.fsum(spec.power.watts(lvl) for lvl in grants.values()), 9)

    base_khz = base_operating_frequency(base_ratio_of(spec), ladder.bus_clock_khz)
    counters = list(state.counters)
    rows = []
    for c in range(n):
        granted = grants.get(c)
        granted_khz = None if granted is None else ladder.levels[granted].freq_khz
        measured = None
        if granted is not None:
            ms = _unhalted_ms(utilization[c], config.tick_seconds)
            prev = counters[c]
            counters[c] = replace(
                prev,
                unhalted_core_cycles=prev.unhalted_core_cycles + granted_khz * ms,
                unhalted_ref_cycles=prev.unhalted_ref_cycles + base_khz * ms,
            )
            if ms:
                measured = measure_frequency(prev, counters[c])
        rows.append(SimTraceRow(time_s, c, utilization[c], granted_khz, measured, package_watts))

    new_state = SimState(
        tick=state.tick + 1,
        requests=tuple(requests),
        last_util=tuple(float(u) for u in utilization),
        counters=tuple(counters),
        processor=ProcessorState(tuple(grants.get(c) for c in range(n)), state.processor.temperature_c),
    )
    return new_state, rows


# --- whole runs -------------------------------------------------------------


@dataclass(frozen=True)
class SummaryStats:
    ticks: int
    n_cores: int
    governor: str
    arbiter: str
    budget_watts: float
    seed: int
    per_core_cycles: tuple[int, ...]
    mean_granted_khz: tuple[Optional[float], ...]
    total_granted_khz: int
    watts_histogram: Mapping[str, int]
    max_package_watts: float
    budget_violations: int
    performance_delta_pct: Optional[float] = None
    reference_cycles: Optional[int] = None

    @property
    def total_core_cycles(self) -> int:
        return sum(self.per_core_cycles)

    def to_dict(self) -> dict:
        return {
            "ticks": self.ticks,
            "n_cores": self.n_cores,
            "governor": self.governor,
            "arbiter": self.arbiter,
            "budget_watts": self.budget_watts,
            "seed": self.seed,
            "total_core_cycles": self.total_core_cycles,
            "per_core_cycles": list(self.per_core_cycles),
            "mean_granted_khz": list(self.mean_granted_khz),
            "total_granted_khz": self.total_granted_khz,
            "watts_histogram": dict(self.watts_histogram),
            "max_package_watts": self.max_package_watts,
            "budget_violations": self.budget_violations,
            "performance_delta_pct": self.performance_delta_pct,
            "reference_cycles": self.reference_cycles,
        }


@dataclass(frozen=True)
class SimResult:
    rows: list[SimTraceRow]
    summary: SummaryStats
    tick_freq_sums: tuple[int, ...] = field(repr=False)
    final_state: SimState = field(repr=False)


def performance_delta_pct(reference_cycles: int, run_cycles: int) -> float:
    """Percent reduction of ``run_cycles`` relative to ``reference_cycles``."""
    if reference_cycles == 0:
        return 0.0
    return (reference_cycles - run_cycles) / reference_cycles * 100.0


def _histogram(watts: Sequence[float]) -> dict[str, int]:
    counts = Counter(math.floor(w / HISTOGRAM_BIN_WATTS) for w in watts)
    return {
        f"{b * HISTOGRAM_BIN_WATTS:g}-{(b + 1) * HISTOGRAM_BIN_WATTS:g}": counts[b] for b in sorted(counts)
    }


def run(config: SimConfig, trace: Trace, reference: Optional[SummaryStats] = None) -> SimResult:
    if trace.n_ticks == 0:
        raise TraceError([(0, "empty trace")])
    if trace.n_cores != config.spec.n_cores:
        raise TraceError([(0, f"trace has {trace.n_cores} cores, spec has {config.spec.n_cores}")])
    if any(b <= a for a, b in zip(trace.times, trace.times[1:])):
        raise TraceError([(0, "trace times must be strictly increasing")])

    state = initial_state(config)
    rows: list[SimTraceRow] = []
    freq_sums = []
    tick_watts = []
    granted_sum = [0] * config.spec.n_cores
    granted_ticks = [0] * config.spec.n_cores
    for i, (t, utils) in enumerate(zip(trace.times, trace.utilization)):
        try:
            state, tick_rows = advance_tick(state, config, utils, t)
        except TurboScaleError as exc:
            raise SimulationError(i, exc) from exc
        rows.extend(tick_rows)
        freq_sums.append(sum(r.granted_khz or 0 for r in tick_rows))
        tick_watts.append(tick_rows[0].package_watts)
        for r in tick_rows:
            if r.granted_khz is not None:
                granted_sum[r.core_id] += r.granted_khz
                granted_ticks[r.core_id] += 1

    cycles = tuple(c.unhalted_core_cycles for c in state.counters)
    total = sum(cycles)
    summary = SummaryStats(
        ticks=trace.n_ticks,
        n_cores=config.spec.n_cores,
        governor=config.policy.kind.value,
        arbiter=config.arbiter.kind.value,
        budget_watts=config.budget,
        seed=config.rng_seed,
        per_core_cycles=cycles,
        mean_granted_khz=tuple(s / k if k else None for s, k in zip(granted_sum, granted_ticks)),
        total_granted_khz=sum(freq_sums),
        watts_histogram=_histogram(tick_watts),
        max_package_watts=max(tick_watts),
        budget_violations=sum(1 for w in tick_watts if w > config.budget),
        performance_delta_pct=None if reference is None else performance_delta_pct(reference.total_core_cycles, total),
        reference_cycles=None if reference is None else reference.total_core_cycles,
    )
    return SimResult(rows, summary, tuple(freq_sums), state)


def compare(config_a: SimConfig, config_b: SimConfig, trace: Trace) -> dict:
    """Run both configs on one trace; B's delta is measured against A."""
    a = run(config_a, trace)
    b = run(config_b, trace, reference=a.summary)
    a_ge = sum(1 for x, y in zip(a.tick_freq_sums, b.tick_freq_sums) if x >= y)
    b_gt = len(a.tick_freq_sums) - a_ge
    return {
        "a": a,
        "b": b,
        "report": {
            "a": a.summary.to_dict(),
            "b": b.summary.to_dict(),
            "performance_delta_pct": b.summary.performance_delta_pct,
            "ticks_a_freq_ge_b": a_ge,
            "ticks_b_freq_gt_a": b_gt,
        },
    }


# --- config from spec-file extras -------------------------------------------


def config_from_spec(spec: ProcessorSpec, **overrides) -> SimConfig:
    """Build a SimConfig from the spec file's ``simulation`` block plus overrides.

    Overrides whose value is None are ignored, so CLI flags can be passed
    through unconditionally.
    """
    sim = dict(spec.extras.get("simulation", {}))
    gov = dict(sim.get("governor", {}))
    arb = dict(sim.get("arbiter", {}))
    o = {k: v for k, v in overrides.items() if v is not None}

    kind = o.get("governor", gov.get("kind", GovernorKind.ONDEMAND.value))
    target = o.get("target_khz", gov.get("target_khz"))
    if kind == GovernorKind.USERSPACE.value and target is None:
        target = "indicator"
    policy = GovernorPolicy(
        kind=kind,
        userspace_target_khz=target,
        up_threshold=float(o.get("up_threshold", gov.get("up_threshold", 0.80))),
        down_threshold=float(o.get("down_threshold", gov.get("down_threshold", 0.20))),
    )
    arb_kwargs = {"kind": o.get("arbiter", arb.get("kind", ArbiterKind.BASELINE.value))}
    bins = o.get("bins", arb.get("bin_table"))
    if bins is not None:
        arb_kwargs["bin_table"] = bins
    cap = o.get("cap_khz", arb.get("bios_cap_khz"))
    if cap is not None:
        arb_kwargs["bios_cap_khz"] = int(cap)
    if o.get("no_cap"):
        arb_kwargs["bios_cap_khz"] = None
    arbiter = TurboArbiter(**arb_kwargs)

    budget = o.get("budget", sim.get("budget_watts", spec.extras.get("budget_watts")))
    return SimConfig(
        spec=spec,
        policy=policy,
        arbiter=arbiter,
        tick_seconds=float(o.get("tick_seconds", sim.get("tick_seconds", 1.0))),
        budget_watts=None if budget is None else float(budget),
        rng_seed=int(o.get("seed", sim.get("seed", 0))),
        idle_sleep_threshold=float(o.get("idle_threshold", sim.get("idle_sleep_threshold", 0.0))),
        turbo_enabled=bool(o.get("turbo_enabled", sim.get("turbo_enabled", True))),
        granularity_deciwatts=int(o.get("granularity", sim.get("granularity_deciwatts", 1))),
    )
