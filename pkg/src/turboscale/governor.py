"""OSPM request policies and Turbo arbiters.

A governor turns one core's load into a P-state request, expressed as a
ladder index or :data:`~turboscale.model.INDICATOR` for the Turbo P-state.
An arbiter then decides what every active core actually runs at.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

from .errors import InfeasibleError, SpecError
from .model import INDICATOR, FrequencyLadder, ProcessorSpec, Violation
from .solver import SolveRequest, solve_exact_dp, solve_greedy


class GovernorKind(str, Enum):
    ONDEMAND = "ondemand"
    USERSPACE = "userspace"


class ArbiterKind(str, Enum):
    BASELINE = "baseline_hard_limit"
    OPTIMAL = "optimal_mckp"
    GREEDY = "greedy_mckp"


ARBITER_ALIASES = {
    "baseline": ArbiterKind.BASELINE,
    "optimal": ArbiterKind.OPTIMAL,
    "greedy": ArbiterKind.GREEDY,
    **{k.value: k for k in ArbiterKind},
}

DEFAULT_BIN_TABLE = {1: 2, 2: 1, 3: 1, 4: 1}


@dataclass(frozen=True)
class GovernorPolicy:
    kind: GovernorKind = GovernorKind.ONDEMAND
    # userspace only; "indicator" means the Turbo P-state of the ladder
    userspace_target_khz: Optional[int | str] = None
    up_threshold: float = 0.80
    down_threshold: float = 0.20

    def __post_init__(self):
        object.__setattr__(self, "kind", GovernorKind(self.kind))
        if not 0 < self.down_threshold < self.up_threshold <= 1:
            raise SpecError(
                [Violation("invalid-thresholds", f"need 0 < down ({self.down_threshold}) < up ({self.up_threshold}) <= 1")]
            )
        if self.kind is GovernorKind.USERSPACE and self.userspace_target_khz is None:
            raise SpecError([Violation("missing-userspace-target", "userspace governor needs a target")])


@dataclass(frozen=True)
class TurboArbiter:
    kind: ArbiterKind = ArbiterKind.BASELINE
    bin_table: Mapping[int, int] = field(default_factory=lambda: dict(DEFAULT_BIN_TABLE))
    bios_cap_khz: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ARBITER_ALIASES[self.kind] if isinstance(self.kind, str) else self.kind)
        table = {int(k): int(v) for k, v in self.bin_table.items()}
        object.__setattr__(self, "bin_table", dict(sorted(table.items())))
        vals = list(self.bin_table.values())
        if any(v < 0 for v in vals) or any(b > a for a, b in zip(vals, vals[1:])):
            raise SpecError([Violation("invalid-bin-table", f"bins must be >= 0 and non-increasing: {table}")])

    def bins_for(self, n_active: int) -> int:
        if n_active in self.bin_table:
            return self.bin_table[n_active]
        if not self.bin_table:
            return 0
        last = max(self.bin_table)
        if n_active > last:
            return min(1, self.bin_table[last])
        return self.bin_table[min(self.bin_table)]


def resolve_target(target: int | str, ladder: FrequencyLadder, turbo_enabled: bool = True) -> int:
    """Request for a userspace target kHz; only exported P-states are reachable."""
    if isinstance(target, str):
        if target != "indicator":
            raise ValueError(f"unknown userspace target {target!r}")
        target = ladder.indicator_khz
    if turbo_enabled and ladder.m > 0 and int(target) == ladder.indicator_khz:
        return INDICATOR
    return min(ladder.index_at_or_below(int(target)), ladder.guaranteed_index)


def ospm_request(
    policy: GovernorPolicy,
    utilization: Optional[float],
    current: int,
    ladder: FrequencyLadder,
    turbo_enabled: bool = True,
) -> int:
    """Next P-state request of one core.

    ``current`` is the core's previous request and ``utilization`` the load
    over the sampling window that just closed (None before the first sample,
    in which case ondemand holds).
    """
    if policy.kind is GovernorKind.USERSPACE:
        return resolve_target(policy.userspace_target_khz, ladder, turbo_enabled)
    if utilization is None:
        return current
    if not 0.0 <= utilization <= 1.0:
        raise ValueError(f"utilization {utilization} outside [0, 1]")
    if utilization >= policy.up_threshold:
        return INDICATOR if turbo_enabled and ladder.m > 0 else ladder.guaranteed_index
    if utilization <= policy.down_threshold:
        if current == INDICATOR:
            return ladder.guaranteed_index
        return max(current - 1, 0)
    return current


def arbitrate_baseline(
    arbiter: TurboArbiter,
    requests: Mapping[int, int],
    active: Sequence[int],
    spec: ProcessorSpec,
) -> dict[int, int]:
    """Hard-limit Turbo: a fixed bin count per active-core count, clamped by a BIOS cap.

    Utilization and the power model are never consulted.
    """
    ladder = spec.ladder
    g = ladder.guaranteed_index
    turbo_top = min(g + arbiter.bins_for(len(active)), ladder.top_index)
    if arbiter.bios_cap_khz is not None:
        turbo_top = min(turbo_top, max(ladder.index_at_or_below(arbiter.bios_cap_khz), g))
    return {c: turbo_top if requests[c] == INDICATOR else requests[c] for c in active}


def arbitrate_optimal(
    arbiter: TurboArbiter,
    requests: Mapping[int, int],
    active: Sequence[int],
    spec: ProcessorSpec,
    budget: float,
    granularity_deciwatts: int = 1,
) -> dict[int, int]:
    """Grant Turbo by solving the power-capped assignment over the indicator requesters."""
    turbo = [c for c in active if requests[c] == INDICATOR]
    grants = {c: requests[c] for c in active if requests[c] != INDICATOR}
    fixed = round(sum(spec.power.watts(lvl) for lvl in grants.values()), 9)
    remaining = round(budget - fixed, 9)
    if fixed > budget or (turbo and remaining <= 0):
        raise InfeasibleError("infeasible: guaranteed floor exceeds budget")
    if turbo:
        solve = solve_exact_dp if arbiter.kind is ArbiterKind.OPTIMAL else solve_greedy
        result = solve(SolveRequest(spec, tuple(turbo), remaining, granularity_deciwatts))
        grants.update(result.assignment.granted_levels(spec))
    return {c: grants[c] for c in active}


def arbitrate(
    arbiter: TurboArbiter,
    requests: Mapping[int, int],
    active: Sequence[int],
    spec: ProcessorSpec,
    budget: float,
    granularity_deciwatts: int = 1,
) -> dict[int, int]:
    if arbiter.kind is ArbiterKind.BASELINE:
        return arbitrate_baseline(arbiter, requests, active, spec)
    return arbitrate_optimal(arbiter, requests, active, spec, budget, granularity_deciwatts)
