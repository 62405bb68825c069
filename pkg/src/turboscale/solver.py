"""Frequency-assignment optimizers for power-capped Turbo arbitration.

Each active core picks one of f_0..f_m (at most one level per core) and the
sum of per-core power must stay within the budget: a multiple-choice
knapsack. Power is discretized onto a grid of ``granularity_deciwatts``
units before any search, so every solver here agrees on feasibility.

Ties between equal-frequency assignments resolve to the lower total power,
then to the lexicographically smallest choice vector in core-id order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_CEILING, ROUND_FLOOR, Decimal
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InfeasibleError, InvariantBreach, LookupRowError, OracleGuardError, SpecError
from .model import Assignment, ProcessorSpec, Violation

ORACLE_GUARD = 10**7
_UNREACHABLE = -1
_CHUNK = 1 << 16


class Method(str, Enum):
    EXACT_DP = "exact_dp"
    BRUTE_FORCE = "brute_force"
    GREEDY = "greedy"
    LOOKUP = "lookup"


@dataclass(frozen=True)
class SolveRequest:
    spec: ProcessorSpec
    active_cores: tuple[int, ...]
    budget_watts: Optional[float] = None
    granularity_deciwatts: int = 1

    def __post_init__(self):
        object.__setattr__(self, "active_cores", tuple(int(c) for c in self.active_cores))
        bad = []
        if any(not 0 <= c < self.spec.n_cores for c in self.active_cores):
            bad.append(Violation("active-core-out-of-range", f"active cores {self.active_cores}"))
        if len(set(self.active_cores)) != len(self.active_cores):
            bad.append(Violation("duplicate-active-core", f"active cores {self.active_cores}"))
        if not self.budget > 0:
            bad.append(Violation("invalid-budget", f"budget_watts={self.budget_watts}"))
        if self.granularity_deciwatts < 1:
            bad.append(Violation("invalid-granularity", f"granularity={self.granularity_deciwatts}"))
        if bad:
            raise SpecError(bad)

    @property
    def budget(self) -> float:
        return self.spec.pow_max_watts if self.budget_watts is None else self.budget_watts

    @property
    def n_active(self) -> int:
        return len(self.active_cores)


@dataclass(frozen=True)
class SolveResult:
    assignment: Assignment
    objective_khz: int
    method: Method
    optimal: bool


@dataclass(frozen=True)
class _Instance:
    """Integer view of a request: per-choice kHz and power units."""

    values: np.ndarray  # int64, f_0..f_m in kHz
    units: np.ndarray  # int64, power of f_0..f_m in grid units
    budget_units: int

    @property
    def floor_units(self) -> int:
        return int(self.units.min())


def _to_units(watts: float, granularity: int, rounding) -> int:
    # Decimal(str()) keeps 13.2 W at exactly 132 deciwatts
    scaled = Decimal(str(watts)) * 10 / granularity
    return int(scaled.to_integral_value(rounding=rounding))


def _instance(req: SolveRequest) -> _Instance:
    g = req.granularity_deciwatts
    return _Instance(
        values=np.array(req.spec.ladder.choice_khz(), dtype=np.int64),
        units=np.array([_to_units(w, g, ROUND_CEILING) for w in req.spec.choice_watts()], dtype=np.int64),
        budget_units=_to_units(req.budget, g, ROUND_FLOOR),
    )


def _check_floor(req: SolveRequest, inst: _Instance) -> None:
    if req.n_active * inst.floor_units > inst.budget_units:
        raise InfeasibleError("infeasible: guaranteed floor exceeds budget")


def _result(req: SolveRequest, choice_vector: Sequence[int], method: Method) -> SolveResult:
    choices = {c: int(j) for c, j in zip(req.active_cores, choice_vector)}
    assignment = Assignment.build(req.spec, choices)
    if assignment.total_watts > req.budget:
        raise InvariantBreach(
            f"{method.value} returned {assignment.total_watts} W over budget {req.budget} W"
        )
    return SolveResult(
        assignment,
        assignment.total_freq_khz,
        method,
        optimal=method in (Method.EXACT_DP, Method.BRUTE_FORCE),
    )


def _empty(req: SolveRequest, method: Method) -> SolveResult:
    return _result(req, [], method)


# --- exact pseudo-polynomial DP ---------------------------------------------


def _suffix_tables(inst: _Instance, n: int, width: int) -> np.ndarray:
    """tables[i, w] = best kHz from cores i..n-1 using exactly w units (-1 if none)."""
    tables = np.full((n + 1, width), _UNREACHABLE, dtype=np.int64)
    tables[n, 0] = 0
    for i in range(n - 1, -1, -1):
        nxt = tables[i + 1]
        row = tables[i]
        for v, u in zip(inst.values.tolist(), inst.units.tolist()):
            if u >= width:
                continue
            src = nxt[: width - u]
            cand = np.where(src >= 0, src + v, _UNREACHABLE)
            np.maximum(row[u:], cand, out=row[u:])
    return tables


def _walk(tables: np.ndarray, inst: _Instance, n: int, target: int, weight: int) -> list[int]:
    """Lexicographically smallest choice vector reaching (target kHz, weight units)."""
    out = []
    for i in range(n):
        for j, (v, u) in enumerate(zip(inst.values.tolist(), inst.units.tolist())):
            rest = weight - u
            if rest >= 0 and target - v >= 0 and tables[i + 1, rest] == target - v:
                out.append(j)
                target -= v
                weight = rest
                break
        else:  # pragma: no cover - tables are consistent by construction
            raise InvariantBreach("dp reconstruction failed")
    return out


def solve_exact_dp(req: SolveRequest) -> SolveResult:
    """Optimal assignment by DP over (core, exact power units used)."""
    inst = _instance(req)
    _check_floor(req, inst)
    n = req.n_active
    if n == 0:
        return _empty(req, Method.EXACT_DP)
    width = min(inst.budget_units, n * int(inst.units.max())) + 1
    tables = _suffix_tables(inst, n, width)
    best = int(tables[0].max())
    weight = int(np.flatnonzero(tables[0] == best)[0])
    return _result(req, _walk(tables, inst, n, best, weight), Method.EXACT_DP)


# --- brute-force oracle ------------------------------------------------------


def solve_brute_force(req: SolveRequest) -> SolveResult:
    """Enumerate every per-core choice; same tie rule as :func:`solve_exact_dp`."""
    inst = _instance(req)
    n = req.n_active
    k = len(inst.values)
    total = k**n
    if total > ORACLE_GUARD:
        raise OracleGuardError(f"oracle size guard exceeded: {k}^{n} = {total} > {ORACLE_GUARD}")
    if n == 0:
        _check_floor(req, inst)
        return _empty(req, Method.BRUTE_FORCE)

    best_key = None
    best_vec = None
    shape = (k,) * n
    for start in range(0, total, _CHUNK):
        # C-order unravel walks the choice vectors lexicographically
        combos = np.stack(np.unravel_index(np.arange(start, min(start + _CHUNK, total)), shape), axis=1)
        vals = inst.values[combos].sum(axis=1)
        wts = inst.units[combos].sum(axis=1)
        ok = wts <= inst.budget_units
        if not ok.any():
            continue
        top = vals[ok].max()
        hits = np.flatnonzero(ok & (vals == top))
        light = hits[wts[hits] == wts[hits].min()][0]
        key = (int(top), -int(wts[light]))
        if best_key is None or key > best_key:
            best_key, best_vec = key, combos[light].tolist()
    if best_vec is None:
        raise InfeasibleError("infeasible: guaranteed floor exceeds budget")
    return _result(req, best_vec, Method.BRUTE_FORCE)


# --- greedy approximation ----------------------------------------------------


def _undominated(values: Sequence[int], units: Sequence[int]) -> list[int]:
    """Choice indices not beaten by another choice with <= power and >= kHz."""
    keep = []
    for j, (v, u) in enumerate(zip(values, units)):
        if not any(
            (u2 <= u and v2 >= v) and (u2 < u or v2 > v) for v2, u2 in zip(values, units)
        ):
            keep.append(j)
    return keep


def _upper_hull(points: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    """Concave upper hull of (units, kHz, j) sorted by units; collinear points kept."""
    hull: list[tuple[int, int, int]] = []
    for p in points:
        while len(hull) >= 2:
            (u1, v1, _), (u2, v2, _) = hull[-2], hull[-1]
            # drop hull[-1] if it lies strictly below the chord hull[-2] -> p
            if (v2 - v1) * (p[0] - u1) < (p[1] - v1) * (u2 - u1):
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def solve_greedy(req: SolveRequest) -> SolveResult:
    """Marginal-efficiency greedy from the all-f_0 assignment.

    Repeatedly applies the single-core upgrade with the best kHz-per-unit
    gain among the upgrades that still fit, until none fits. While the
    globally best upgrade fits, the walk follows the concave hull of each
    core's choices (the LP-relaxation order), which bounds the shortfall
    against the optimum by the largest single upgrade, f_m - f_0.
    """
    inst = _instance(req)
    _check_floor(req, inst)
    n = req.n_active
    if n == 0:
        return _empty(req, Method.GREEDY)
    values = inst.values.tolist()
    units = inst.units.tolist()
    keep = _undominated(values, units)
    start = min(keep, key=lambda j: (units[j], -values[j]))
    remaining = inst.budget_units - n * units[start]
    current = [start] * n

    # Phase 1: LP order along the hull, all cores share one choice set.
    hull = _upper_hull(sorted((units[j], values[j], j) for j in keep if units[j] >= units[start]))
    hull = hull[[p[2] for p in hull].index(start):]
    steps = []
    for s, (a, b) in enumerate(zip(hull, hull[1:])):
        du, dv = b[0] - a[0], b[1] - a[1]
        ratio = math.inf if du == 0 else dv / du
        steps.extend((-ratio, core, s, du, b[2]) for core in range(n))
    # per-core hull ratios never increase, so this order respects step order
    steps.sort()
    for _, core, _, du, j in steps:
        if du > remaining:
            break
        remaining -= du
        current[core] = j

    # Phase 2: best affordable upgrade to any undominated higher level.
    kv = np.array([values[j] for j in keep], dtype=np.float64)
    ku = np.array([units[j] for j in keep], dtype=np.int64)
    pos = np.array([keep.index(j) for j in current])
    while True:
        du = ku[None, :] - ku[pos][:, None]
        dv = kv[None, :] - kv[pos][:, None]
        ok = (dv > 0) & (du <= remaining)
        if not ok.any():
            break
        with np.errstate(divide="ignore"):
            ratio = np.where(du > 0, dv / np.maximum(du, 1), np.inf)
        ratio = np.where(ok, ratio, -np.inf)
        core, level = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        remaining -= int(du[core, level])
        pos[core] = level
    return _result(req, [keep[p] for p in pos.tolist()], Method.GREEDY)


# --- uniform-frequency table lookup -----------------------------------------


def solve_lookup_uniform(
    lookup_table: Mapping[tuple[int, int], float], n_active: int, budget_watts: float
) -> Optional[int]:
    """Highest turbo level j whose package watts for ``n_active`` cores fit the budget."""
    row = {j: w for (n, j), w in lookup_table.items() if n == n_active}
    if not row:
        raise LookupRowError(f"no table row for active-core count {n_active}")
    fitting = [j for j, w in row.items() if w <= budget_watts]
    return max(fitting) if fitting else None


# --- subset-sum decision form -----------------------------------------------


def subset_sum_feasible(req: SolveRequest, target_khz: int) -> Optional[Assignment]:
    """Least-power assignment with total kHz >= ``target_khz``, or None."""
    if target_khz < 0:
        raise ValueError("target_khz must be >= 0")
    inst = _instance(req)
    _check_floor(req, inst)
    n = req.n_active
    if n == 0:
        return _empty(req, Method.EXACT_DP).assignment if target_khz <= 0 else None
    width = min(inst.budget_units, n * int(inst.units.max())) + 1
    tables = _suffix_tables(inst, n, width)
    reach = np.flatnonzero(tables[0] >= target_khz)
    if reach.size == 0:
        return None
    weight = int(reach[0])
    best = int(tables[0, weight])
    return _result(req, _walk(tables, inst, n, best, weight), Method.EXACT_DP).assignment


SOLVERS = {
    Method.EXACT_DP: solve_exact_dp,
    Method.BRUTE_FORCE: solve_brute_force,
    Method.GREEDY: solve_greedy,
}
