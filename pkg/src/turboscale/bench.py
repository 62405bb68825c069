"""Timing sweep of the exact DP against the greedy on random many-core instances."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .model import FrequencyLadder, PowerModel, ProcessorSpec
from .solver import SolveRequest, solve_exact_dp, solve_greedy

MAX_BUDGET_UNITS = 10_000
BENCH_COLUMNS = (
    "n_cores",
    "m",
    "budget_deciwatts",
    "exact_median_s",
    "greedy_median_s",
    "exact_objective_khz",
    "greedy_objective_khz",
    "gap_khz",
)
TIMING_COLUMNS = ("exact_median_s", "greedy_median_s")


def random_instance(rng: np.random.Generator, n: int, m: int, max_units: int = MAX_BUDGET_UNITS) -> SolveRequest:
    """Homogeneous n-core instance with m turbo levels and integer-deciwatt powers.

    The budget sits between the all-f_0 floor and the all-f_m cost, never
    above ``max_units`` deciwatts.
    """
    bus = 133_000
    base_ratio = int(rng.integers(16, 24))
    ladder = FrequencyLadder.from_khz([(base_ratio + j) * bus for j in range(m + 1)], 0, bus)
    floor = int(rng.integers(1, max(2, (max_units * 6 // 10) // n + 1)))
    spare = max(1, (max_units * 4 // 10) // max(1, n * m))
    increments = rng.integers(1, spare + 1, size=m)
    units = np.concatenate([[floor], floor + np.cumsum(increments)])
    lo, hi = n * floor, min(n * int(units[-1]), max_units)
    budget = int(rng.integers(lo, hi + 1)) if hi > lo else lo
    spec = ProcessorSpec(
        n_cores=n,
        pow_max_watts=budget / 10,
        t_crit_c=100.0,
        ladder=ladder,
        power=PowerModel(tuple(int(u) / 10 for u in units)),
    )
    return SolveRequest(spec, tuple(range(n)), budget / 10)


@dataclass(frozen=True)
class BenchRow:
    n_cores: int
    m: int
    budget_deciwatts: int
    exact_median_s: float
    greedy_median_s: float
    exact_objective_khz: int
    greedy_objective_khz: int

    @property
    def gap_khz(self) -> int:
        return self.exact_objective_khz - self.greedy_objective_khz

    def as_list(self) -> list:
        return [
            self.n_cores,
            self.m,
            self.budget_deciwatts,
            f"{self.exact_median_s:.6f}",
            f"{self.greedy_median_s:.6f}",
            self.exact_objective_khz,
            self.greedy_objective_khz,
            self.gap_khz,
        ]


def _timed(fn, req):
    t0 = time.perf_counter()
    res = fn(req)
    return time.perf_counter() - t0, res


def bench_case(req: SolveRequest, repetitions: int = 3) -> BenchRow:
    exact_t, greedy_t = [], []
    for _ in range(repetitions):
        t, exact = _timed(solve_exact_dp, req)
        exact_t.append(t)
        t, greedy = _timed(solve_greedy, req)
        greedy_t.append(t)
    return BenchRow(
        n_cores=req.n_active,
        m=req.spec.ladder.m,
        budget_deciwatts=round(req.budget * 10),
        exact_median_s=statistics.median(exact_t),
        greedy_median_s=statistics.median(greedy_t),
        exact_objective_khz=exact.objective_khz,
        greedy_objective_khz=greedy.objective_khz,
    )


def run_bench(n_list, m_list, repetitions: int = 3, seed: int = 0, granularity: int = 1) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for n in n_list:
        for m in m_list:
            req = random_instance(rng, n, m)
            if granularity != 1:
                req = SolveRequest(req.spec, req.active_cores, req.budget_watts, granularity)
            rows.append(bench_case(req, repetitions))
    return rows
