"""Domain types: frequency ladders, power models, processor specs, assignments.

Ladders are stored in ascending frequency order. ``levels[guaranteed_index]``
is the maximum guaranteed frequency f_0; the levels above it are the Turbo
levels f_1..f_m and the levels below it are ordinary DVFS operating points
that only the governors use. The descending P-state view that an OS sees is
produced by :func:`export_pstate_table`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import SpecError, VoltageUnavailable

DEFAULT_BUS_CLOCK_KHZ = 133_333
INDICATOR_OFFSET_KHZ = 1000

# Sentinel for an OSPM request of the Turbo indicator P-state.
INDICATOR = -1
# Assignment choice meaning "run at f_0".
STAY_GUARANTEED = 0


@dataclass(frozen=True)
class FrequencyLevel:
    index: int
    freq_khz: int
    is_turbo: bool
    voltage_v: Optional[float] = None


@dataclass(frozen=True)
class FrequencyLadder:
    levels: tuple[FrequencyLevel, ...]
    guaranteed_index: int
    bus_clock_khz: int = DEFAULT_BUS_CLOCK_KHZ

    @classmethod
    def from_khz(
        cls,
        freqs_khz: Sequence[int],
        guaranteed_index: int,
        bus_clock_khz: int = DEFAULT_BUS_CLOCK_KHZ,
        voltages_v: Optional[Sequence[float]] = None,
    ) -> "FrequencyLadder":
        if voltages_v is not None and len(voltages_v) != len(freqs_khz):
            raise ValueError("voltages_v must match freqs_khz in length")
        levels = tuple(
            FrequencyLevel(
                index=i,
                freq_khz=int(f),
                is_turbo=i > guaranteed_index,
                voltage_v=None if voltages_v is None else float(voltages_v[i]),
            )
            for i, f in enumerate(freqs_khz)
        )
        return cls(levels, guaranteed_index, int(bus_clock_khz))

    @classmethod
    def from_ratios(cls, ratios, guaranteed_ratio, bus_clock_khz=DEFAULT_BUS_CLOCK_KHZ):
        ratios = list(ratios)
        return cls.from_khz(
            [r * bus_clock_khz for r in ratios], ratios.index(guaranteed_ratio), bus_clock_khz
        )

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def guaranteed(self) -> FrequencyLevel:
        return self.levels[self.guaranteed_index]

    @property
    def guaranteed_khz(self) -> int:
        return self.guaranteed.freq_khz

    @property
    def m(self) -> int:
        """Number of Turbo levels above f_0."""
        return len(self.levels) - 1 - self.guaranteed_index

    @property
    def top_index(self) -> int:
        return len(self.levels) - 1

    @property
    def indicator_khz(self) -> int:
        return self.guaranteed_khz + INDICATOR_OFFSET_KHZ

    def choice_khz(self) -> list[int]:
        """Frequencies of f_0..f_m, the per-core choice set of the ILP."""
        return [lvl.freq_khz for lvl in self.levels[self.guaranteed_index:]]

    def ladder_index(self, choice: int) -> int:
        """Map an assignment choice j (0 = f_0, 1..m turbo) to a ladder index."""
        return self.guaranteed_index + choice

    def index_at_or_below(self, khz: float) -> int:
        """Highest ladder index whose frequency does not exceed ``khz`` (min 0)."""
        best = 0
        for lvl in self.levels:
            if lvl.freq_khz <= khz:
                best = lvl.index
        return best


@dataclass(frozen=True)
class PStateTableEntry:
    pstate_index: int
    reported_khz: int
    turbo_indicator: bool = False


@dataclass(frozen=True)
class PowerModel:
    per_core_watts: tuple[float, ...]
    k_proportionality: Optional[float] = None
    # (active_core_count, turbo level j) -> total package watts
    lookup_table: Optional[Mapping[tuple[int, int], float]] = None

    def watts(self, ladder_index: int) -> float:
        return self.per_core_watts[ladder_index]


@dataclass(frozen=True)
class ProcessorSpec:
    n_cores: int
    pow_max_watts: float
    t_crit_c: float
    ladder: FrequencyLadder
    power: PowerModel
    name: str = ""
    # Free-form extras carried through from the spec file (budget, active
    # cores, simulation defaults). Never read by the solvers directly.
    extras: Mapping = field(default_factory=dict, compare=False)

    def choice_watts(self) -> list[float]:
        """Per-core watts of f_0..f_m."""
        return list(self.power.per_core_watts[self.ladder.guaranteed_index:])


@dataclass(frozen=True)
class ProcessorState:
    per_core_level: tuple[Optional[int], ...]  # None = asleep
    temperature_c: float = 45.0

    @property
    def n_active(self) -> int:
        return sum(1 for lvl in self.per_core_level if lvl is not None)

    @property
    def n_sleeping(self) -> int:
        return len(self.per_core_level) - self.n_active

    @property
    def active_cores(self) -> tuple[int, ...]:
        return tuple(i for i, lvl in enumerate(self.per_core_level) if lvl is not None)

    def below_critical(self, spec: ProcessorSpec) -> bool:
        return self.temperature_c < spec.t_crit_c


@dataclass(frozen=True)
class Assignment:
    choices: Mapping[int, int]  # core_id -> j, 0 meaning stay at f_0
    total_watts: float
    total_freq_khz: int

    @classmethod
    def build(cls, spec: ProcessorSpec, choices: Mapping[int, int]) -> "Assignment":
        ladder = spec.ladder
        watts = [spec.power.watts(ladder.ladder_index(j)) for j in choices.values()]
        khz = [ladder.levels[ladder.ladder_index(j)].freq_khz for j in choices.values()]
        # round() keeps sums of decimal watt data comparable to decimal budgets
        return cls(dict(sorted(choices.items())), round(math.fsum(watts), 9), int(sum(khz)))

    def granted_levels(self, spec: ProcessorSpec) -> dict[int, int]:
        return {c: spec.ladder.ladder_index(j) for c, j in self.choices.items()}


def derive_power_from_voltage(level: FrequencyLevel, k: float) -> float:
    """Dynamic power of one core, ``k * V**2 * f``.

    ``k`` is in W / (V^2 Hz); the level's kHz are converted to Hz first.
    """
    if level.voltage_v is None:
        raise VoltageUnavailable("voltage unavailable")
    if not k > 0:
        raise ValueError("invalid constant")
    return k * level.voltage_v**2 * level.freq_khz * 1000.0


def export_pstate_table(ladder: FrequencyLadder, turbo_enabled: bool) -> list[PStateTableEntry]:
    """OS-visible P-state table, P_0 (highest) first.

    Real Turbo frequencies are never listed. With Turbo enabled and at least
    one Turbo level, P_0 is the indicator entry at f_0 + 1 MHz.
    """
    reported = [lvl.freq_khz for lvl in reversed(ladder.levels[: ladder.guaranteed_index + 1])]
    entries = []
    if turbo_enabled and ladder.m > 0:
        entries.append(PStateTableEntry(0, ladder.indicator_khz, True))
    for khz in reported:
        entries.append(PStateTableEntry(len(entries), khz, False))
    return entries


def parse_pstate_table(entries: Sequence[PStateTableEntry]) -> tuple[int, bool]:
    """Recover ``(guaranteed_index, turbo_present)`` from an exported table."""
    real = [e for e in entries if not e.turbo_indicator]
    return len(real) - 1, any(e.turbo_indicator for e in entries)


# --- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def _ladder_violations(ladder: FrequencyLadder) -> Iterable[Violation]:
    levels = ladder.levels
    if not levels:
        yield Violation("empty-ladder", "ladder has no levels")
        return
    if not 0 <= ladder.guaranteed_index < len(levels):
        yield Violation("guaranteed-index-out-of-range", f"guaranteed_index={ladder.guaranteed_index}")
        return
    if ladder.bus_clock_khz <= 0:
        yield Violation("invalid-bus-clock", f"bus_clock_khz={ladder.bus_clock_khz}")
    for pos, lvl in enumerate(levels):
        if lvl.index != pos:
            yield Violation("level-index-mismatch", f"level at position {pos} has index {lvl.index}")
        if lvl.freq_khz <= 0:
            yield Violation("non-positive-frequency", f"level {pos}: {lvl.freq_khz} kHz")
        if lvl.is_turbo != (pos > ladder.guaranteed_index):
            yield Violation("turbo-flag-mismatch", f"level {pos} is_turbo={lvl.is_turbo}")
        if lvl.voltage_v is not None and lvl.voltage_v < 0:
            yield Violation("negative-voltage", f"level {pos}: {lvl.voltage_v} V")
        if ladder.bus_clock_khz > 0 and lvl.freq_khz > 0:
            ratio = round(lvl.freq_khz / ladder.bus_clock_khz)
            # a truncated bus clock loses < 1 kHz per multiple
            if ratio < 1 or abs(lvl.freq_khz - ratio * ladder.bus_clock_khz) > ratio:
                yield Violation(
                    "off-bus-clock-grid",
                    f"level {pos}: {lvl.freq_khz} kHz is not a multiple of {ladder.bus_clock_khz} kHz",
                )
    for lo, hi in zip(levels, levels[1:]):
        if hi.freq_khz <= lo.freq_khz:
            yield Violation("non-ascending-ladder", f"levels {lo.index}->{hi.index} not strictly ascending")


def validate(spec: ProcessorSpec) -> list[Violation]:
    """Every invariant breach of ``spec``; an empty list means the spec is ok."""
    out: list[Violation] = []
    if spec.n_cores < 1:
        out.append(Violation("invalid-core-count", f"n_cores={spec.n_cores}"))
    if not spec.pow_max_watts > 0:
        out.append(Violation("invalid-power-limit", f"pow_max_watts={spec.pow_max_watts}"))
    if not spec.t_crit_c > 0:
        out.append(Violation("invalid-critical-temperature", f"t_crit_c={spec.t_crit_c}"))
    out.extend(_ladder_violations(spec.ladder))

    watts = spec.power.per_core_watts
    if len(watts) != len(spec.ladder.levels):
        out.append(
            Violation(
                "power/ladder length mismatch",
                f"{len(watts)} per-core watts for {len(spec.ladder.levels)} ladder levels",
            )
        )
    if any(not w > 0 for w in watts):
        out.append(Violation("non-positive-power", "all per-core watts must be > 0"))
    if any(b < a for a, b in zip(watts, watts[1:])):
        out.append(Violation("non-monotone power", "per-core watts decrease at a higher frequency"))
    k = spec.power.k_proportionality
    if k is not None and not k > 0:
        out.append(Violation("invalid-constant", f"k_proportionality={k}"))

    table = spec.power.lookup_table
    if table:
        if any(not w > 0 for w in table.values()):
            out.append(Violation("non-positive-table-watts", "lookup table watts must be > 0"))
        for (n, j), w in table.items():
            if not 1 <= j <= spec.ladder.m:
                out.append(Violation("table-level-out-of-range", f"turbo level {j} for {n} cores"))
            for nxt in ((n + 1, j), (n, j + 1)):
                if nxt in table and table[nxt] < w:
                    out.append(
                        Violation("non-monotone table", f"table[{nxt}]={table[nxt]} < table[{(n, j)}]={w}")
                    )
    return out


def check(spec: ProcessorSpec) -> ProcessorSpec:
    violations = validate(spec)
    if violations:
        raise SpecError(violations)
    return spec


# --- JSON schema ------------------------------------------------------------
#
# {
#   "name": str, "n_cores": int, "pow_max_watts": num, "t_crit_c": num,
#   "ladder": {"bus_clock_khz": int, "guaranteed_index": int,
#              "levels_khz": [int, ...], "voltages_v": [num, ...]?},
#   "power": {"per_core_watts": [num, ...], "k_proportionality": num?,
#             "lookup_table": [{"active_cores": int, "watts": [num, ...]}]?},
#   "budget_watts": num?, "active_cores": [int, ...]?, "simulation": {...}?
# }
#
# lookup_table row ``watts[j-1]`` is the package power with every active core
# at turbo level j.

_EXTRA_KEYS = ("budget_watts", "active_cores", "simulation")


def spec_from_dict(doc: Mapping) -> ProcessorSpec:
    try:
        lad = doc["ladder"]
        ladder = FrequencyLadder.from_khz(
            [int(f) for f in lad["levels_khz"]],
            int(lad["guaranteed_index"]),
            int(lad.get("bus_clock_khz", DEFAULT_BUS_CLOCK_KHZ)),
            lad.get("voltages_v"),
        )
        pw = doc["power"]
        table = None
        if pw.get("lookup_table"):
            table = {}
            for row in pw["lookup_table"]:
                for j, w in enumerate(row["watts"], start=1):
                    table[(int(row["active_cores"]), j)] = float(w)
        power = PowerModel(
            tuple(float(w) for w in pw["per_core_watts"]),
            None if pw.get("k_proportionality") is None else float(pw["k_proportionality"]),
            table,
        )
        return ProcessorSpec(
            n_cores=int(doc["n_cores"]),
            pow_max_watts=float(doc["pow_max_watts"]),
            t_crit_c=float(doc.get("t_crit_c", 100.0)),
            ladder=ladder,
            power=power,
            name=str(doc.get("name", "")),
            extras={k: doc[k] for k in _EXTRA_KEYS if k in doc},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError([Violation("malformed-spec-file", f"{type(exc).__name__}: {exc}")]) from exc


def spec_to_dict(spec: ProcessorSpec) -> dict:
    ladder = spec.ladder
    lad: dict = {
        "bus_clock_khz": ladder.bus_clock_khz,
        "guaranteed_index": ladder.guaranteed_index,
        "levels_khz": [lvl.freq_khz for lvl in ladder.levels],
    }
    if all(lvl.voltage_v is not None for lvl in ladder.levels):
        lad["voltages_v"] = [lvl.voltage_v for lvl in ladder.levels]
    power: dict = {"per_core_watts": list(spec.power.per_core_watts)}
    if spec.power.k_proportionality is not None:
        power["k_proportionality"] = spec.power.k_proportionality
    if spec.power.lookup_table:
        rows: dict[int, dict[int, float]] = {}
        for (n, j), w in spec.power.lookup_table.items():
            rows.setdefault(n, {})[j] = w
        power["lookup_table"] = [
            {"active_cores": n, "watts": [rows[n][j] for j in sorted(rows[n])]} for n in sorted(rows)
        ]
    doc = {
        "name": spec.name,
        "n_cores": spec.n_cores,
        "pow_max_watts": spec.pow_max_watts,
        "t_crit_c": spec.t_crit_c,
        "ladder": lad,
        "power": power,
    }
    doc.update(spec.extras)
    return doc


BUILTIN_SPECS = {
    "core-i7": "core_i7_965.json",
    "modified-bios": "modified_bios.json",
    "lookup-demo": "lookup_demo.json",
    "small": "small_instance.json",
}


def data_path(filename: str) -> Path:
    return Path(str(resources.files("turboscale") / "data" / filename))


def load_spec(source: str | Path) -> ProcessorSpec:
    """Load a spec from a JSON file or from a bundled fixture name."""
    name = str(source)
    path = data_path(BUILTIN_SPECS[name]) if name in BUILTIN_SPECS else Path(name)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError([Violation("unreadable-spec-file", f"{path}: {exc}")]) from exc
    return spec_from_dict(doc)
