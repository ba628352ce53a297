"""Event counting and first-order energy accounting.

The simulator does not model devices; it counts architectural events
(memory bits read, code additions, compare/AND evaluations, RNG draws,
counter increments, register writes) and prices them with a user-supplied
cost table.  The bundled example table is illustrative only: it exists so
the energy trends and the crossover report are runnable out of the box,
not as a claim about any fabricated part.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, fields

from .errors import ConfigError, FormatError

EVENT_KINDS = (
    "mem_read_bits",
    "add_ops",
    "and_compare_ops",
    "rng_draws",
    "counter_increments",
    "register_writes",
)


@dataclass(frozen=True)
class EventCounts:
    mem_read_bits: int = 0
    add_ops: int = 0
    and_compare_ops: int = 0
    rng_draws: int = 0
    counter_increments: int = 0
    register_writes: int = 0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"negative event count {f.name}")


@dataclass(frozen=True)
class CostTable:
    """Energy per event, in joules."""

    mem_read_bit: float
    add_op: float
    and_compare_op: float
    rng_draw: float
    counter_increment: float
    register_write: float

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"negative cost {f.name}")


def example_cost_table() -> CostTable:
    """Illustrative per-event costs (picojoule scale, not calibrated)."""
    return CostTable(
        mem_read_bit=0.5e-12,
        add_op=10e-12,
        and_compare_op=0.1e-12,
        rng_draw=2e-12,
        counter_increment=0.5e-12,
        register_write=1e-12,
    )


def save_cost_table(path, table: CostTable) -> None:
    doc = {"version": 1, "unit": "J", "costs": asdict(table)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cost_table(path) -> CostTable:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1 or "costs" not in doc:
        raise FormatError(f"{path}: not a version-1 cost table")
    try:
        return CostTable(**doc["costs"])
    except TypeError as exc:
        raise FormatError(f"{path}: bad cost table fields ({exc})") from exc


def count_events(
    mode: str,
    rows: int,
    cols: int,
    width: int,
    cycles: int = 1,
    rng_mode: str = "column_shared",
) -> EventCounts:
    """Events for one input presentation.

    Logarithmic: every addressed code is read and folded into a per-row
    saturating accumulator in a single pass, so there are no RNG, AND or
    counter events.  Stochastic: codes are read and latched once (counted
    as register writes), then every cycle costs one compare/AND per cell,
    one RNG draw per column (or per cell), and one counter update per row.
    """
    if rows < 1 or cols < 1 or cycles < 1:
        raise ConfigError("rows, cols and cycles must all be >= 1")
    if mode == "logarithmic":
        return EventCounts(
            mem_read_bits=cols * rows * width,
            add_ops=cols * rows,
            register_writes=rows,
        )
    if mode != "stochastic":
        raise ConfigError(f"unknown mode {mode!r}")
    if rng_mode == "column_shared":
        draws_per_cycle = cols
    elif rng_mode == "per_cell":
        draws_per_cycle = cols * rows
    else:
        raise ConfigError(f"unknown rng mode {rng_mode!r}")
    return EventCounts(
        mem_read_bits=cols * rows * width,
        and_compare_ops=cols * rows * cycles,
        rng_draws=draws_per_cycle * cycles,
        counter_increments=rows * cycles,
        register_writes=cols * rows,
    )


def energy_of(counts: EventCounts, table: CostTable) -> float:
    return (
        counts.mem_read_bits * table.mem_read_bit
        + counts.add_ops * table.add_op
        + counts.and_compare_ops * table.and_compare_op
        + counts.rng_draws * table.rng_draw
        + counts.counter_increments * table.counter_increment
        + counts.register_writes * table.register_write
    )


def _stochastic_energy(config, table: CostTable, cycles: float) -> float:
    # affine in cycles: latch once, then a fixed per-cycle cost
    fixed = count_events("stochastic", config.rows, config.columns, config.likelihood_width,
                         cycles=1, rng_mode=config.rng_mode)
    per_cycle = energy_of(fixed, table) - (
        fixed.mem_read_bits * table.mem_read_bit
        + fixed.register_writes * table.register_write
    )
    latch = fixed.mem_read_bits * table.mem_read_bit + fixed.register_writes * table.register_write
    return latch + cycles * per_cycle


@dataclass(frozen=True)
class CrossoverPoint:
    strategy: str  # "logarithmic", "conventional" or "power_conscious"
    budget: int
    accuracy: float
    energy_j: float


@dataclass(frozen=True)
class CrossoverReport:
    points: tuple
    crossover_budget: int | None  # smallest budget where conventional > logarithmic


def crossover(
    config,
    table: CostTable,
    budgets,
    pc_mean_cycles: dict | None = None,
    accuracies: dict | None = None,
    log_accuracy: float = math.nan,
) -> CrossoverReport:
    """Energy-vs-budget report for one machine geometry.

    ``config`` needs rows / columns / likelihood_width / rng_mode.
    Conventional energy is exact (cycles = budget).  Power-conscious
    energy uses measured mean cycles from ``pc_mean_cycles`` when given,
    else the full budget as an upper bound.  ``accuracies`` maps
    (strategy, budget) to measured accuracy; missing entries are NaN.
    """
    budgets = sorted(set(int(b) for b in budgets))
    if not budgets:
        raise ConfigError("need at least one budget")
    acc = accuracies or {}
    log_counts = count_events("logarithmic", config.rows, config.columns, config.likelihood_width)
    log_energy = energy_of(log_counts, table)
    points = [CrossoverPoint("logarithmic", 1, log_accuracy, log_energy)]
    cross = None
    for b in budgets:
        conv = _stochastic_energy(config, table, b)
        points.append(CrossoverPoint("conventional", b, acc.get(("conventional", b), math.nan), conv))
        pc_cycles = (pc_mean_cycles or {}).get(b, float(b))
        pc = _stochastic_energy(config, table, pc_cycles)
        points.append(CrossoverPoint("power_conscious", b, acc.get(("power_conscious", b), math.nan), pc))
        if cross is None and conv > log_energy:
            cross = b
    return CrossoverReport(tuple(points), cross)
