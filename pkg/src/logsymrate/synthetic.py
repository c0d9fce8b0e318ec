"""Synthetic mortality-like tables with known ground truth.

Used by the oracle tests (parameter recovery, envelope calibration) and
by the CLI to produce end-to-end runnable inputs without any registry
data. The truth surface is additive on the log-rate scale:

    log rate(age, period) = beta0 + beta_age * age + beta_period * period
                            + f_age(age) + f_period(period)

with optional nonlinear parts given as callables. Noise is either
Poisson counts at the implied means or a log-symmetric response around
the log-scale median.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .data_ingest import (
    MortalityRecord,
    ObservationTable,
    TableMeta,
    make_cell,
)
from .errors import DataValidationError, SpecificationError
from .logsym_family import GeneratorSpec, sample_with_rng

NOISE_KINDS = ("poisson_counts", "logsym")


@dataclass(frozen=True)
class TruthSpec:
    ages: tuple
    periods: tuple
    beta0: float = 0.0
    beta_age: float = 0.0
    beta_period: float = 0.0
    f_age: Union[Callable, None] = None
    f_period: Union[Callable, None] = None
    population: Union[float, Callable, tuple] = 1e5
    noise: str = "poisson_counts"
    generator: Union[GeneratorSpec, None] = None
    phi: Union[float, Callable] = 0.05
    round_counts: bool = False
    sex: str = "female"
    site: str = "synthetic"

    def __post_init__(self):
        ages = tuple(sorted(set(float(a) for a in self.ages)))
        periods = tuple(sorted(set(float(p) for p in self.periods)))
        if not ages or not periods:
            raise SpecificationError("age and period grids must be non-empty")
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "periods", periods)
        if self.noise not in NOISE_KINDS:
            raise SpecificationError(
                f"unknown noise kind {self.noise!r}; expected one of {NOISE_KINDS}"
            )
        if self.noise == "logsym" and self.generator is None:
            raise SpecificationError("logsym noise needs a generator")

    def grid(self):
        """Cells in table order: (age, period) pairs sorted lexicographically."""
        return [(a, p) for a in self.ages for p in self.periods]

    def log_rate_surface(self) -> np.ndarray:
        out = []
        for a, p in self.grid():
            val = self.beta0 + self.beta_age * a + self.beta_period * p
            if self.f_age is not None:
                val += float(self.f_age(a))
            if self.f_period is not None:
                val += float(self.f_period(p))
            out.append(val)
        arr = np.array(out, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise SpecificationError("log-rate surface must be finite")
        return arr

    def population_surface(self) -> np.ndarray:
        if callable(self.population):
            pop = np.array([float(self.population(a, p)) for a, p in self.grid()])
        elif np.isscalar(self.population):
            pop = np.full(len(self.grid()), float(self.population))
        else:
            pop = np.asarray(self.population, dtype=float).reshape(
                len(self.ages), len(self.periods)).ravel()
        if np.any(~(pop > 0)):
            raise SpecificationError("population surface must be positive")
        return pop

    def phi_surface(self) -> np.ndarray:
        if callable(self.phi):
            phi = np.array([float(self.phi(a, p)) for a, p in self.grid()])
        else:
            phi = np.full(len(self.grid()), float(self.phi))
        if np.any(~(phi > 0)):
            raise SpecificationError("dispersion surface must be positive")
        return phi


@dataclass
class SimulatedTable:
    table: ObservationTable
    log_rate: np.ndarray
    expected: np.ndarray
    phi: Union[np.ndarray, None]
    truth: TruthSpec
    seed: int


def simulate_table(truth: TruthSpec, seed: int) -> SimulatedTable:
    """Draw one table. Deterministic given (truth, seed).

    poisson_counts: deaths ~ Poisson(population * exp(log rate)), cells may
    hold zero counts (a zero policy applies downstream as with real data).
    logsym: log T = log population + log rate + sqrt(phi) * eps; the
    continuous t_value is kept unless round_counts is set, and deaths_raw
    is always the rounded value.
    """
    rng = np.random.default_rng(seed)
    grid = truth.grid()
    log_rate = truth.log_rate_surface()
    pop = truth.population_surface()
    meta = TableMeta(sex=truth.sex, site=truth.site)

    if truth.noise == "poisson_counts":
        mu = pop * np.exp(log_rate)
        deaths = rng.poisson(mu)
        cells = tuple(
            make_cell(a, p, int(deaths[i]), float(deaths[i]), pop[i])
            for i, (a, p) in enumerate(grid)
        )
        table = ObservationTable(cells=cells, meta=meta)
        return SimulatedTable(table=table, log_rate=log_rate, expected=mu,
                              phi=None, truth=truth, seed=seed)

    phi = truth.phi_surface()
    eps = sample_with_rng(truth.generator, len(grid), rng)
    y = np.log(pop) + log_rate + np.sqrt(phi) * eps
    t = np.exp(y)
    if not np.all(np.isfinite(t)):
        raise SpecificationError("simulated response overflowed; check phi and the surface")
    deaths = np.rint(t)
    t_value = np.maximum(deaths, 1.0) if truth.round_counts else t
    cells = tuple(
        make_cell(a, p, int(deaths[i]), float(t_value[i]), pop[i])
        for i, (a, p) in enumerate(grid)
    )
    table = ObservationTable(cells=cells, meta=meta)
    return SimulatedTable(table=table, log_rate=log_rate,
                          expected=pop * np.exp(log_rate), phi=phi,
                          truth=truth, seed=seed)


def simulated_to_records(sim: SimulatedTable, band_width: int = 5) -> list:
    """Rewrite a simulated table in the raw mortality-record schema so the
    CLI pipeline can run end to end on it.

    Age midpoints must sit on integer band boundaries for the chosen
    width, and periods must be whole years. Continuous t_values are
    dropped; the records carry the rounded counts.
    """
    records = []
    half = (band_width - 1) / 2.0
    for c in sim.table.cells:
        lo = c.age_mid - half
        if abs(lo - round(lo)) > 1e-9:
            raise DataValidationError(
                f"age midpoint {c.age_mid} is not representable as a width-"
                f"{band_width} integer band"
            )
        if abs(c.period_mid - round(c.period_mid)) > 1e-9:
            raise DataValidationError(
                f"period midpoint {c.period_mid} is not a whole year"
            )
        records.append(MortalityRecord(
            sex=sim.truth.sex, site=sim.truth.site,
            age_lo=int(round(lo)), age_hi=int(round(lo)) + band_width - 1,
            year=int(round(c.period_mid)), deaths=int(c.deaths_raw),
            population=float(c.population),
        ))
    return records
