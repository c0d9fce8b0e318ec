"""Ingestion of raw mortality records into observation tables.

The raw unit is a ``MortalityRecord`` (one sex/site/age-band/year stratum
as it appears in a registry extract). Records are aggregated into an
``ObservationTable`` of unique (age midpoint, period midpoint) cells, a
zero-count policy makes every cell's count strictly positive, and the
table is then shared read-only by both fitting engines.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import IO, Iterable, Union

import numpy as np

from .errors import DataFormatError, DataValidationError

SEXES = ("female", "male")
ZERO_POLICIES = ("drop", "add_half", "add_one")
DEFAULT_YEAR_RANGE = (1900, 2100)

MORTALITY_HEADER = ["sex", "site", "age_lo", "age_hi", "year", "deaths", "population"]
TABLE_HEADER = ["age_mid", "period_mid", "deaths_raw", "t_value", "population", "log_rate"]


@dataclass(frozen=True)
class MortalityRecord:
    """One raw stratum: sex, site, inclusive age band, year, count, exposure."""

    sex: str
    site: str
    age_lo: int
    age_hi: int
    year: int
    deaths: int
    population: float

    def __post_init__(self):
        if self.sex not in SEXES:
            raise DataValidationError(f"unknown sex {self.sex!r}; expected one of {SEXES}")
        if self.age_lo > self.age_hi:
            raise DataValidationError(
                f"age_lo {self.age_lo} exceeds age_hi {self.age_hi}"
            )
        if self.deaths < 0:
            raise DataValidationError(f"negative death count {self.deaths}")
        if not self.population > 0:
            raise DataValidationError(f"population must be positive, got {self.population}")


@dataclass(frozen=True)
class ObservationCell:
    """One aggregated (age_mid, period_mid) cell.

    ``log_t`` and ``log_pop`` are stored precomputed so the fitting code
    never re-derives them; ``log_t = log(t_value)`` exactly by construction.
    ``t_value`` may still be zero before a zero policy has been applied, in
    which case ``log_t`` is NaN.
    """

    age_mid: float
    period_mid: float
    deaths_raw: int
    t_value: float
    population: float
    log_t: float
    log_pop: float


def make_cell(age_mid: float, period_mid: float, deaths_raw: int,
              t_value: float, population: float) -> ObservationCell:
    """Canonical cell constructor; recomputes both log fields."""
    if not population > 0:
        raise DataValidationError(f"population must be positive, got {population}")
    if t_value < 0:
        raise DataValidationError(f"t_value must be nonnegative, got {t_value}")
    log_t = math.log(t_value) if t_value > 0 else math.nan
    return ObservationCell(
        age_mid=float(age_mid),
        period_mid=float(period_mid),
        deaths_raw=int(deaths_raw),
        t_value=float(t_value),
        population=float(population),
        log_t=log_t,
        log_pop=math.log(population),
    )


@dataclass(frozen=True)
class TableMeta:
    sex: str = ""
    site: str = ""
    zero_policy: Union[str, None] = None
    dropped: int = 0


@dataclass(frozen=True)
class ObservationTable:
    """Deterministically ordered, key-unique collection of cells."""

    cells: tuple
    meta: TableMeta = TableMeta()

    def __post_init__(self):
        keys = [(c.age_mid, c.period_mid) for c in self.cells]
        if len(set(keys)) != len(keys):
            raise DataValidationError("duplicate (age_mid, period_mid) cell keys")
        if keys != sorted(keys):
            raise DataValidationError("cells must be sorted by (age_mid, period_mid)")

    def __len__(self) -> int:
        return len(self.cells)

    # Column views as arrays. Tables are small; building on demand is fine.
    @property
    def age(self) -> np.ndarray:
        return np.array([c.age_mid for c in self.cells], dtype=float)

    @property
    def period(self) -> np.ndarray:
        return np.array([c.period_mid for c in self.cells], dtype=float)

    @property
    def deaths(self) -> np.ndarray:
        return np.array([c.deaths_raw for c in self.cells], dtype=float)

    @property
    def t_value(self) -> np.ndarray:
        return np.array([c.t_value for c in self.cells], dtype=float)

    @property
    def population(self) -> np.ndarray:
        return np.array([c.population for c in self.cells], dtype=float)

    @property
    def log_t(self) -> np.ndarray:
        return np.array([c.log_t for c in self.cells], dtype=float)

    @property
    def log_pop(self) -> np.ndarray:
        return np.array([c.log_pop for c in self.cells], dtype=float)

    @property
    def cell_keys(self) -> tuple:
        return tuple((c.age_mid, c.period_mid) for c in self.cells)


def _as_text_lines(source) -> Iterable[str]:
    if isinstance(source, str):
        text = source
    elif isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    elif hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
    else:
        raise DataFormatError(f"unsupported CSV source type {type(source).__name__}")
    return io.StringIO(text)


def _check_header(fields, expected, what: str):
    fields = [f.strip() for f in (fields or [])]
    missing = [c for c in expected if c not in fields]
    if missing:
        raise DataFormatError(f"{what} header missing column(s): {', '.join(missing)}")
    if fields != expected:
        raise DataFormatError(
            f"{what} header must be exactly {','.join(expected)}, got {','.join(fields)}"
        )


def parse_mortality_csv(source, year_range=DEFAULT_YEAR_RANGE) -> list:
    """Parse a raw mortality CSV (header ``sex,site,...,population``).

    Returns one ``MortalityRecord`` per data row in row order. No
    aggregation happens here; duplicate strata stay duplicated.
    Errors cite 1-based line numbers (header is line 1).
    """
    reader = csv.reader(_as_text_lines(source))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty CSV: missing header") from None
    _check_header(header, MORTALITY_HEADER, "mortality CSV")

    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(MORTALITY_HEADER):
            raise DataFormatError(
                f"line {lineno}: expected {len(MORTALITY_HEADER)} fields, got {len(row)}"
            )
        sex, site, age_lo, age_hi, year, deaths, population = [f.strip() for f in row]
        try:
            age_lo_i = int(age_lo)
            age_hi_i = int(age_hi)
            year_i = int(year)
        except ValueError:
            raise DataValidationError(
                f"line {lineno}: non-integer age band or year "
                f"({age_lo!r}, {age_hi!r}, {year!r})"
            ) from None
        try:
            deaths_i = int(deaths)
        except ValueError:
            raise DataValidationError(f"line {lineno}: non-numeric deaths {deaths!r}") from None
        try:
            population_f = float(population)
        except ValueError:
            raise DataValidationError(
                f"line {lineno}: non-numeric population {population!r}"
            ) from None
        if not (year_range[0] <= year_i <= year_range[1]):
            raise DataValidationError(
                f"line {lineno}: year {year_i} outside admissible range {year_range}"
            )
        try:
            rec = MortalityRecord(sex, site, age_lo_i, age_hi_i, year_i,
                                  deaths_i, population_f)
        except DataValidationError as exc:
            raise DataValidationError(f"line {lineno}: {exc}") from None
        records.append(rec)
    return records


def aggregate_cells(records, sex: str, site: str) -> ObservationTable:
    """Aggregate records for one (sex, site) into an ObservationTable.

    Cells are keyed by (age midpoint, year); deaths and population are
    summed over duplicate keys. Population sums use ``math.fsum`` so the
    result is independent of record order.
    """
    selected = [r for r in records if r.sex == sex and r.site == site]
    if not selected:
        raise DataValidationError(f"no records for sex={sex!r}, site={site!r}")

    deaths: dict = {}
    pops: dict = {}
    for r in selected:
        key = ((r.age_lo + r.age_hi) / 2.0, float(r.year))
        deaths[key] = deaths.get(key, 0) + r.deaths
        pops.setdefault(key, []).append(r.population)

    cells = [
        make_cell(age_mid=k[0], period_mid=k[1], deaths_raw=deaths[k],
                  t_value=float(deaths[k]), population=math.fsum(pops[k]))
        for k in sorted(deaths)
    ]
    return ObservationTable(cells=tuple(cells), meta=TableMeta(sex=sex, site=site))


def apply_zero_policy(table: ObservationTable, policy: str) -> ObservationTable:
    """Make every cell's t_value strictly positive.

    drop: remove zero-death cells (counted in meta); add_half: zero cells
    get t_value 0.5; add_one: every cell gets t_value deaths_raw + 1.
    """
    if policy not in ZERO_POLICIES:
        raise DataValidationError(f"unknown zero policy {policy!r}; expected one of {ZERO_POLICIES}")
    cells = []
    dropped = 0
    for c in table.cells:
        if policy == "drop":
            if c.deaths_raw == 0:
                dropped += 1
                continue
            cells.append(c)
        elif policy == "add_half":
            if c.deaths_raw == 0:
                cells.append(make_cell(c.age_mid, c.period_mid, c.deaths_raw,
                                       c.deaths_raw + 0.5, c.population))
            else:
                cells.append(c)
        else:  # add_one applies to all cells
            cells.append(make_cell(c.age_mid, c.period_mid, c.deaths_raw,
                                   c.deaths_raw + 1.0, c.population))
    meta = replace(table.meta, zero_policy=policy, dropped=table.meta.dropped + dropped)
    return ObservationTable(cells=tuple(cells), meta=meta)


def observed_log_rate(cell: ObservationCell) -> float:
    """log of the observed rate, log(t_value / population)."""
    if not cell.t_value > 0:
        raise DataValidationError("observed_log_rate requires t_value > 0; apply a zero policy")
    return cell.log_t - cell.log_pop


def observed_log_rates(table: ObservationTable) -> np.ndarray:
    return np.array([observed_log_rate(c) for c in table.cells], dtype=float)


def _fmt(x: float) -> str:
    # repr gives the shortest string that round-trips the double exactly
    return repr(float(x))


def table_to_csv(table: ObservationTable) -> str:
    """Serialize to the table CSV schema (see TABLE_HEADER)."""
    lines = [",".join(TABLE_HEADER)]
    for c in table.cells:
        rate = observed_log_rate(c) if c.t_value > 0 else math.nan
        lines.append(",".join([
            _fmt(c.age_mid), _fmt(c.period_mid), str(c.deaths_raw),
            _fmt(c.t_value), _fmt(c.population), _fmt(rate),
        ]))
    return "\n".join(lines) + "\n"


def table_from_csv(source, meta: Union[TableMeta, None] = None) -> ObservationTable:
    """Parse a table CSV produced by ``table_to_csv``.

    log_t and log_pop are recomputed from t_value and population, which
    reproduces the original bits (same inputs, same log).
    """
    reader = csv.reader(_as_text_lines(source))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty CSV: missing header") from None
    _check_header(header, TABLE_HEADER, "table CSV")
    cells = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(TABLE_HEADER):
            raise DataFormatError(
                f"line {lineno}: expected {len(TABLE_HEADER)} fields, got {len(row)}"
            )
        try:
            age_mid = float(row[0])
            period_mid = float(row[1])
            deaths_raw = int(row[2])
            t_value = float(row[3])
            population = float(row[4])
        except ValueError:
            raise DataValidationError(f"line {lineno}: non-numeric field in {row}") from None
        cells.append(make_cell(age_mid, period_mid, deaths_raw, t_value, population))
    return ObservationTable(cells=tuple(cells), meta=meta or TableMeta())


def write_table_csv(table: ObservationTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(table_to_csv(table))


def read_table_csv(path) -> ObservationTable:
    with open(path, "rb") as fh:
        return table_from_csv(fh)


def records_to_csv(records) -> str:
    """Serialize raw records back to the mortality CSV schema."""
    lines = [",".join(MORTALITY_HEADER)]
    for r in records:
        lines.append(",".join([
            r.sex, r.site, str(r.age_lo), str(r.age_hi), str(r.year),
            str(r.deaths), _fmt(r.population),
        ]))
    return "\n".join(lines) + "\n"
