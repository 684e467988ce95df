"""Data model for partially observed (X, T, Y) samples.

A unit carries a covariate vector, a treatment, an outcome, and a response
indicator for each of them.  A value field is populated exactly when the
matching indicator is 1; otherwise it is None.  Missingness is structural,
nothing downstream ever sees a NaN sentinel in the data model itself.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, NamedTuple

import numpy as np

__all__ = [
    "MisscateError",
    "ConfigError",
    "VariableKind",
    "Mechanism",
    "MissingnessAssumption",
    "Unit",
    "Dataset",
    "Violation",
    "Interval",
    "CateEstimate",
    "validate_dataset",
    "subset_observed_xt",
    "complete_cases",
    "as_columns",
    "dataset_from_columns",
    "read_dataset_csv",
    "write_dataset_csv",
    "mix_seed",
]


class MisscateError(Exception):
    """Base class for estimation-time failures (CLI exit code 1)."""


class ConfigError(Exception):
    """Invalid user-supplied configuration or input file (CLI exit code 2)."""


class VariableKind(Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


class Mechanism(Enum):
    """Conditional-independence restriction placed on the outcome response.

    The three identifying mechanisms each bar one parent of the outcome
    response indicator, given everything else:

    * OUTCOME_INDEPENDENT: response does not depend on the outcome value
      itself, so complete-case analysis is consistent.
    * TREATMENT_INDEPENDENT: response does not depend on treatment; the
      treatment acts as an instrument for the response process.
    * COVARIATE_INDEPENDENT: response does not depend on the covariates (or
      on one designated identifying covariate); that covariate acts as the
      instrument instead.

    MCAR, MAR, and GENERAL are documentation labels for the boundary cases:
    the first two are strictly stronger than any of the three above, and
    GENERAL (response may depend on everything) is not point identified.
    """

    MCAR = "mcar"
    MAR = "mar"
    OUTCOME_INDEPENDENT = "a1"
    TREATMENT_INDEPENDENT = "a2"
    COVARIATE_INDEPENDENT = "a3"
    GENERAL = "general"

    @classmethod
    def from_token(cls, token: str) -> "Mechanism":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown missingness mechanism {token!r}") from None


@dataclass(frozen=True)
class MissingnessAssumption:
    """A mechanism plus, optionally, which covariate carries identification.

    ``identifying_covariate_index`` is only meaningful for the
    covariate-independent mechanism with a multivariate X: the indexed
    covariate is the one barred from the response model (and used as the
    instrument), while the remaining covariates stay in the conditioning set.
    """

    kind: Mechanism
    identifying_covariate_index: int | None = None

    def __post_init__(self) -> None:
        if (
            self.identifying_covariate_index is not None
            and self.kind is not Mechanism.COVARIATE_INDEPENDENT
        ):
            raise ConfigError(
                "identifying_covariate_index is only valid with the "
                "covariate-independent mechanism"
            )
        if self.identifying_covariate_index is not None and self.identifying_covariate_index < 0:
            raise ConfigError("identifying_covariate_index must be nonnegative")

    def identifying_index(self, p: int) -> int:
        """Resolve the identifying covariate column for a p-dimensional X."""
        idx = self.identifying_covariate_index
        if idx is None:
            idx = 0
        if idx >= p:
            raise ConfigError(
                f"identifying_covariate_index {idx} out of range for p={p}"
            )
        return idx


@dataclass(frozen=True)
class Unit:
    """One sampled unit.  x[j] is None iff rx[j] == 0, likewise t/rt, y/ry."""

    x: tuple[float | None, ...]
    t: float | None
    y: float | None
    rx: tuple[int, ...]
    rt: int
    ry: int


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of units plus the declared variable kinds."""

    units: tuple[Unit, ...]
    x_kinds: tuple[VariableKind, ...]
    t_kind: VariableKind
    y_kind: VariableKind

    @property
    def n(self) -> int:
        return len(self.units)

    @property
    def p(self) -> int:
        return len(self.x_kinds)

    def __iter__(self) -> Iterator[Unit]:
        return iter(self.units)

    def take(self, indices: np.ndarray | list[int]) -> "Dataset":
        """New dataset holding units[i] for i in indices (repeats allowed)."""
        units = tuple(self.units[int(i)] for i in indices)
        return replace(self, units=units)


class Violation(NamedTuple):
    row: int
    rule: str


def _kind_ok(kind: VariableKind, value: float) -> bool:
    if kind is VariableKind.BINARY:
        return value in (0.0, 1.0)
    return bool(np.isfinite(value))


def validate_dataset(d: Dataset) -> list[Violation]:
    """Check every unit invariant; returns one Violation per broken rule.

    Rules checked per row: x/rx dimensions match the declared kinds, each
    indicator is 0 or 1, a value is present iff its indicator is 1, and
    observed values conform to the declared kind (binary values in {0, 1},
    continuous values finite).
    """
    out: list[Violation] = []
    p = d.p
    for i, u in enumerate(d.units):
        if len(u.x) != p or len(u.rx) != p:
            out.append(Violation(i, f"x/rx dimension {len(u.x)}/{len(u.rx)} != {p}"))
            continue
        for j in range(p):
            r = u.rx[j]
            if r not in (0, 1):
                out.append(Violation(i, f"rx{j + 1} not in {{0,1}}"))
            elif (u.x[j] is None) == bool(r):
                out.append(Violation(i, f"x{j + 1} presence disagrees with rx{j + 1}"))
            elif r == 1 and not _kind_ok(d.x_kinds[j], u.x[j]):
                out.append(Violation(i, f"x{j + 1} value violates {d.x_kinds[j].value} kind"))
        for name, val, ind, kind in (
            ("t", u.t, u.rt, d.t_kind),
            ("y", u.y, u.ry, d.y_kind),
        ):
            if ind not in (0, 1):
                out.append(Violation(i, f"r{name} not in {{0,1}}"))
            elif (val is None) == bool(ind):
                out.append(Violation(i, f"{name} presence disagrees with r{name}"))
            elif ind == 1 and not _kind_ok(kind, val):
                out.append(Violation(i, f"{name} value violates {kind.value} kind"))
    return out


def subset_observed_xt(d: Dataset) -> Dataset:
    """Units with every covariate and the treatment observed (outcome free)."""
    units = tuple(u for u in d.units if u.rt == 1 and all(r == 1 for r in u.rx))
    return replace(d, units=units)


def complete_cases(d: Dataset) -> Dataset:
    """Units with everything observed."""
    units = tuple(
        u for u in d.units if u.rt == 1 and u.ry == 1 and all(r == 1 for r in u.rx)
    )
    return replace(d, units=units)


class Columns(NamedTuple):
    """Array view of a dataset.  Masked slots hold NaN and must only be read
    where the matching indicator is 1; estimators gate on the indicators."""

    x: np.ndarray   # (n, p) float
    t: np.ndarray   # (n,) float
    y: np.ndarray   # (n,) float
    rx: np.ndarray  # (n, p) int8
    rt: np.ndarray  # (n,) int8
    ry: np.ndarray  # (n,) int8


def as_columns(d: Dataset) -> Columns:
    """Materialize the dataset as numpy arrays for estimation."""
    n, p = d.n, d.p
    x = np.full((n, p), np.nan)
    t = np.full(n, np.nan)
    y = np.full(n, np.nan)
    rx = np.zeros((n, p), dtype=np.int8)
    rt = np.zeros(n, dtype=np.int8)
    ry = np.zeros(n, dtype=np.int8)
    for i, u in enumerate(d.units):
        for j in range(p):
            if u.rx[j]:
                x[i, j] = u.x[j]
                rx[i, j] = 1
        if u.rt:
            t[i] = u.t
            rt[i] = 1
        if u.ry:
            y[i] = u.y
            ry[i] = 1
    return Columns(x, t, y, rx, rt, ry)


def dataset_from_columns(
    x: np.ndarray,
    t: np.ndarray,
    y: np.ndarray,
    rx: np.ndarray,
    rt: np.ndarray,
    ry: np.ndarray,
    x_kinds: tuple[VariableKind, ...],
    t_kind: VariableKind,
    y_kind: VariableKind,
) -> Dataset:
    """Build a Dataset from arrays; values under a 0 indicator are dropped."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 1 and len(x_kinds) == 1 and x.shape[1] != 1:
        x = x.T
    rx = np.atleast_2d(np.asarray(rx, dtype=int))
    if rx.shape != x.shape:
        rx = rx.T
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    rt = np.asarray(rt, dtype=int)
    ry = np.asarray(ry, dtype=int)
    units = []
    for i in range(x.shape[0]):
        xv = tuple(float(x[i, j]) if rx[i, j] else None for j in range(x.shape[1]))
        units.append(
            Unit(
                x=xv,
                t=float(t[i]) if rt[i] else None,
                y=float(y[i]) if ry[i] else None,
                rx=tuple(int(v) for v in rx[i]),
                rt=int(rt[i]),
                ry=int(ry[i]),
            )
        )
    return Dataset(tuple(units), x_kinds, t_kind, y_kind)


# ============================================================
# Estimates
# ============================================================


class Interval(NamedTuple):
    lower: float
    upper: float
    level: float


@dataclass(frozen=True)
class CateEstimate:
    """A conditional effect estimate at one covariate profile.

    ``details`` carries estimator diagnostics and the frozen tuning needed to
    re-run the estimator on bootstrap resamples; keys are estimator specific.
    """

    tau: float
    t1: float
    t0: float
    x_query: tuple[float, ...]
    estimator: str
    interval: Interval | None = None
    details: dict = field(default_factory=dict, compare=False)


# ============================================================
# CSV interchange
# ============================================================


def _csv_header(p: int) -> list[str]:
    return (
        [f"x{j + 1}" for j in range(p)]
        + ["t", "y"]
        + [f"rx{j + 1}" for j in range(p)]
        + ["rt", "ry"]
    )


def write_dataset_csv(d: Dataset, path: str | Path) -> None:
    """Write units as CSV; missing values become empty fields."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_csv_header(d.p))
        for u in d.units:
            row: list[str] = []
            for v in u.x:
                row.append("" if v is None else repr(v))
            row.append("" if u.t is None else repr(u.t))
            row.append("" if u.y is None else repr(u.y))
            row.extend(str(r) for r in u.rx)
            row.append(str(u.rt))
            row.append(str(u.ry))
            w.writerow(row)


def read_dataset_csv(
    path: str | Path,
    x_kinds: tuple[VariableKind, ...],
    t_kind: VariableKind,
    y_kind: VariableKind,
) -> Dataset:
    """Read a dataset written in the CSV interchange layout.

    The header is mandatory and must match ``x1..xp,t,y,rx1..rxp,rt,ry`` for
    the declared number of covariates.  Indicator fields must never be empty;
    a row whose response indicators are themselves missing is rejected here
    rather than silently imputed.
    """
    path = Path(path)
    p = len(x_kinds)
    expected = _csv_header(p)
    units: list[Unit] = []
    with path.open(newline="") as fh:
        r = csv.reader(fh)
        try:
            header = next(r)
        except StopIteration:
            raise ConfigError(f"{path}: empty file, header row required") from None
        if [h.strip() for h in header] != expected:
            raise ConfigError(
                f"{path}: header {header!r} does not match expected {expected!r}"
            )
        for lineno, row in enumerate(r, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ConfigError(f"{path}:{lineno}: expected {len(expected)} fields")
            try:
                rx = tuple(_parse_indicator(row[p + 2 + j]) for j in range(p))
                rt = _parse_indicator(row[2 * p + 2])
                ry = _parse_indicator(row[2 * p + 3])
                xv = tuple(
                    _parse_value(row[j], rx[j], f"x{j + 1}") for j in range(p)
                )
                tv = _parse_value(row[p], rt, "t")
                yv = _parse_value(row[p + 1], ry, "y")
            except ConfigError as e:
                raise ConfigError(f"{path}:{lineno}: {e}") from None
            units.append(Unit(xv, tv, yv, rx, rt, ry))
    d = Dataset(tuple(units), x_kinds, t_kind, y_kind)
    bad = validate_dataset(d)
    if bad:
        v = bad[0]
        raise ConfigError(
            f"{path}: {len(bad)} invalid rows, first at data row "
            f"{v.row + 1}: {v.rule}"
        )
    return d


def _parse_indicator(s: str) -> int:
    s = s.strip()
    if s == "":
        raise ConfigError("response indicator field is empty")
    if s not in ("0", "1"):
        raise ConfigError(f"response indicator must be 0 or 1, got {s!r}")
    return int(s)


def _parse_value(s: str, indicator: int, name: str) -> float | None:
    s = s.strip()
    if indicator == 0:
        if s != "":
            raise ConfigError(f"{name} present but its indicator is 0")
        return None
    if s == "":
        raise ConfigError(f"{name} empty but its indicator is 1")
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"{name} is not numeric: {s!r}") from None


# ============================================================
# Seed derivation
# ============================================================

_MASK64 = (1 << 64) - 1


def _splitmix(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, *parts: int) -> int:
    """Derive a child seed from a base seed and one or more stream indices.

    Splitmix-style finalizer applied per part; collisions across distinct
    index tuples are astronomically unlikely, and the result is stable across
    platforms and runs.
    """
    z = _splitmix(seed & _MASK64)
    for p in parts:
        z = _splitmix(z ^ ((p & _MASK64) * 0xD6E8FEB86659FD93 & _MASK64))
    return z
