"""Series two-stage estimation of outcome-response odds, then weighting.

The response odds zeta(., y) solve an integral equation linking the observed
complete-case law to the missing fraction, with either the treatment or a
designated covariate acting as the instrument.  zeta is expanded on a small
basis in y (saturated indicators for a binary outcome, a Gaussian-envelope
polynomial family otherwise), optionally tensored with the same family in a
continuous conditioning variable.  First-stage conditional moments come from
cell means or Nadaraya-Watson smoothing at a fixed evaluation grid, the
coefficients from a norm-constrained least-squares fit, and the final effect
from a weighted nonparametric outcome regression with weights 1 + zeta
truncated to [1, 1/pi_min].

Bandwidths, grids, standardization, and whitening are computed once from the
original sample (``plan_np``) and passed back in verbatim on bootstrap
resamples so resampling never re-tunes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    CateEstimate,
    Columns,
    ConfigError,
    Dataset,
    Mechanism,
    MisscateError,
    MissingnessAssumption,
    VariableKind,
    as_columns,
)

__all__ = [
    "SolverError",
    "EstimationError",
    "SieveConfig",
    "RegularizationConfig",
    "NpTuning",
    "FirstStage",
    "SolveResult",
    "hermite_envelope_basis",
    "plan_np",
    "build_first_stage",
    "solve_regularized",
    "corrected_weights",
    "estimate_cate_np",
]

_INST_GRID = 25   # quantile points for a continuous instrument
_COND_GRID = 10   # quantile points for a continuous conditioning variable
_EPS = 1e-12


class SolverError(MisscateError):
    """Constrained least-squares bisection failed to close the gap."""


class EstimationError(MisscateError):
    """A required regression cell or neighborhood has no usable data."""


@dataclass(frozen=True)
class SieveConfig:
    """Basis sizes and options; defaults follow the benchmark protocol."""

    n_outcome: int = 4     # envelope basis size in y (ignored for binary y)
    n_conditioner: int = 3  # envelope basis size in the smoothed conditioner
    whiten: bool = True     # joint whitening when conditioner and y are continuous

    def __post_init__(self) -> None:
        if self.n_outcome < 1 or self.n_conditioner < 1:
            raise ConfigError("basis sizes must be positive")


@dataclass(frozen=True)
class RegularizationConfig:
    bound: float = 10.0    # cap on beta' Lambda beta
    pi_min: float = 0.05   # response-probability floor for weight truncation
    lambda_diag: tuple[float, ...] | None = None  # None means identity

    def __post_init__(self) -> None:
        if self.bound < 0:
            raise ConfigError("norm bound must be nonnegative")
        if not 0 < self.pi_min < 1:
            raise ConfigError("pi_min must lie in (0, 1)")
        if self.lambda_diag is not None and any(v <= 0 for v in self.lambda_diag):
            raise ConfigError("lambda_diag entries must be positive")


@dataclass(frozen=True)
class NpTuning:
    """Everything data-derived that must stay frozen across resamples.

    mode is one of "cca" (no weighting), "stratified" (binary conditioning
    cells, one odds system per needed cell), or "tensor" (one continuous
    conditioning variable, one global system).  The affine map
    (c, y) -> (w11 (c - c_center), w21 (c - c_center) + w22 (y - y_center))
    standardizes, or jointly whitens, the basis arguments.
    """

    mode: str
    y_basis: str                       # "saturated" or "envelope"
    n_outcome: int
    n_conditioner: int
    c_center: float = 0.0
    y_center: float = 0.0
    w11: float = 1.0
    w21: float = 0.0
    w22: float = 1.0
    cells: tuple[tuple[float, ...], ...] = ()      # conditioning profiles
    cell_grids: tuple[tuple[float, ...], ...] = ()  # instrument grid per cell
    tensor_grid: tuple[tuple[float, float], ...] = ()  # (instrument, conditioner)
    bandwidths: tuple[tuple[str, float], ...] = ()

    def bw(self, name: str) -> float:
        for k, v in self.bandwidths:
            if k == name:
                return v
        raise MisscateError(f"no frozen bandwidth named {name!r}")


@dataclass(frozen=True)
class FirstStage:
    matrix: np.ndarray
    b: np.ndarray
    eval_points: tuple[tuple[float, ...], ...]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class SolveResult:
    beta: np.ndarray
    multiplier: float
    residual: float
    constrained: bool
    n_iter: int


def hermite_envelope_basis(
    y: np.ndarray | float, size: int, center: float, scale: float
) -> np.ndarray:
    """Columns exp(-v^2) v^(j-1), j = 1..size, with v = (y - center) / scale."""
    if scale <= 0:
        raise ConfigError("envelope basis scale must be positive")
    v = (np.atleast_1d(np.asarray(y, dtype=float)) - center) / scale
    env = np.exp(-(v**2))
    return np.column_stack([env * v**j for j in range(size)])


def _saturated_binary_basis(y: np.ndarray | float) -> np.ndarray:
    v = np.atleast_1d(np.asarray(y, dtype=float))
    return np.column_stack([(v == 0.0).astype(float), (v == 1.0).astype(float)])


def _gauss(u: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * u * u)


def _silverman(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return 1.0
    sd = float(np.std(v, ddof=1))
    q75, q25 = np.quantile(v, [0.75, 0.25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if spread <= 0:
        spread = sd if sd > 0 else 1.0
    return 0.9 * spread * v.size ** (-0.2)


def _quantile_grid(v: np.ndarray, m: int) -> tuple[float, ...]:
    probs = (np.arange(m) + 0.5) / m
    return tuple(float(q) for q in np.quantile(v, probs))


# ============================================================
# Role resolution
# ============================================================


def _roles(
    d: Dataset, assumption: MissingnessAssumption, cols: Columns, base: np.ndarray
) -> tuple[np.ndarray, VariableKind, np.ndarray, VariableKind | None, list[int]]:
    """Return (instrument, its kind, conditioner, its kind, binary cond cols).

    Under the treatment-independent mechanism the treatment instruments and
    the covariates condition; under the covariate-independent mechanism the
    identifying covariate instruments and (t, remaining covariates) condition.
    At most one conditioning variable may be continuous (it gets the basis),
    the rest must be binary.
    """
    if assumption.kind is Mechanism.TREATMENT_INDEPENDENT:
        inst, inst_kind = cols.t, d.t_kind
        cont = [j for j, k in enumerate(d.x_kinds) if k is VariableKind.CONTINUOUS]
        if len(cont) > 1:
            raise ConfigError("at most one continuous covariate is supported")
        if cont:
            return inst, inst_kind, cols.x[:, cont[0]], VariableKind.CONTINUOUS, [
                j for j in range(d.p) if j != cont[0]
            ]
        return inst, inst_kind, None, None, list(range(d.p))
    if assumption.kind is Mechanism.COVARIATE_INDEPENDENT:
        idx = assumption.identifying_index(d.p)
        inst, inst_kind = cols.x[:, idx], d.x_kinds[idx]
        rest = [j for j in range(d.p) if j != idx]
        if any(d.x_kinds[j] is VariableKind.CONTINUOUS for j in rest):
            raise ConfigError(
                "non-identifying covariates must be binary for the series fit"
            )
        if d.t_kind is VariableKind.CONTINUOUS:
            return inst, inst_kind, cols.t, VariableKind.CONTINUOUS, rest
        return inst, inst_kind, None, None, rest
    raise ConfigError("series weighting needs a treatment or covariate instrument")


def _cell_profiles(
    d: Dataset,
    assumption: MissingnessAssumption,
    x: Sequence[float],
    t1: float,
    t0: float,
) -> tuple[tuple[float, ...], ...]:
    """Conditioning profiles whose odds systems the query needs (stratified)."""
    if assumption.kind is Mechanism.TREATMENT_INDEPENDENT:
        return (tuple(float(v) for v in x),)
    idx = assumption.identifying_index(d.p)
    rest = tuple(float(v) for j, v in enumerate(x) if j != idx)
    return ((float(t1),) + rest, (float(t0),) + rest)


def _cell_mask(
    d: Dataset,
    assumption: MissingnessAssumption,
    cols: Columns,
    base: np.ndarray,
    profile: tuple[float, ...],
) -> np.ndarray:
    if assumption.kind is Mechanism.TREATMENT_INDEPENDENT:
        return base & np.all(cols.x == np.asarray(profile), axis=1)
    idx = assumption.identifying_index(d.p)
    rest = [j for j in range(d.p) if j != idx]
    m = base & (cols.t == profile[0])
    for pos, j in enumerate(rest):
        m &= cols.x[:, j] == profile[1 + pos]
    return m


# ============================================================
# Planning (frozen tuning)
# ============================================================


def plan_np(
    d: Dataset,
    assumption: MissingnessAssumption,
    x: Sequence[float],
    t1: float,
    t0: float,
    sieve: SieveConfig | None = None,
) -> NpTuning:
    """Derive grids, bandwidths, and basis standardization from this sample."""
    sieve = sieve or SieveConfig()
    cols = as_columns(d)
    base = (cols.rt == 1) & np.all(cols.rx == 1, axis=1)
    cc = base & (cols.ry == 1)
    if not np.any(cc):
        raise EstimationError("no complete cases to tune on")
    y_cc = cols.y[cc]
    bands: list[tuple[str, float]] = []
    if d.t_kind is VariableKind.CONTINUOUS:
        bands.append(("reg_t", _silverman(cols.t[cc])))
    for j, k in enumerate(d.x_kinds):
        if k is VariableKind.CONTINUOUS:
            bands.append((f"reg_x{j}", _silverman(cols.x[cc, j])))

    unweighted = assumption.kind in (
        Mechanism.OUTCOME_INDEPENDENT,
        Mechanism.MCAR,
        Mechanism.MAR,
    )
    if unweighted:
        return NpTuning(
            mode="cca",
            y_basis="saturated" if d.y_kind is VariableKind.BINARY else "envelope",
            n_outcome=sieve.n_outcome,
            n_conditioner=sieve.n_conditioner,
            bandwidths=tuple(bands),
        )

    inst, inst_kind, cond, cond_kind, _rest = _roles(d, assumption, cols, base)
    if d.y_kind is VariableKind.BINARY:
        y_basis, y_center, y_scale = "saturated", 0.0, 1.0
    else:
        y_basis = "envelope"
        y_center = float(np.mean(y_cc))
        y_scale = float(np.std(y_cc, ddof=1))
        if y_scale <= 0:
            raise EstimationError("outcome has no spread among complete cases")

    if inst_kind is VariableKind.CONTINUOUS:
        bands.append(("inst", _silverman(inst[base])))

    if cond_kind is None:
        # Stratified mode: every conditioning variable is binary.
        cells = _cell_profiles(d, assumption, x, t1, t0)
        grids = []
        for profile in cells:
            m = _cell_mask(d, assumption, cols, base, profile)
            if not np.any(m):
                raise EstimationError(f"no observed units in conditioning cell {profile}")
            if inst_kind is VariableKind.BINARY:
                grids.append(tuple(float(v) for v in np.unique(inst[m])))
            else:
                grids.append(_quantile_grid(inst[m], _INST_GRID))
        return NpTuning(
            mode="stratified",
            y_basis=y_basis,
            n_outcome=sieve.n_outcome,
            n_conditioner=sieve.n_conditioner,
            y_center=y_center,
            w22=1.0 if y_basis == "saturated" else 1.0 / y_scale,
            cells=cells,
            cell_grids=tuple(grids),
            bandwidths=tuple(bands),
        )

    # Tensor mode: one continuous conditioning variable.
    bands.append(("cond", _silverman(cond[base])))
    c_cc = cond[cc]
    if sieve.whiten and y_basis == "envelope":
        cov = np.cov(np.column_stack([c_cc, y_cc]), rowvar=False, ddof=1)
        try:
            chol = np.linalg.cholesky(cov)
            w = np.linalg.inv(chol)
        except np.linalg.LinAlgError:
            raise EstimationError("degenerate (conditioner, outcome) covariance")
        c_center, y_center = float(np.mean(c_cc)), float(np.mean(y_cc))
        w11, w21, w22 = float(w[0, 0]), float(w[1, 0]), float(w[1, 1])
    else:
        c_center = float(np.mean(c_cc))
        c_scale = float(np.std(c_cc, ddof=1))
        if c_scale <= 0:
            raise EstimationError("conditioning variable has no spread")
        w11 = 1.0 / c_scale
        w21 = 0.0
        w22 = 1.0 if y_basis == "saturated" else 1.0 / y_scale
    if inst_kind is VariableKind.BINARY:
        inst_pts = tuple(float(v) for v in np.unique(inst[base]))
    else:
        inst_pts = _quantile_grid(inst[base], _INST_GRID)
    cond_pts = _quantile_grid(cond[base], _COND_GRID)
    grid = tuple((iv, cv) for iv in inst_pts for cv in cond_pts)
    return NpTuning(
        mode="tensor",
        y_basis=y_basis,
        n_outcome=sieve.n_outcome,
        n_conditioner=sieve.n_conditioner,
        c_center=c_center,
        y_center=y_center,
        w11=w11,
        w21=w21,
        w22=w22,
        tensor_grid=grid,
        bandwidths=tuple(bands),
    )


# ============================================================
# Basis evaluation under the frozen transform
# ============================================================


def _y_block(tuning: NpTuning, c: np.ndarray | float, y: np.ndarray | float) -> np.ndarray:
    """h(.) columns for units with conditioner values c and outcomes y."""
    if tuning.y_basis == "saturated":
        return _saturated_binary_basis(y)
    yv = np.atleast_1d(np.asarray(y, dtype=float))
    cv = np.broadcast_to(np.atleast_1d(np.asarray(c, dtype=float)), yv.shape)
    vt = tuning.w21 * (cv - tuning.c_center) + tuning.w22 * (yv - tuning.y_center)
    env = np.exp(-(vt**2))
    return np.column_stack([env * vt**j for j in range(tuning.n_outcome)])


def _c_block(tuning: NpTuning, c: np.ndarray | float) -> np.ndarray:
    vt = tuning.w11 * (np.atleast_1d(np.asarray(c, dtype=float)) - tuning.c_center)
    env = np.exp(-(vt**2))
    return np.column_stack([env * vt**j for j in range(tuning.n_conditioner)])


def _zeta_values(
    tuning: NpTuning,
    beta: np.ndarray,
    c: np.ndarray | float | None,
    y: np.ndarray,
) -> np.ndarray:
    if tuning.mode == "tensor":
        h = _y_block(tuning, c, y)
        g = _c_block(tuning, c)
        phi = g[:, :, None] * h[:, None, :]
        return phi.reshape(len(h), -1) @ beta
    h = _y_block(tuning, 0.0, y)
    return h @ beta


# ============================================================
# First stage
# ============================================================


def build_first_stage(
    d: Dataset,
    assumption: MissingnessAssumption,
    tuning: NpTuning,
    *,
    cell_index: int | None = None,
) -> FirstStage:
    """Assemble the evaluation-point system M beta ~= b on the frozen grid.

    Row for evaluation point e: p1(e) times the conditional mean of the basis
    among observed outcomes at e; right side: the missing fraction p0(e).
    Grid points whose kernel mass (or cell count) vanishes in this sample are
    dropped with a warning, as is an underdetermined system.
    """
    cols = as_columns(d)
    base = (cols.rt == 1) & np.all(cols.rx == 1, axis=1)
    inst, inst_kind, cond, cond_kind, _ = _roles(d, assumption, cols, base)
    warnings: list[str] = []
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    points: list[tuple[float, ...]] = []

    if tuning.mode == "stratified":
        if cell_index is None:
            raise ConfigError("stratified mode requires a cell index")
        profile = tuning.cells[cell_index]
        grid = tuning.cell_grids[cell_index]
        m = _cell_mask(d, assumption, cols, base, profile)
        inst_cell = inst[m]
        ry_cell = cols.ry[m].astype(float)
        y_cell = cols.y[m]
        for gv in grid:
            if inst_kind is VariableKind.BINARY:
                k = (inst_cell == gv).astype(float)
            else:
                k = _gauss((inst_cell - gv) / tuning.bw("inst"))
            mass = float(k.sum())
            if mass < _EPS:
                warnings.append(f"no instrument mass at evaluation point {gv:g}")
                continue
            p1 = float(k @ ry_cell) / mass
            obs_mass = float(k @ ry_cell)
            if obs_mass < _EPS:
                warnings.append(f"no observed outcomes near evaluation point {gv:g}")
                continue
            ok = ry_cell == 1.0
            h = _y_block(tuning, 0.0, y_cell[ok])
            hbar = (k[ok] @ h) / obs_mass
            rows.append(p1 * hbar)
            rhs.append(1.0 - p1)
            points.append((gv,))
        dim = rows[0].shape[0] if rows else (
            2 if tuning.y_basis == "saturated" else tuning.n_outcome
        )
    else:
        if cond is None:
            raise ConfigError("tensor mode needs a continuous conditioning variable")
        inst_b = inst[base]
        cond_b = cond[base]
        ry_b = cols.ry[base].astype(float)
        y_b = cols.y[base]
        ok = ry_b == 1.0
        h_obs = _y_block(tuning, cond_b[ok], y_b[ok])
        for iv, cv in tuning.tensor_grid:
            if inst_kind is VariableKind.BINARY:
                ki = (inst_b == iv).astype(float)
            else:
                ki = _gauss((inst_b - iv) / tuning.bw("inst"))
            k = ki * _gauss((cond_b - cv) / tuning.bw("cond"))
            mass = float(k.sum())
            if mass < _EPS:
                warnings.append(f"no mass at evaluation point ({iv:g}, {cv:g})")
                continue
            p1 = float(k @ ry_b) / mass
            obs_mass = float(k @ ry_b)
            if obs_mass < _EPS:
                warnings.append(f"no observed outcomes near ({iv:g}, {cv:g})")
                continue
            hbar = (k[ok] @ h_obs) / obs_mass
            g = _c_block(tuning, cv)[0]
            rows.append(p1 * np.kron(g, hbar))
            rhs.append(1.0 - p1)
            points.append((iv, cv))
        k_y = 2 if tuning.y_basis == "saturated" else tuning.n_outcome
        dim = tuning.n_conditioner * k_y
    if not rows:
        raise EstimationError("every evaluation point lost its data")
    if len(rows) < dim:
        warnings.append(
            f"underdetermined system: {len(rows)} evaluation points for {dim} "
            "coefficients; solving under the norm constraint"
        )
    return FirstStage(np.array(rows), np.array(rhs), tuple(points), tuple(warnings))


# ============================================================
# Constrained solve and weighting
# ============================================================


def solve_regularized(
    matrix: np.ndarray,
    b: np.ndarray,
    reg: RegularizationConfig | None = None,
    *,
    lambda_matrix: np.ndarray | None = None,
) -> SolveResult:
    """Least squares subject to beta' Lambda beta <= bound.

    The unconstrained minimum-norm solution is returned when it already
    satisfies the constraint; otherwise the Lagrange multiplier is bisected
    until the constraint value is within a 1e-6 relative tolerance of the
    bound (at most 200 iterations).
    """
    reg = reg or RegularizationConfig()
    k = matrix.shape[1]
    if lambda_matrix is not None:
        lam = np.asarray(lambda_matrix, dtype=float)
        if lam.shape != (k, k):
            raise ConfigError(f"lambda matrix must be {k}x{k}")
        try:
            np.linalg.cholesky(lam)
        except np.linalg.LinAlgError:
            raise ConfigError("lambda matrix must be positive definite")
    elif reg.lambda_diag is not None:
        if len(reg.lambda_diag) != k:
            raise ConfigError(f"lambda_diag must have length {k}")
        lam = np.diag(reg.lambda_diag)
    else:
        lam = np.eye(k)

    def quad(v: np.ndarray) -> float:
        return float(v @ lam @ v)

    if reg.bound == 0.0:
        beta = np.zeros(k)
        return SolveResult(beta, np.inf, float(np.linalg.norm(b)), True, 0)
    beta, *_ = np.linalg.lstsq(matrix, b, rcond=None)
    if quad(beta) <= reg.bound:
        return SolveResult(
            beta, 0.0, float(np.linalg.norm(matrix @ beta - b)), False, 0
        )
    mtm = matrix.T @ matrix
    mtb = matrix.T @ b

    def solve_mu(mu: float) -> np.ndarray:
        return np.linalg.solve(mtm + mu * lam, mtb)

    tol = 1e-6 * max(1.0, reg.bound)
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if quad(solve_mu(hi)) <= reg.bound:
            break
        hi *= 10.0
    else:
        raise SolverError("could not bracket the constraint multiplier")
    n_iter = 0
    for n_iter in range(1, 201):
        mid = 0.5 * (lo + hi)
        beta = solve_mu(mid)
        gap = quad(beta) - reg.bound
        if abs(gap) <= tol:
            return SolveResult(
                beta, mid, float(np.linalg.norm(matrix @ beta - b)), True, n_iter
            )
        if gap > 0:
            lo = mid
        else:
            hi = mid
    beta = solve_mu(hi)
    gap = quad(beta) - reg.bound
    if gap <= tol:  # feasible endpoint, accept
        return SolveResult(
            beta, hi, float(np.linalg.norm(matrix @ beta - b)), True, n_iter
        )
    raise SolverError(
        f"bisection did not converge in 200 iterations (constraint gap {gap:.3e})"
    )


def _clamp_weights(zeta: np.ndarray, pi_min: float) -> tuple[np.ndarray, float]:
    raw = 1.0 + zeta
    hi = 1.0 / pi_min
    w = np.clip(raw, 1.0, hi)
    frac = float(np.mean((raw < 1.0) | (raw > hi))) if raw.size else 0.0
    return w, frac


def corrected_weights(
    d: Dataset,
    zeta_fn: Callable[[tuple[float, ...], float, float], float],
    pi_min: float = 0.05,
) -> tuple[np.ndarray, float]:
    """Truncated response weights 1 + zeta over the complete cases of d.

    zeta_fn maps (x tuple, t, y) to the estimated response odds.  Returns the
    weight vector aligned with complete_cases(d).units and the fraction of
    units whose raw weight fell outside [1, 1/pi_min].
    """
    from .core import complete_cases

    cc = complete_cases(d)
    zeta = np.array([zeta_fn(u.x, u.t, u.y) for u in cc.units], dtype=float)
    return _clamp_weights(zeta, pi_min)


# ============================================================
# Weighted outcome regression and the full estimator
# ============================================================


def _weighted_mu(
    tq: float,
    xq: np.ndarray,
    t: np.ndarray,
    xmat: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    t_kind: VariableKind,
    x_kinds: tuple[VariableKind, ...],
    tuning: NpTuning,
) -> float:
    k = w.copy()
    if t_kind is VariableKind.BINARY:
        k *= (t == tq).astype(float)
    else:
        k *= _gauss((t - tq) / tuning.bw("reg_t"))
    for j, kind in enumerate(x_kinds):
        if kind is VariableKind.BINARY:
            k *= (xmat[:, j] == xq[j]).astype(float)
        else:
            k *= _gauss((xmat[:, j] - xq[j]) / tuning.bw(f"reg_x{j}"))
    mass = float(k.sum())
    if mass < _EPS:
        raise EstimationError(
            f"no complete cases near the query cell (t={tq:g}, x={tuple(xq)})"
        )
    return float(k @ y) / mass


def estimate_cate_np(
    d: Dataset,
    assumption: MissingnessAssumption,
    x: Sequence[float],
    t1: float,
    t0: float,
    *,
    sieve: SieveConfig | None = None,
    reg: RegularizationConfig | None = None,
    tuning: NpTuning | None = None,
) -> CateEstimate:
    """Series-weighted nonparametric effect estimate at covariate profile x.

    Under the outcome-independent mechanism (or stronger) this is the plain
    complete-case regression.  Otherwise the response odds are estimated by
    the two-stage series fit implied by the assumption's instrument role and
    the complete cases are reweighted before the outcome regression.  Pass
    ``tuning`` from a previous ``plan_np`` call to freeze all smoothing
    choices (bootstrap resamples must do this).
    """
    sieve = sieve or SieveConfig()
    reg = reg or RegularizationConfig()
    xq = np.asarray([float(v) for v in x])
    if xq.shape[0] != d.p:
        raise ConfigError(f"query covariate vector must have length {d.p}")
    if tuning is None:
        tuning = plan_np(d, assumption, x, t1, t0, sieve)
    cols = as_columns(d)
    base = (cols.rt == 1) & np.all(cols.rx == 1, axis=1)
    cc = base & (cols.ry == 1)
    if not np.any(cc):
        raise EstimationError("no complete cases")
    details: dict = {"mode": tuning.mode, "warnings": []}

    if tuning.mode == "cca":
        w = np.ones(int(cc.sum()))
        details["clamp_fraction"] = 0.0
    elif tuning.mode == "stratified":
        zeta = np.zeros(int(cc.sum()))
        covered = np.zeros(int(cc.sum()), dtype=bool)
        residuals = []
        for ci in range(len(tuning.cells)):
            fs = build_first_stage(d, assumption, tuning, cell_index=ci)
            details["warnings"].extend(fs.warnings)
            sol = solve_regularized(fs.matrix, fs.b, reg)
            residuals.append(sol.residual)
            m_cell = _cell_mask(d, assumption, cols, base, tuning.cells[ci]) & cc
            sel = m_cell[cc]
            if np.any(sel):
                zeta[sel] = _zeta_values(tuning, sol.beta, None, cols.y[cc][sel])
                covered[sel] = True
        details["residuals"] = tuple(residuals)
        w, frac = _clamp_weights(zeta, reg.pi_min)
        w[~covered] = 1.0  # outside solved cells; exact matching keeps them out
        details["clamp_fraction"] = frac
    else:
        fs = build_first_stage(d, assumption, tuning)
        details["warnings"].extend(fs.warnings)
        sol = solve_regularized(fs.matrix, fs.b, reg)
        details["residuals"] = (sol.residual,)
        inst, inst_kind, cond, cond_kind, _ = _roles(d, assumption, cols, base)
        zeta = _zeta_values(tuning, sol.beta, cond[cc], cols.y[cc])
        w, frac = _clamp_weights(zeta, reg.pi_min)
        details["clamp_fraction"] = frac

    t_cc = cols.t[cc]
    x_cc = cols.x[cc]
    y_cc = cols.y[cc]
    mu1 = _weighted_mu(float(t1), xq, t_cc, x_cc, y_cc, w, d.t_kind, d.x_kinds, tuning)
    mu0 = _weighted_mu(float(t0), xq, t_cc, x_cc, y_cc, w, d.t_kind, d.x_kinds, tuning)
    details["mu"] = (mu1, mu0)
    details["tuning"] = tuning
    return CateEstimate(
        tau=mu1 - mu0,
        t1=float(t1),
        t0=float(t0),
        x_query=tuple(float(v) for v in xq),
        estimator="np",
        details=details,
    )
