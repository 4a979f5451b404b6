"""Check loss, kernels, weighted linear quantile fits and local linear
conditional quantile estimation.

The weighted solver runs iteratively reweighted least squares on a
Huber-smoothed check loss (smoothing cap decreasing geometrically from
1e-1 to 1e-6) followed by one exact vertex polish over the near-active
residuals.  Achieved objectives are within ``rel_tol_objective`` of the
optimum, which the test suite probes by subgradient perturbation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _solver
from .errors import DegenerateWindow


def rel_tol_objective(value: float) -> float:
    """Relative optimality tolerance used for all quantile-regression solves."""
    return 1e-8 * (1.0 + abs(value))


class Kernel(enum.Enum):
    """Symmetric probability densities supported on [-1, 1]."""

    EPANECHNIKOV = "epanechnikov"
    TRIANGULAR = "triangular"
    BIWEIGHT = "biweight"

    def evaluate(self, u):
        """Density value at u; zero outside (-1, 1)."""
        u = np.asarray(u, dtype=float)
        if self is Kernel.EPANECHNIKOV:
            vals = 0.75 * (1.0 - u * u)
        elif self is Kernel.TRIANGULAR:
            vals = 1.0 - np.abs(u)
        else:
            vals = 0.9375 * (1.0 - u * u) ** 2
        out = np.where(np.abs(u) < 1.0, vals, 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def solver_id(self) -> int:
        return {
            Kernel.EPANECHNIKOV: _solver.EPANECHNIKOV,
            Kernel.TRIANGULAR: _solver.TRIANGULAR,
            Kernel.BIWEIGHT: _solver.BIWEIGHT,
        }[self]


def as_kernel(kernel) -> Kernel:
    """Coerce a Kernel or its string id to a Kernel."""
    if isinstance(kernel, Kernel):
        return kernel
    return Kernel(str(kernel).lower())


@dataclass(frozen=True)
class PairedSample:
    """Paired regression observations (x_i, y_i), the substrate of every fit."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.ascontiguousarray(self.xs, dtype=float)
        ys = np.ascontiguousarray(self.ys, dtype=float)
        if xs.ndim != 1 or ys.ndim != 1:
            raise ValueError("xs and ys must be one-dimensional")
        if xs.size != ys.size:
            raise ValueError(f"length mismatch: {xs.size} xs vs {ys.size} ys")
        if xs.size < 2:
            raise ValueError("a paired sample needs at least two observations")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("paired sample values must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.xs.size

    def sorted_by_x(self):
        """(xs, ys) sorted ascending in x, ties kept in input order."""
        order = np.argsort(self.xs, kind="stable")
        return self.xs[order], self.ys[order]


@dataclass(frozen=True)
class LocalFit:
    """Level and slope of one local (or global) linear quantile fit."""

    alpha: float
    beta: float
    x0: float
    n_eff: int


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    return tau


def check_loss(u, tau: float):
    """Quantile check loss u * (tau - 1[u < 0]).

    Nonnegative, convex in u and positively homogeneous of degree one;
    vectorized over u.
    """
    tau = _check_tau(tau)
    arr = np.asarray(u, dtype=float)
    out = arr * (tau - (arr < 0.0))
    return float(out) if out.ndim == 0 else out


def weighted_qr(
    sample: PairedSample,
    tau: float,
    weights,
    x0: float | None = None,
) -> LocalFit:
    """Weighted linear quantile regression.

    With ``x0`` given, minimizes sum_i w_i * rho_tau(y_i - a - b (x_i - x0))
    over (a, b).  With ``x0=None`` fits the intercept-only design, whose
    exact solution is the weighted tau-quantile of ys (beta = 0).
    """
    tau = _check_tau(tau)
    w = np.ascontiguousarray(weights, dtype=float)
    if w.shape != sample.xs.shape:
        raise ValueError("weights must match the sample length")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError("weights must be finite and nonnegative")
    pos = w > 0.0
    n_eff = int(np.count_nonzero(pos))
    if n_eff < 2:
        raise DegenerateWindow(
            f"{n_eff} positively weighted observation(s); at least 2 required"
        )
    if x0 is None:
        alpha = _solver.weighted_quantile(sample.ys[pos], w[pos], tau)
        return LocalFit(alpha=float(alpha), beta=0.0, x0=float("nan"), n_eff=n_eff)
    x0 = float(x0)
    xs_pos = sample.xs[pos]
    if np.all(xs_pos == xs_pos[0]):
        raise DegenerateWindow(
            "all positively weighted covariates coincide; slope unidentifiable"
        )
    a, b = _solver.solve_slope(xs_pos - x0, sample.ys[pos], w[pos], tau)
    return LocalFit(alpha=float(a), beta=float(b), x0=x0, n_eff=n_eff)


def local_linear_quantile(
    sample: PairedSample,
    tau: float,
    x: float,
    h: float,
    kernel: Kernel = Kernel.EPANECHNIKOV,
) -> LocalFit:
    """Local linear conditional quantile fit at x with bandwidth h.

    Kernel weights K((x_i - x) / h) feed the weighted solver with the
    slope design about x; ``alpha`` estimates the conditional
    tau-quantile at x.  Raises DegenerateWindow when fewer than two
    distinct covariates fall strictly inside the window; the caller may
    widen h, this function never widens silently.
    """
    h = float(h)
    if h <= 0.0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    kernel = as_kernel(kernel)
    weights = kernel.evaluate((sample.xs - float(x)) / h)
    return weighted_qr(sample, tau, weights, x0=float(x))


def threshold_curve(
    sample: PairedSample,
    tau_c: float,
    h: float,
    kernel: Kernel,
    grid,
) -> list[LocalFit]:
    """Local linear tau_c-quantile fits along a grid of covariate values.

    The curve is defined pointwise: evaluation at any other x means
    rerunning :func:`local_linear_quantile` there, never interpolating
    the grid.
    """
    tau_c = _check_tau(tau_c)
    h = float(h)
    if h <= 0.0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    grid = np.ascontiguousarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if np.any(np.diff(grid) < 0.0):
        raise ValueError("grid must be sorted ascending")
    lo, hi = sample.xs.min(), sample.xs.max()
    if grid[0] < lo or grid[-1] > hi:
        raise ValueError(f"grid must lie inside the covariate range [{lo}, {hi}]")
    kernel = as_kernel(kernel)
    alphas, betas, neffs = _fit_grid(sample, tau_c, grid, h, kernel)
    bad = np.nonzero(neffs < 2)[0]
    if bad.size == 0:
        bad = np.nonzero(~np.isfinite(alphas))[0]
    if bad.size:
        raise DegenerateWindow(
            f"degenerate window at grid point x={grid[bad[0]]!r} (h={h})"
        )
    return [
        LocalFit(alpha=float(a), beta=float(b), x0=float(g), n_eff=int(m))
        for a, b, g, m in zip(alphas, betas, grid, neffs)
    ]


def _fit_grid(sample, tau, grid, h, kernel, hs=None):
    """Batch local linear fits; returns (alphas, betas, neffs) per grid point.

    With ``hs`` an array of bandwidths the outputs keep the leading
    bandwidth axis.  Degenerate cells come back as nan with neff < 2.
    """
    xs, ys = sample.sorted_by_x()
    grid = np.ascontiguousarray(grid, dtype=float)
    single = hs is None
    hs_arr = np.asarray([h] if single else hs, dtype=float)
    nh, ng = hs_arr.size, grid.size
    alphas = np.empty((nh, ng))
    betas = np.empty((nh, ng))
    neffs = np.empty((nh, ng), dtype=np.int64)
    _solver.batch_curves(
        xs, ys, grid, hs_arr, float(tau), kernel.solver_id, alphas, betas, neffs
    )
    if single:
        return alphas[0], betas[0], neffs[0]
    return alphas, betas, neffs


def _fit_points_tau(sample, px, ptau, h, kernel):
    """Batch local linear fits with a per-point quantile level."""
    xs, ys = sample.sorted_by_x()
    px = np.ascontiguousarray(px, dtype=float)
    ptau = np.ascontiguousarray(ptau, dtype=float)
    alphas = np.empty(px.size)
    neffs = np.empty(px.size, dtype=np.int64)
    _solver.batch_points_tau(
        xs, ys, px, ptau, float(h), kernel.solver_id, alphas, neffs
    )
    return alphas, neffs
