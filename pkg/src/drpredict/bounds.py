"""Lower and upper bounds on the variance of the individual treatment effect.

The variance of Y(1) - Y(0) is not identified from marginal arm data; it is
bracketed by the variance under the comonotone coupling (lower bound, v_o)
and under the antitonic coupling (upper bound, v_p). Two routes are offered:
the coupling-based sharp bounds and the coarser Cauchy-Schwarz (Neyman)
bounds, which only need the two arm variances.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, InsufficientData, ValidationError
from .sample import ExperimentalSample, quantile_at

__all__ = [
    "BoundsMethod",
    "VarianceBounds",
    "neyman_bounds",
    "sharp_bounds_empirical",
    "sharp_bounds_population",
]


class BoundsMethod(str, enum.Enum):
    SHARP = "sharp"
    NEYMAN = "neyman"


@dataclass(frozen=True)
class VarianceBounds:
    """A bracket [v_o, v_p] for Var(Y(1) - Y(0)).

    ``v_o`` is the optimistic (lower) bound, ``v_p`` the pessimistic (upper)
    bound. Construction enforces 0 <= v_o <= v_p, absorbing sub-roundoff
    violations by clamping.
    """

    v_o: float
    v_p: float
    method: BoundsMethod

    def __post_init__(self):
        v_o, v_p = float(self.v_o), float(self.v_p)
        scale = max(1.0, abs(v_o), abs(v_p))
        tol = 1e-10 * scale
        if v_o < -tol:
            raise ValidationError(f"v_o must be nonnegative, got {v_o}")
        if v_o > v_p + tol:
            raise ValidationError(f"bound ordering violated: v_o={v_o} > v_p={v_p}")
        v_o = min(max(v_o, 0.0), max(v_p, 0.0))
        v_p = max(v_p, v_o)
        object.__setattr__(self, "v_o", v_o)
        object.__setattr__(self, "v_p", v_p)
        object.__setattr__(self, "method", BoundsMethod(self.method))


def neyman_bounds(sigma1_sq: float, sigma0_sq: float) -> VarianceBounds:
    """Cauchy-Schwarz bounds (sigma1 -+ sigma0)^2 from the arm variances alone.

    Raises
    ------
    DomainError
        If either variance is negative.
    """
    if sigma1_sq < 0 or sigma0_sq < 0:
        raise DomainError(
            f"variances must be nonnegative, got ({sigma1_sq}, {sigma0_sq})"
        )
    s1, s0 = math.sqrt(sigma1_sq), math.sqrt(sigma0_sq)
    return VarianceBounds(v_o=(s1 - s0) ** 2, v_p=(s1 + s0) ** 2, method=BoundsMethod.NEYMAN)


def merged_u_grid(n1: int, n0: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints and widths of the partition of (0,1] on which both arms'
    empirical quantile functions are simultaneously constant.

    Breakpoints are {k/n1} union {k/n0}; integrating any product of the two
    step quantile functions against this partition is exact. The partition
    is symmetric under u -> 1-u, so reversals (antitonic integrands) reuse
    the same grid.
    """
    ticks = np.union1d(
        np.arange(1, n1 + 1, dtype=float) / n1,
        np.arange(1, n0 + 1, dtype=float) / n0,
    )
    lefts = np.concatenate(([0.0], ticks[:-1]))
    widths = ticks - lefts
    mids = lefts + 0.5 * widths
    return mids, widths


def _frechet_covariances(y1_sorted: np.ndarray, y0_sorted: np.ndarray) -> tuple[float, float]:
    """(max, min) covariance of the two empirical marginals over all couplings.

    Cov_U pairs the quantile functions comonotonically, Cov_L antitonically;
    both integrals are exact because the integrand is piecewise constant on
    the merged grid.
    """
    mids, widths = merged_u_grid(y1_sorted.shape[0], y0_sorted.shape[0])
    q1 = quantile_at(y1_sorted, mids)
    q0 = quantile_at(y0_sorted, mids)
    q0_rev = quantile_at(y0_sorted, 1.0 - mids)
    m1 = float(np.dot(widths, q1))
    m0 = float(np.dot(widths, q0))
    cov_u = float(np.dot(widths, q1 * q0)) - m1 * m0
    cov_l = float(np.dot(widths, q1 * q0_rev)) - m1 * m0
    return cov_u, cov_l


def sharp_bounds_empirical(sample: ExperimentalSample) -> VarianceBounds:
    """Coupling-based (Frechet-Hoeffding) bounds from an experimental sample.

    v_o = Var(Y1) + Var(Y0) - 2*Cov_U and v_p = Var(Y1) + Var(Y0) - 2*Cov_L,
    where Cov_U / Cov_L are the maximal (comonotone) and minimal (antitonic)
    covariances compatible with the two empirical marginals. A slightly
    negative v_o from floating-point cancellation is clamped to zero.

    Raises
    ------
    InsufficientData
        If either arm has fewer than two observations.
    """
    if sample.n1 < 2 or sample.n0 < 2:
        raise InsufficientData(
            f"need >= 2 observations per arm, got n1={sample.n1}, n0={sample.n0}"
        )
    y1 = np.sort(sample.treated)
    y0 = np.sort(sample.control)
    var1 = float(y1.var())
    var0 = float(y0.var())
    cov_u, cov_l = _frechet_covariances(y1, y0)
    v_o = var1 + var0 - 2.0 * cov_u
    v_p = var1 + var0 - 2.0 * cov_l
    return VarianceBounds(v_o=max(v_o, 0.0), v_p=max(v_p, 0.0), method=BoundsMethod.SHARP)


def sharp_bounds_population(q1, q0, grid_size: int = 10_000) -> VarianceBounds:
    """Coupling-based bounds from known quantile functions.

    Means, variances, and the extremal covariances are all evaluated with
    the midpoint rule on a uniform grid over (0,1), so quantile callables
    only ever see interior points. Used to compute population targets.

    Parameters
    ----------
    q1, q0 : callable
        Vectorized quantile functions defined on (0, 1).
    grid_size : int
        Number of quadrature points, at least 100.

    Raises
    ------
    DomainError
        If ``grid_size`` < 100.
    """
    if grid_size < 100:
        raise DomainError(f"grid_size must be >= 100, got {grid_size}")
    u = (np.arange(grid_size) + 0.5) / grid_size
    v1 = np.asarray(q1(u), dtype=float)
    v0 = np.asarray(q0(u), dtype=float)
    m1, m0 = v1.mean(), v0.mean()
    var1 = float(v1.var())
    var0 = float(v0.var())
    cov_u = float((v1 * v0).mean()) - m1 * m0
    # The grid is symmetric under u -> 1-u, so the antitonic pairing is a flip.
    cov_l = float((v1 * v0[::-1]).mean()) - m1 * m0
    v_o = var1 + var0 - 2.0 * cov_u
    v_p = var1 + var0 - 2.0 * cov_l
    return VarianceBounds(v_o=max(v_o, 0.0), v_p=max(v_p, 0.0), method=BoundsMethod.SHARP)
