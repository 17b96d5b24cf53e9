"""Minimax-robust prediction of a treatment effect under distribution shift.

The predictor minimizes the worst-case mean-squared error over target
populations within a transport-cost ball of radius ``delta`` around the
source. By duality this reduces to a one-dimensional convex problem

    M(tau) = sqrt(v + (tau_star - tau)^2) + delta * (2 + |tau|^q)^(1/q)

whose minimizer shrinks the source effect ``tau_star`` toward zero by an
amount governed by the radius, the penalty order q, and the (partially
identified) effect-variance v. Solving at the lower and upper variance
bounds yields the optimistic/pessimistic prediction pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bounds import VarianceBounds
from .exceptions import ConvergenceError, DomainError, ValidationError

__all__ = [
    "RobustConfig",
    "BoundEstimates",
    "SweepPoint",
    "dual_objective",
    "solve_minimax",
    "homogeneous_threshold",
    "sweep_delta",
    "predict_bounds",
    "proximity_derivs",
    "penalty_derivs",
]

_BRACKET_TOL = 1e-12
_MAX_ITER = 200
_INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0  # 1/phi


@dataclass(frozen=True)
class RobustConfig:
    """Ambiguity-set configuration: transport radius and penalty order.

    ``q`` is the dual exponent of the transport cost's norm order p
    (1/p + 1/q = 1); larger p means a softer penalty (smaller q).
    """

    delta: float
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta >= 0.0):
            raise ValidationError(f"delta must be finite and >= 0, got {self.delta}")
        if not (math.isfinite(self.q) and self.q >= 1.0):
            raise ValidationError(f"q must be finite and >= 1, got {self.q}")

    @classmethod
    def from_p(cls, delta: float, p: float) -> "RobustConfig":
        """Build a config from the primal norm order p in (1, inf].

        p = inf maps to q = 1 (hard-thresholding penalty).
        """
        if p <= 1.0:
            raise ValidationError(f"norm order p must exceed 1, got {p}")
        q = 1.0 if math.isinf(p) else p / (p - 1.0)
        return cls(delta=delta, q=q)


@dataclass(frozen=True)
class BoundEstimates:
    """Point predictions at both ends of the variance bracket.

    ``tau_p`` solves the minimax problem at v_p (pessimistic, shrinks most),
    ``tau_o`` at v_o. Both share the sign of ``tau_star`` and satisfy
    |tau_p| <= |tau_o| <= |tau_star|.
    """

    tau_star: float
    tau_p: float
    tau_o: float
    config: RobustConfig
    bounds: VarianceBounds

    def __post_init__(self):
        tol = 1e-9 * max(1.0, abs(self.tau_star))
        for name, val in (("tau_p", self.tau_p), ("tau_o", self.tau_o)):
            if val != 0.0 and math.copysign(1.0, val) != math.copysign(1.0, self.tau_star):
                raise ValidationError(f"{name}={val} has different sign than tau_star={self.tau_star}")
        if not (abs(self.tau_p) <= abs(self.tau_o) + tol <= abs(self.tau_star) + 2 * tol):
            raise ValidationError(
                f"ordering |tau_p| <= |tau_o| <= |tau_star| violated: "
                f"({self.tau_p}, {self.tau_o}, {self.tau_star})"
            )


class SweepPoint(NamedTuple):
    delta: float
    tau_p: float
    tau_o: float


# --------------------------------------------------------------- objective


def _penalty_value(tau: float, q: float) -> float:
    z = abs(tau)
    if q == 1.0:
        return 2.0 + z
    if z == 0.0:
        return 2.0 ** (1.0 / q)
    if q * math.log(z) > 500.0:  # |tau|^q overflows; limit is |tau| itself
        return z
    return (2.0 + z**q) ** (1.0 / q)


def dual_objective(tau: float, tau_star: float, v: float, config: RobustConfig) -> float:
    """Worst-case objective M(tau) whose argmin is the robust predictor.

    Raises
    ------
    DomainError
        If v < 0.
    """
    if v < 0.0:
        raise DomainError(f"variance must be nonnegative, got {v}")
    return math.sqrt(v + (tau_star - tau) ** 2) + config.delta * _penalty_value(tau, config.q)


def proximity_derivs(tau: float, tau_star: float, v: float) -> tuple[float, float, float]:
    """Value and first two tau-derivatives of sqrt(v + (tau_star-tau)^2).

    Raises
    ------
    DomainError
        If v < 0, or at the kink (v = 0, tau = tau_star) where the
        derivatives do not exist.
    """
    if v < 0.0:
        raise DomainError(f"variance must be nonnegative, got {v}")
    g = v + (tau_star - tau) ** 2
    if g == 0.0:
        raise DomainError("derivatives undefined at the kink v=0, tau=tau_star")
    a = math.sqrt(g)
    d1 = (tau - tau_star) / a
    d2 = v / (g * a)
    return a, d1, d2


def penalty_derivs(tau: float, q: float) -> tuple[float, float, float]:
    """Value and first two tau-derivatives of (2 + |tau|^q)^(1/q).

    At tau = 0 the first derivative is 0 for q > 1 (and the subgradient
    midpoint 0 is reported for q = 1); the second derivative is finite only
    for q >= 2 there (it is +inf for 1 < q < 2 and 0 for q = 1 away from 0).
    """
    z = abs(tau)
    s = math.copysign(1.0, tau) if tau != 0.0 else 0.0
    if q == 1.0:
        return 2.0 + z, s, 0.0
    if z == 0.0:
        val = 2.0 ** (1.0 / q)
        if q == 2.0:
            d2 = 2.0 ** (-0.5)
        elif q > 2.0:
            d2 = 0.0
        else:
            d2 = math.inf
        return val, 0.0, d2
    zq = z**q
    base = 2.0 + zq
    val = base ** (1.0 / q)
    d1 = s * z ** (q - 1.0) * base ** (1.0 / q - 1.0)
    d2 = 2.0 * (q - 1.0) * z ** (q - 2.0) * base ** (1.0 / q - 2.0)
    return val, d1, d2


def _foc(tau: float, a: float, v: float, delta: float, q: float) -> float:
    """First-order condition on (0, a) for a = |tau_star| > 0, tau > 0.

    With v = 0 and tau < a the first term is exactly -1, so the same
    expression is the homogeneous-case optimality condition.
    """
    prox = (tau - a) / math.sqrt(v + (a - tau) ** 2)
    return prox + delta * tau ** (q - 1.0) * (2.0 + tau**q) ** (1.0 / q - 1.0)


def _bisect_foc(a: float, v: float, delta: float, q: float) -> float:
    """Bisection for the unique FOC root in (0, a); sign change guaranteed."""
    lo, hi = 0.0, a
    for _ in range(_MAX_ITER):
        if hi - lo <= _BRACKET_TOL:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:  # double-precision floor reached
            return mid
        if _foc(mid, a, v, delta, q) < 0.0:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(
        f"FOC bisection failed to localize the minimizer (a={a}, v={v}, delta={delta}, q={q})"
    )


def _golden_section(fun, lo: float, hi: float) -> float:
    """Golden-section minimization of a unimodal function on [lo, hi]."""
    x1 = hi - _INVGOLD * (hi - lo)
    x2 = lo + _INVGOLD * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(_MAX_ITER):
        if hi - lo <= _BRACKET_TOL:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVGOLD * (hi - lo)
            f1 = fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVGOLD * (hi - lo)
            f2 = fun(x2)
    return 0.5 * (lo + hi)


def homogeneous_threshold(tau_star: float, q: float) -> float:
    """Largest radius with no shrinkage when the effect variance is zero.

    Equals (2/|tau_star|^q + 1)^(1 - 1/q); decreasing in |tau_star|. As
    q -> 1 the value tends to 1 (the q = 1 cutoff), but q = 1 itself is
    rejected here.

    Raises
    ------
    DomainError
        If tau_star = 0 or q <= 1.
    """
    if tau_star == 0.0:
        raise DomainError("threshold undefined for tau_star = 0")
    if q <= 1.0:
        raise DomainError(f"threshold requires q > 1, got {q}")
    return (2.0 / abs(tau_star) ** q + 1.0) ** (1.0 - 1.0 / q)


def solve_minimax(tau_star: float, v: float, config: RobustConfig) -> float:
    """Global minimizer of the robust objective (the shrunken prediction).

    The minimizer lies between 0 and ``tau_star`` and shares its sign.
    Exact special cases: delta = 0 or v = 0 with delta at or below the
    no-shrinkage threshold return ``tau_star`` unchanged; tau_star = 0
    returns 0. With q = 1 the penalty kink can make the minimizer exactly 0
    (hard thresholding); q > 1 always leaves a strictly interior value when
    v > 0.

    Raises
    ------
    DomainError
        If v < 0.
    ConvergenceError
        If the bracketed search fails to converge (indicates a bug, not a
        data condition).
    """
    if v < 0.0:
        raise DomainError(f"variance must be nonnegative, got {v}")
    if config.delta == 0.0:
        return tau_star
    if tau_star == 0.0:
        return 0.0
    sign = math.copysign(1.0, tau_star)
    a = abs(tau_star)
    delta, q = config.delta, config.q

    if q == 1.0:
        # |tau| kink at 0: minimize the objective directly; the optimum may
        # sit exactly on the kink.
        def m(t: float) -> float:
            return math.sqrt(v + (a - t) ** 2) + delta * (2.0 + t)

        t_hat = _golden_section(m, 0.0, a)
        # Value comparisons resolve a smooth interior minimum only to about
        # sqrt(machine eps); polish with the slope, which is monotone
        # increasing on (0, a], to pin the root down to full precision.
        def m_slope(t: float) -> float:
            return (t - a) / math.sqrt(v + (a - t) ** 2) + delta

        w = 1e-3 * max(1.0, a)
        lo, hi = max(t_hat - w, 0.0), min(t_hat + w, a)
        if m_slope(lo) < 0.0 < m_slope(hi):
            for _ in range(_MAX_ITER):
                mid = 0.5 * (lo + hi)
                if not lo < mid < hi:
                    break
                if m_slope(mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
            t_hat = 0.5 * (lo + hi)
        if abs(t_hat) < 1e-10 and m(0.0) <= m(t_hat):
            return 0.0
        return sign * t_hat

    if v == 0.0:
        if delta <= homogeneous_threshold(a, q):
            return tau_star
        return sign * _bisect_foc(a, 0.0, delta, q)

    return sign * _bisect_foc(a, v, delta, q)


def sweep_delta(tau_star: float, bounds: VarianceBounds, q: float, deltas) -> list[SweepPoint]:
    """Prediction pair (tau_p, tau_o) along a grid of radii, for plotting.

    Raises
    ------
    ValidationError
        If ``deltas`` is empty or contains a negative radius.
    """
    deltas = list(deltas)
    if not deltas:
        raise ValidationError("deltas must be nonempty")
    out = []
    for d in deltas:
        cfg = RobustConfig(delta=float(d), q=q)  # validates d >= 0
        out.append(
            SweepPoint(
                delta=float(d),
                tau_p=solve_minimax(tau_star, bounds.v_p, cfg),
                tau_o=solve_minimax(tau_star, bounds.v_o, cfg),
            )
        )
    return out


def predict_bounds(tau_star: float, bounds: VarianceBounds, config: RobustConfig) -> BoundEstimates:
    """Solve at both ends of the variance bracket.

    Because the minimizer shrinks as v grows, the pessimistic prediction
    (at v_p) is the smaller of the two in absolute value.
    """
    return BoundEstimates(
        tau_star=tau_star,
        tau_p=solve_minimax(tau_star, bounds.v_p, config),
        tau_o=solve_minimax(tau_star, bounds.v_o, config),
        config=config,
        bounds=bounds,
    )


# ------------------------------------------------- vectorized grid solver


def _penalty_slope_fn(q: float):
    """Vectorized t -> t^(q-1) (2+t^q)^(1/q-1) with fast paths for the
    common exponents; t is a positive array."""
    if q == 2.0:
        return lambda t: t / np.sqrt(2.0 + t * t)
    if q == 3.0:
        return lambda t: t * t * np.cbrt(2.0 + t**3) / (2.0 + t**3)
    if q == 1.5:
        return lambda t: np.sqrt(t) / np.cbrt(2.0 + t * np.sqrt(t))
    return lambda t: t ** (q - 1.0) * (2.0 + t**q) ** (1.0 / q - 1.0)


def solve_minimax_many(tau_stars: np.ndarray, v: float, config: RobustConfig) -> np.ndarray:
    """Vectorized :func:`solve_minimax` over an array of source effects.

    Requires q > 1 (the grid search of the two-step interval never runs at
    q = 1). Shares one scalar variance across all entries, which is the
    shape the inference grid needs.
    """
    if config.q <= 1.0:
        raise DomainError("vectorized solver requires q > 1")
    if v < 0.0:
        raise DomainError(f"variance must be nonnegative, got {v}")
    tau_stars = np.asarray(tau_stars, dtype=float)
    delta, q = config.delta, config.q
    if delta == 0.0:
        return tau_stars.copy()
    sign = np.sign(tau_stars)
    a = np.abs(tau_stars)
    pos = a > 0.0

    lo = np.zeros_like(a)
    hi = a.copy()
    slope = _penalty_slope_fn(q)
    # 80 halvings take the bracket width below 1e-12 of any relevant scale
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = (mid - a) / np.sqrt(v + (a - mid) ** 2) + delta * slope(mid)
        neg = g < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    out = 0.5 * (lo + hi)

    if v == 0.0:
        # below the no-shrinkage threshold the solution is exactly a
        with np.errstate(divide="ignore"):
            thresh = np.where(pos, (2.0 / a**q + 1.0) ** (1.0 - 1.0 / q), np.inf)
        out = np.where(delta <= thresh, a, out)
    out = np.where(pos, out, 0.0)
    return sign * out
