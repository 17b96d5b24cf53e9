"""Confidence intervals for the robust prediction range.

Two constructions are offered. ``im_interval`` is the classic interval for a
partially identified scalar: it widens the estimated range ``[lo, hi]`` by a
critical value ``c_n`` chosen so that coverage holds uniformly across the
width of the identified set (``c_n`` interpolates between the one-sided and
two-sided normal quantiles). ``two_step_interval`` is the Bonferroni-corrected
union construction: a first-step test that the unrestricted effect differs
from zero, followed by a union of conditional intervals over a grid of
plausible effect values.
"""

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .bounds import BoundsMethod, VarianceBounds, neyman_bounds, sharp_bounds_empirical
from .covariance import (
    SigmaMatrix,
    conditional_sd_grid,
    loadings,
    prediction_sds,
    sigma_neyman,
    sigma_sharp,
)
from .exceptions import DomainError, OrderError, UnsupportedConfig, ValidationError
from .moments import estimate_moments
from .sample import ExperimentalSample
from .solver import RobustConfig, solve_minimax, solve_minimax_many

__all__ = [
    "IMMethod",
    "IntervalEstimate",
    "RobustEstimates",
    "estimate_robust",
    "im_interval",
    "plain_im_interval",
    "two_step_interval",
]

_C_TOL = 1e-10


class IMMethod(str, enum.Enum):
    IM = "im"
    IM_BONFERRONI = "im_bonferroni"


@dataclass(frozen=True)
class IntervalEstimate:
    """A confidence interval plus the diagnostics needed to audit it.

    ``lower``/``upper`` are NaN when a two-step construction stopped at the
    first step (``rejected_first_step`` False): there is no interval to
    report in that case, only the first-step diagnostic.
    """

    lower: float
    upper: float
    alpha: float
    method: IMMethod
    c_values: tuple = ()
    first_step: tuple = None
    grid_points: int = None
    rejected_first_step: bool = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        object.__setattr__(self, "method", IMMethod(self.method))
        if math.isfinite(self.lower) and math.isfinite(self.upper):
            if self.lower > self.upper:
                raise ValidationError(
                    f"inverted interval: [{self.lower}, {self.upper}]"
                )
        elif self.rejected_first_step is not False:
            raise ValidationError("non-finite endpoints require a failed first step")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return bool(self.lower <= value <= self.upper)


def _z(p: float) -> float:
    return float(ndtri(p))


def _im_critical(scaled_width, alpha: float):
    """Solve ndtr(c + w) - ndtr(-c) = 1 - alpha for each scaled width w.

    The root is bisected on [z_{1-alpha}, z_{1-alpha/2}], where the left end
    is the infinite-width limit and the right end the zero-width limit.
    """
    w = np.asarray(scaled_width, dtype=float)
    lo = np.full(w.shape, _z(1.0 - alpha))
    hi = np.full(w.shape, _z(1.0 - alpha / 2.0))
    target = 1.0 - alpha
    for _ in range(80):
        if np.all(hi - lo <= _C_TOL):
            break
        mid = 0.5 * (lo + hi)
        too_high = ndtr(mid + w) - ndtr(-mid) >= target
        hi = np.where(too_high, mid, hi)
        lo = np.where(too_high, lo, mid)
    return 0.5 * (lo + hi)


def im_interval(
    lo_hat: float,
    hi_hat: float,
    sd_lo: float,
    sd_hi: float,
    n: int,
    alpha: float = 0.05,
) -> IntervalEstimate:
    """Uniform-coverage interval for a value only known to lie in a range.

    Returns ``[lo_hat - c_n sd_lo / sqrt(n), hi_hat + c_n sd_hi / sqrt(n)]``
    with ``c_n`` solving ``ndtr(c_n + sqrt(n) (hi - lo) / max(sd)) -
    ndtr(-c_n) = 1 - alpha``.

    Endpoints inverted by less than 1e-10 (estimation noise) are swapped
    with a warning; larger inversions raise OrderError.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if sd_lo < 0.0 or sd_hi < 0.0:
        raise DomainError("standard deviations must be nonnegative")
    if lo_hat > hi_hat:
        if lo_hat - hi_hat >= 1e-10:
            raise OrderError(
                f"lower estimate {lo_hat} exceeds upper estimate {hi_hat}"
            )
        warnings.warn(
            "interval endpoints inverted within numerical noise; swapping",
            UserWarning,
            stacklevel=2,
        )
        lo_hat, hi_hat = hi_hat, lo_hat
        sd_lo, sd_hi = sd_hi, sd_lo

    sd_max = max(sd_lo, sd_hi)
    root_n = math.sqrt(n)
    if sd_max == 0.0:
        c = _z(1.0 - alpha / 2.0) if hi_hat == lo_hat else _z(1.0 - alpha)
        return IntervalEstimate(lo_hat, hi_hat, alpha, IMMethod.IM, c_values=(c,))
    c = float(_im_critical(root_n * (hi_hat - lo_hat) / sd_max, alpha))
    return IntervalEstimate(
        lower=lo_hat - c * sd_lo / root_n,
        upper=hi_hat + c * sd_hi / root_n,
        alpha=alpha,
        method=IMMethod.IM,
        c_values=(c,),
    )


# ------------------------------------------------------- sample -> estimates


@dataclass(frozen=True)
class RobustEstimates:
    """Point estimates and standard deviations for one sample."""

    tau_star: float
    bounds: VarianceBounds
    tau_p: float
    tau_o: float
    sigma: SigmaMatrix
    sd_p: float
    sd_o: float
    n: int


def _estimate_pieces(sample, config, method):
    """Shared per-sample computation: (tau_hat, bounds, sigma)."""
    method = BoundsMethod(method)
    moments = estimate_moments(sample)
    if method is BoundsMethod.SHARP:
        bounds = sharp_bounds_empirical(sample)
        sigma = sigma_sharp(sample)
    else:
        bounds = neyman_bounds(moments.sigma1_sq, moments.sigma0_sq)
        sigma = sigma_neyman(moments)
    return moments.ate, bounds, sigma


def _estimates_from_pieces(tau_star, bounds, sigma, n, config) -> RobustEstimates:
    tau_p = solve_minimax(tau_star, bounds.v_p, config)
    tau_o = solve_minimax(tau_star, bounds.v_o, config)
    if config.delta == 0.0:
        sd_p = sd_o = sigma.sigma_tau
    else:
        ld = loadings(tau_star, bounds, tau_p, tau_o, config)
        sd_p, sd_o = prediction_sds(ld, sigma)
    return RobustEstimates(
        tau_star=tau_star,
        bounds=bounds,
        tau_p=tau_p,
        tau_o=tau_o,
        sigma=sigma,
        sd_p=sd_p,
        sd_o=sd_o,
        n=n,
    )


def estimate_robust(
    sample: ExperimentalSample,
    config: RobustConfig,
    method=BoundsMethod.SHARP,
) -> RobustEstimates:
    """Point estimates, variance bounds, and asymptotic SDs for one sample."""
    tau_star, bounds, sigma = _estimate_pieces(sample, config, method)
    return _estimates_from_pieces(tau_star, bounds, sigma, sample.n, config)


def _plain_im_from_estimates(est: RobustEstimates, alpha: float) -> IntervalEstimate:
    if est.tau_p <= est.tau_o:
        lo, hi, sd_lo, sd_hi = est.tau_p, est.tau_o, est.sd_p, est.sd_o
    else:
        lo, hi, sd_lo, sd_hi = est.tau_o, est.tau_p, est.sd_o, est.sd_p
    return im_interval(lo, hi, sd_lo, sd_hi, est.n, alpha)


def plain_im_interval(
    sample: ExperimentalSample,
    config: RobustConfig,
    method=BoundsMethod.SHARP,
    alpha: float = 0.05,
) -> IntervalEstimate:
    """IM interval for the robust prediction range of one sample.

    Endpoints are ordered numerically (the two predictions swap roles when
    the unrestricted effect is negative) before the IM step.
    """
    est = estimate_robust(sample, config, method)
    return _plain_im_from_estimates(est, alpha)


# -------------------------------------------------------------- two-step CI


def _two_step_from_pieces(
    tau_hat, bounds, sigma, n, config, alpha, beta, grid_points
) -> IntervalEstimate:
    root_n = math.sqrt(n)
    se_tau = sigma.sigma_tau / root_n
    half = _z(1.0 - beta / 2.0) * se_tau
    first = (tau_hat - half, tau_hat + half)
    if first[0] <= 0.0 <= first[1]:
        return IntervalEstimate(
            lower=math.nan,
            upper=math.nan,
            alpha=alpha,
            method=IMMethod.IM_BONFERRONI,
            first_step=first,
            grid_points=grid_points,
            rejected_first_step=False,
        )

    ts = np.linspace(first[0], first[1], grid_points)
    tau_p = solve_minimax_many(ts, bounds.v_p, config)
    tau_o = solve_minimax_many(ts, bounds.v_o, config)
    sd_p = conditional_sd_grid(ts, tau_p, bounds.v_p, sigma.entries[0, 0], config)
    sd_o = conditional_sd_grid(ts, tau_o, bounds.v_o, sigma.entries[1, 1], config)

    p_is_lower = tau_p <= tau_o
    lo = np.where(p_is_lower, tau_p, tau_o)
    hi = np.where(p_is_lower, tau_o, tau_p)
    sd_lo = np.where(p_is_lower, sd_p, sd_o)
    sd_hi = np.where(p_is_lower, sd_o, sd_p)

    alpha2 = alpha - beta
    sd_max = np.maximum(sd_lo, sd_hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(sd_max > 0.0, root_n * (hi - lo) / sd_max, np.inf)
    c = _im_critical(scaled, alpha2)
    lowers = lo - c * sd_lo / root_n
    uppers = hi + c * sd_hi / root_n
    return IntervalEstimate(
        lower=float(lowers.min()),
        upper=float(uppers.max()),
        alpha=alpha,
        method=IMMethod.IM_BONFERRONI,
        c_values=(float(c.min()), float(c.max())),
        first_step=first,
        grid_points=grid_points,
        rejected_first_step=True,
    )


def two_step_interval(
    sample: ExperimentalSample,
    config: RobustConfig,
    method=BoundsMethod.SHARP,
    alpha: float = 0.05,
    beta: float = 0.045,
    grid_points: int = 101,
) -> IntervalEstimate:
    """Bonferroni union interval: test-for-zero first, then a grid union.

    Step 1 forms the 1-beta interval for the unrestricted effect; if it
    contains zero the procedure stops (``rejected_first_step`` False, NaN
    endpoints). Step 2 re-solves the robust predictions at each grid value
    t of the first-step interval, builds the conditional IM interval at
    level 1-(alpha-beta) around each, and returns the union.
    """
    _check_two_step_args(config, alpha, beta, grid_points)
    tau_hat, bounds, sigma = _estimate_pieces(sample, config, method)
    return _two_step_from_pieces(
        tau_hat, bounds, sigma, sample.n, config, alpha, beta, grid_points
    )


def _check_two_step_args(config, alpha, beta, grid_points):
    if config.q <= 1.0:
        raise UnsupportedConfig(
            "two-step inference requires q > 1 (the q = 1 prediction can sit "
            "exactly at zero, where the limit law is non-normal)"
        )
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    if not 0.0 <= beta < alpha:
        raise DomainError(f"beta must be in [0, alpha), got beta={beta}, alpha={alpha}")
    if grid_points < 25:
        raise DomainError(f"grid_points must be >= 25, got {grid_points}")
