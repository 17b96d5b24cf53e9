"""Joint asymptotic covariance of the estimated bounds and the source ATE,
and the delta-method loadings that turn it into standard errors for the
robust predictions.

The joint limit of sqrt(n) * (V_hat_p - V_p, V_hat_o - V_o, tau_hat - tau*)
is mean-zero normal with covariance Sigma. Two estimation routes are
provided: a closed form from arm moments (valid for the Neyman bounds) and
a per-observation influence-function plug-in (valid for the sharp bounds),
plus a bootstrap as a robustness check. All matrices use the row/column
order (V_p, V_o, tau*).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .bounds import VarianceBounds
from .exceptions import DensityError, DomainError, InsufficientData, UnsupportedRegime, ValidationError, ZeroTauError
from .moments import ArmMoments
from .sample import ExperimentalSample, quantile_at
from .solver import RobustConfig, penalty_derivs

__all__ = [
    "SigmaMethod",
    "SigmaMatrix",
    "Loadings",
    "NearEqualVariancesWarning",
    "sigma_neyman",
    "sigma_sharp",
    "sigma_bootstrap",
    "loadings",
    "prediction_sds",
    "zero_tau_limit_sd",
]

DENSITY_FLOOR = 1e-6
U_TRIM_MAX = 0.01
U_TRIM_MIN = 2.5e-4


def _u_trim(n_min: int) -> float:
    """Tail trim for the u-grid, tightening as the smaller arm grows.

    Trimming controls the 1/f-weighted tail blowup, but a fixed trim leaves
    an O(trim) bias in the fourth-moment-sized entries (the clipped quantile
    influence stops cancelling against the arm-variance influence out in the
    tails), so the band widens with sample size: never wider than 1%, never
    narrower than 0.025%.
    """
    return min(U_TRIM_MAX, max(1.0 / n_min, U_TRIM_MIN))


class NearEqualVariancesWarning(UserWarning):
    """The two arm variances are nearly equal, so the lower Neyman bound sits
    at the edge of its regular regime and its standard error is fragile."""


class SigmaMethod(str, enum.Enum):
    NEYMAN_ANALYTIC = "neyman_analytic"
    SHARP_PLUGIN = "sharp_plugin"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class SigmaMatrix:
    """3x3 covariance of the joint limit, order (V_p, V_o, tau*).

    Construction symmetrizes, validates nonnegative diagonals, and repairs
    indefiniteness beyond plug-in noise (smallest eigenvalue below
    -1e-8 * trace) by clipping negative eigenvalues to zero.
    """

    entries: np.ndarray
    method: SigmaMethod

    def __post_init__(self):
        s = np.asarray(self.entries, dtype=float)
        if s.shape != (3, 3):
            raise ValidationError(f"expected a 3x3 matrix, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValidationError("covariance matrix has non-finite entries")
        scale = max(1.0, float(np.abs(s).max()))
        if np.abs(s - s.T).max() > 1e-12 * scale:
            raise ValidationError("covariance matrix is not symmetric")
        s = 0.5 * (s + s.T)
        if np.any(np.diag(s) < -1e-12 * scale):
            raise ValidationError("negative variance on the diagonal")
        eigval, eigvec = np.linalg.eigh(s)
        if eigval[0] < -1e-8 * max(s.trace(), 0.0):
            s = (eigvec * np.maximum(eigval, 0.0)) @ eigvec.T
            s = 0.5 * (s + s.T)
        s.setflags(write=False)
        object.__setattr__(self, "entries", s)
        object.__setattr__(self, "method", SigmaMethod(self.method))

    @property
    def sigma_tau(self) -> float:
        """Asymptotic standard deviation of sqrt(n)(tau_hat - tau*)."""
        return math.sqrt(max(self.entries[2, 2], 0.0))


@dataclass(frozen=True)
class Loadings:
    """Delta-method loadings for the two robust predictions.

    ``d_p``/``d_o`` are the gradients of the first-order condition value
    with respect to (V_p, V_o, tau*); ``m_pp``/``m_oo`` are the objective
    curvatures at the respective optima. The asymptotic variance of
    sqrt(n)(tau_hat_b - tau_b) is (d_b/m_bb)' Sigma (d_b/m_bb).
    """

    d_p: np.ndarray
    d_o: np.ndarray
    m_pp: float
    m_oo: float

    def __post_init__(self):
        for name, val in (("m_pp", self.m_pp), ("m_oo", self.m_oo)):
            if not (math.isfinite(val) and val > 0.0):
                raise ValidationError(f"curvature {name} must be positive, got {val}")
        for name, vec in (("d_p", self.d_p), ("d_o", self.d_o)):
            v = np.asarray(vec, dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValidationError(f"{name} must be a finite 3-vector")
            v.setflags(write=False)
            object.__setattr__(self, name, v)


# ------------------------------------------------------------- Neyman route


def sigma_neyman(moments: ArmMoments) -> SigmaMatrix:
    """Closed-form plug-in covariance for the Neyman bounds.

    The bounds (sigma1 +- sigma0)^2 are smooth in the two arm variances, so
    the delta method gives loadings (1 +- sigma0/sigma1) and
    (1 +- sigma1/sigma0) on the per-arm variance influence functions, which
    are independent across arms. Third/fourth central moments enter through
    Var and Cov of the variance estimators.

    Raises
    ------
    DomainError
        If either arm variance is zero.

    Warns
    -----
    NearEqualVariancesWarning
        When sigma1^2/sigma0^2 is within 1e-3 of 1; the lower-bound loading
        then nearly vanishes and its standard error is unreliable.
    """
    s1_sq, s0_sq = moments.sigma1_sq, moments.sigma0_sq
    if s1_sq <= 0.0 or s0_sq <= 0.0:
        raise DomainError("both arm variances must be positive for the Neyman covariance")
    if abs(s1_sq / s0_sq - 1.0) < 1e-3:
        warnings.warn(
            "arm variances nearly equal; the lower Neyman bound is weakly identified",
            NearEqualVariancesWarning,
            stacklevel=2,
        )
    e = moments.e_hat
    s1, s0 = math.sqrt(s1_sq), math.sqrt(s0_sq)
    a_plus, a_minus = 1.0 + s0 / s1, 1.0 - s0 / s1
    b_plus, b_minus = 1.0 + s1 / s0, 1.0 - s1 / s0
    # variances/covariances of the per-arm influence pieces
    w1 = (moments.mu4_1 - s1_sq**2) / e
    w0 = (moments.mu4_0 - s0_sq**2) / (1.0 - e)
    c1 = moments.mu3_1 / e
    c0 = moments.mu3_0 / (1.0 - e)
    var_tau = s1_sq / e + s0_sq / (1.0 - e)

    s = np.empty((3, 3))
    s[0, 0] = a_plus**2 * w1 + b_plus**2 * w0
    s[1, 1] = a_minus**2 * w1 + b_minus**2 * w0
    s[0, 1] = s[1, 0] = a_plus * a_minus * w1 + b_plus * b_minus * w0
    s[0, 2] = s[2, 0] = a_plus * c1 - b_plus * c0
    s[1, 2] = s[2, 1] = a_minus * c1 - b_minus * c0
    s[2, 2] = var_tau
    return SigmaMatrix(entries=s, method=SigmaMethod.NEYMAN_ANALYTIC)


# -------------------------------------------------------------- sharp route


def _silverman_bandwidth(y: np.ndarray) -> float:
    sd = float(y.std())
    q25, q75 = np.percentile(y, [25.0, 75.0])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    return 0.9 * spread * y.shape[0] ** (-0.2)


def _kde_at(data: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    """Gaussian-kernel density of ``data`` evaluated at points ``x``."""
    out = np.empty(x.shape[0])
    norm = 1.0 / (data.shape[0] * h * math.sqrt(2.0 * math.pi))
    # chunk the evaluation grid to cap the kernel matrix at ~4M entries
    step = max(1, 4_000_000 // max(data.shape[0], 1))
    for start in range(0, x.shape[0], step):
        z = (x[start : start + step, None] - data[None, :]) / h
        out[start : start + step] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return out


def _quantile_influence_integrals(
    arm_sorted: np.ndarray,
    y_all: np.ndarray,
    mask: np.ndarray,
    frac: float,
    u: np.ndarray,
    du: float,
    q_vals: np.ndarray,
    f_vals: np.ndarray,
    weights: np.ndarray,
) -> np.ndarray:
    """Per-observation value of integral Qdot(u) * weights(u) du for one arm.

    Qdot_i(u) = -[1{Y_i <= Q(u)} - u] / (frac * f(Q(u))) for observations in
    the arm and 0 otherwise. The indicator is a step in u, so the integral
    collapses to a suffix sum over the grid plus one searchsorted per
    observation.
    """
    a = du * weights / f_vals
    suffix = np.concatenate((np.cumsum(a[::-1])[::-1], [0.0]))
    const = float(np.dot(u, a))
    k = np.searchsorted(q_vals, y_all[mask], side="left")
    out = np.zeros(y_all.shape[0])
    out[mask] = -(suffix[k] - const) / frac
    return out


def sigma_sharp(sample: ExperimentalSample, grid_size: int = 400) -> SigmaMatrix:
    """Influence-function plug-in covariance for the sharp bounds.

    Builds per-observation influence values for (V_hat_p, V_hat_o, tau_hat)
    — combining arm-mean, arm-variance, and quantile-process contributions,
    the latter through kernel density estimates evaluated at the empirical
    quantiles on a trimmed uniform u-grid — and returns their empirical
    covariance.

    Parameters
    ----------
    sample : ExperimentalSample
        At least 30 observations per arm.
    grid_size : int
        Number of u-grid points (>= 200) on the trimmed band
        [trim, 1 - trim], where trim shrinks from 1% toward 0.025% as the
        smaller arm grows (see _u_trim).

    Raises
    ------
    InsufficientData
        If either arm has fewer than 30 observations.
    DomainError
        If grid_size < 200.
    DensityError
        If an estimated arm density falls below 1e-6 anywhere the integrals
        need it (extremely heavy tails or degenerate spread).
    """
    if sample.n1 < 30 or sample.n0 < 30:
        raise InsufficientData(
            f"influence-function covariance needs >= 30 per arm, got n1={sample.n1}, n0={sample.n0}"
        )
    if grid_size < 200:
        raise DomainError(f"grid_size must be >= 200, got {grid_size}")

    y = sample.outcomes
    t_mask = sample.treatments == 1
    y1 = np.sort(y[t_mask])
    y0 = np.sort(y[~t_mask])
    e = sample.n1 / sample.n
    tau1, tau0 = float(y1.mean()), float(y0.mean())
    s1_sq, s0_sq = float(y1.var()), float(y0.var())

    trim = _u_trim(min(sample.n1, sample.n0))
    du = (1.0 - 2.0 * trim) / grid_size
    u = trim + (np.arange(grid_size) + 0.5) * du  # symmetric: 1-u is a flip

    q1 = quantile_at(y1, u)
    q0 = quantile_at(y0, u)

    # arm-mean and arm-variance influence pieces (exactly zero off-arm)
    tau1_dot = np.where(t_mask, (y - tau1) / e, 0.0)
    tau0_dot = np.where(~t_mask, (y - tau0) / (1.0 - e), 0.0)
    tau_dot = tau1_dot - tau0_dot
    sig1_dot = np.where(t_mask, ((y - tau1) ** 2 - s1_sq) / e, 0.0)
    sig0_dot = np.where(~t_mask, ((y - tau0) ** 2 - s0_sq) / (1.0 - e), 0.0)

    # quantile-process contributions to the coupling integrals; a zero-spread
    # arm contributes no sampling noise, so its piece is identically zero
    zeros = np.zeros(sample.n)
    int_q1_co = int_q1_anti = zeros
    if y1[0] < y1[-1]:
        h1 = _silverman_bandwidth(y1)
        f1 = _kde_at(y1, q1, h1)
        if np.any(f1 < DENSITY_FLOOR):
            raise DensityError("treated-arm density below floor on the u-grid")
        int_q1_co = _quantile_influence_integrals(y1, y, t_mask, e, u, du, q1, f1, weights=q0)
        int_q1_anti = _quantile_influence_integrals(y1, y, t_mask, e, u, du, q1, f1, weights=q0[::-1])
    int_q0_co = int_q0_anti = zeros
    if y0[0] < y0[-1]:
        h0 = _silverman_bandwidth(y0)
        f0 = _kde_at(y0, q0, h0)
        if np.any(f0 < DENSITY_FLOOR):
            raise DensityError("control-arm density below floor on the u-grid")
        int_q0_co = _quantile_influence_integrals(y0, y, ~t_mask, 1.0 - e, u, du, q0, f0, weights=q1)
        int_q0_anti = _quantile_influence_integrals(y0, y, ~t_mask, 1.0 - e, u, du, q0, f0, weights=q1[::-1])

    theta_o_dot = int_q1_co + int_q0_co
    theta_p_dot = int_q1_anti + int_q0_anti
    gamma_dot = tau0 * tau1_dot + tau1 * tau0_dot
    vp_dot = sig1_dot + sig0_dot - 2.0 * (theta_p_dot - gamma_dot)
    vo_dot = sig1_dot + sig0_dot - 2.0 * (theta_o_dot - gamma_dot)

    psi = np.column_stack((vp_dot, vo_dot, tau_dot))
    psi -= psi.mean(axis=0)
    entries = psi.T @ psi / sample.n
    return SigmaMatrix(entries=entries, method=SigmaMethod.SHARP_PLUGIN)


# ----------------------------------------------------------------- bootstrap


def sigma_bootstrap(
    sample: ExperimentalSample,
    method: str = "sharp",
    draws: int = 500,
    seed=None,
) -> SigmaMatrix:
    """Nonparametric bootstrap covariance (resampling within arms).

    A robustness check against the analytic routes; not used by the
    default inference path.
    """
    from .bounds import neyman_bounds, sharp_bounds_empirical

    if draws < 2:
        raise DomainError(f"need at least 2 bootstrap draws, got {draws}")
    use_sharp = str(method) == "sharp"
    rng = np.random.default_rng(seed)
    y1 = sample.treated
    y0 = sample.control
    stats = np.empty((draws, 3))
    for b in range(draws):
        r1 = y1[rng.integers(0, y1.shape[0], y1.shape[0])]
        r0 = y0[rng.integers(0, y0.shape[0], y0.shape[0])]
        if use_sharp:
            res = ExperimentalSample(
                np.concatenate((r1, r0)),
                np.concatenate((np.ones(r1.shape[0], dtype=np.int8), np.zeros(r0.shape[0], dtype=np.int8))),
            )
            vb = sharp_bounds_empirical(res)
        else:
            vb = neyman_bounds(float(r1.var()), float(r0.var()))
        stats[b] = (vb.v_p, vb.v_o, float(r1.mean() - r0.mean()))
    entries = sample.n * np.cov(stats, rowvar=False, ddof=1)
    return SigmaMatrix(entries=entries, method=SigmaMethod.BOOTSTRAP)


# ----------------------------------------------------------------- loadings


def loadings(
    tau_star: float,
    bounds: VarianceBounds,
    tau_p: float,
    tau_o: float,
    config: RobustConfig,
) -> Loadings:
    """Gradients and curvatures for the sandwich variance of (tau_p, tau_o).

    Slot order matches SigmaMatrix: (V_p, V_o, tau*). The slot for the
    other bound is structurally zero because each prediction depends on one
    variance bound only.

    Raises
    ------
    ZeroTauError
        If either prediction is numerically zero (|tau_b| < 1e-10); the
        zero-effect limit law applies there instead.
    DomainError
        If a bound variance is zero and the prediction sits on the kink
        (tau_b = tau*), where the smooth expansion does not exist.
    """
    d = {}
    m = {}
    for slot, (tau_b, v_b) in enumerate(((tau_p, bounds.v_p), (tau_o, bounds.v_o))):
        if abs(tau_b) < 1e-10:
            raise ZeroTauError(
                f"prediction at slot {slot} is numerically zero; use the zero-effect limit"
            )
        gap = tau_star - tau_b
        a_sq = v_b + gap * gap
        if a_sq == 0.0:
            raise DomainError("no smooth expansion at v_b = 0 with tau_b = tau_star")
        a = math.sqrt(a_sq)
        vec = np.zeros(3)
        vec[slot] = gap / (2.0 * a_sq * a)  # (tau*-tau_b)/A^2 * dA/dV = gap/(2A^3)
        vec[2] = gap * gap / (a_sq * a) - 1.0 / a  # gap/A^2 * dA/dtau* - 1/A
        _, _, b_dd = penalty_derivs(tau_b, config.q)
        d[slot] = vec
        m[slot] = v_b / (a_sq * a) + config.delta * b_dd
    return Loadings(d_p=d[0], d_o=d[1], m_pp=m[0], m_oo=m[1])


def prediction_sds(ld: Loadings, sigma: SigmaMatrix, conditional: bool = False) -> tuple[float, float]:
    """Asymptotic SDs of sqrt(n)(tau_hat_b - tau_b) for b in {p, o}.

    With ``conditional=True`` the tau* slot of each loading is zeroed,
    giving the variance that treats the source effect as fixed — the
    quantity the two-step interval needs on its first-step grid.
    """
    out = []
    for vec, curv in ((ld.d_p, ld.m_pp), (ld.d_o, ld.m_oo)):
        v = vec.copy()
        if conditional:
            v[2] = 0.0
        out.append(math.sqrt(max(v @ sigma.entries @ v, 0.0)) / curv)
    return out[0], out[1]


def conditional_sd_grid(
    t_grid: np.ndarray,
    tau_b_grid: np.ndarray,
    v_b: float,
    sigma_bb: float,
    config: RobustConfig,
) -> np.ndarray:
    """Vectorized conditional prediction SD along a grid of source effects.

    Equivalent to prediction_sds(..., conditional=True) one slot at a time:
    with the tau* slot zeroed only the own-bound loading survives, so the
    variance is (gap/(2A^3))^2 * sigma_bb / M''^2.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    tau_b_grid = np.asarray(tau_b_grid, dtype=float)
    gap = t_grid - tau_b_grid
    a_sq = v_b + gap * gap
    a = np.sqrt(a_sq)
    d1 = gap / (2.0 * a_sq * a)
    z = np.abs(tau_b_grid)
    q, delta = config.q, config.delta
    b_dd = 2.0 * (q - 1.0) * z ** (q - 2.0) * (2.0 + z**q) ** (1.0 / q - 2.0)
    m = v_b / (a_sq * a) + delta * b_dd
    return np.abs(d1) * math.sqrt(max(sigma_bb, 0.0)) / m


def zero_tau_limit_sd(sigma_tau: float, v_b: float, config: RobustConfig) -> float:
    """Limiting SD of sqrt(n) * tau_hat_b when the source effect is zero.

    Equals sigma_tau / (1 + delta * sqrt(V_b/2)) for q = 2 and plain
    sigma_tau for q > 2. Diagnostic only: the two-step procedure never
    reaches this regime because its first step must reject a zero effect.

    Raises
    ------
    UnsupportedRegime
        For q < 2, where the limit law is non-normal.
    DomainError
        On nonpositive sigma_tau or negative v_b.
    """
    if config.q < 2.0:
        raise UnsupportedRegime("zero-effect limit is non-normal for q < 2")
    if sigma_tau <= 0.0:
        raise DomainError(f"sigma_tau must be positive, got {sigma_tau}")
    if v_b < 0.0:
        raise DomainError(f"variance bound must be nonnegative, got {v_b}")
    if config.q == 2.0:
        return sigma_tau / (1.0 + config.delta * math.sqrt(v_b / 2.0))
    return sigma_tau
