"""Arm-level moment estimation and simple ATE estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, InsufficientData
from .sample import ExperimentalSample

__all__ = ["ArmMoments", "estimate_ate_diff_means", "estimate_ate_ipw", "estimate_moments"]


@dataclass(frozen=True)
class ArmMoments:
    """Central moments of both arms plus the empirical treatment share.

    All moments are the biased (1/n per arm) versions, which is what the
    plug-in asymptotic-variance formulas expect.
    """

    tau1: float
    tau0: float
    sigma1_sq: float
    sigma0_sq: float
    mu3_1: float
    mu3_0: float
    mu4_1: float
    mu4_0: float
    e_hat: float

    @property
    def ate(self) -> float:
        """Difference in means tau1 - tau0."""
        return self.tau1 - self.tau0


def estimate_ate_diff_means(sample: ExperimentalSample) -> float:
    """Difference-in-means estimate of the average treatment effect."""
    return float(sample.treated.mean() - sample.control.mean())


def estimate_ate_ipw(sample: ExperimentalSample, e: float) -> float:
    """Inverse-propensity-weighted ATE with a known assignment probability.

    Computes (1/n) * sum(T*Y/e) - (1/n) * sum((1-T)*Y/(1-e)).  Unbiased when
    ``e`` is the true assignment probability; with the empirical share
    e = n1/n it coincides with the difference in means.

    Raises
    ------
    DomainError
        If ``e`` is not strictly inside (0, 1).
    """
    if not 0.0 < e < 1.0:
        raise DomainError(f"assignment probability must lie in (0, 1), got {e}")
    n = sample.n
    return float(sample.treated.sum() / (e * n) - sample.control.sum() / ((1.0 - e) * n))


def _central_moments(y: np.ndarray) -> tuple[float, float, float, float]:
    mean = y.mean()
    d = y - mean
    d2 = d * d
    return float(mean), float(d2.mean()), float((d2 * d).mean()), float((d2 * d2).mean())


def estimate_moments(sample: ExperimentalSample) -> ArmMoments:
    """First four central moments per arm and the empirical treatment share.

    Raises
    ------
    InsufficientData
        If either arm has fewer than two observations (no second moment).
    """
    if sample.n1 < 2:
        raise InsufficientData(f"treated arm has {sample.n1} observation(s), need >= 2")
    if sample.n0 < 2:
        raise InsufficientData(f"control arm has {sample.n0} observation(s), need >= 2")
    tau1, s1, m3_1, m4_1 = _central_moments(sample.treated)
    tau0, s0, m3_0, m4_0 = _central_moments(sample.control)
    return ArmMoments(
        tau1=tau1,
        tau0=tau0,
        sigma1_sq=s1,
        sigma0_sq=s0,
        mu3_1=m3_1,
        mu3_0=m3_0,
        mu4_1=m4_1,
        mu4_0=m4_0,
        e_hat=sample.n1 / sample.n,
    )
