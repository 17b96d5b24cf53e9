"""Bivariate-Gaussian designs and the Monte Carlo coverage harness.

The potential-outcome pairs are jointly Gaussian, treatments are Bernoulli
and independent of the potential outcomes, and only the treated-arm or
control-arm outcome is revealed per unit. Because the joint correlation is
known by construction, the population minimax prediction (the coverage
target) can be computed from the true joint variance of the effect — the
quantity that is only partially identified in real data.
"""

import concurrent.futures
import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .bounds import BoundsMethod
from .exceptions import DegenerateSample, DomainError, ValidationError
from .inference import (
    _estimate_pieces,
    _estimates_from_pieces,
    _check_two_step_args,
    _plain_im_from_estimates,
    _two_step_from_pieces,
)
from .sample import ExperimentalSample
from .solver import RobustConfig, solve_minimax

__all__ = [
    "GaussianDGP",
    "PopulationTruth",
    "SimulationReport",
    "case_preset",
    "draw_sample",
    "population_truth",
    "run_coverage_study",
    "write_reports_csv",
    "write_reports_json",
]


@dataclass(frozen=True)
class GaussianDGP:
    """Bivariate-normal potential outcomes with Bernoulli assignment."""

    mu1: float
    mu0: float
    sigma1: float
    sigma0: float
    rho: float
    e: float
    n: int

    def __post_init__(self):
        if self.sigma1 <= 0.0 or self.sigma0 <= 0.0:
            raise ValidationError("arm standard deviations must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValidationError(f"rho must lie in [-1, 1], got {self.rho}")
        if not 0.0 < self.e < 1.0:
            raise ValidationError(f"assignment probability must be in (0, 1), got {self.e}")
        if self.n < 2:
            raise ValidationError(f"sample size must be >= 2, got {self.n}")


@dataclass(frozen=True)
class PopulationTruth:
    """Population-level quantities implied by a GaussianDGP and a config."""

    tau_star: float
    v_joint: float
    v_o: float
    v_p: float
    tau_dr: float
    tau_p: float
    tau_o: float


def population_truth(dgp: GaussianDGP, config: RobustConfig) -> PopulationTruth:
    """Exact population targets: effect variance, bounds, and predictions.

    For Gaussian marginals the sharp coupling bounds coincide with the
    (sigma1 -+ sigma0)^2 moment bounds, so one pair serves both methods.
    """
    tau_star = dgp.mu1 - dgp.mu0
    v_joint = dgp.sigma1**2 + dgp.sigma0**2 - 2.0 * dgp.rho * dgp.sigma1 * dgp.sigma0
    v_o = (dgp.sigma1 - dgp.sigma0) ** 2
    v_p = (dgp.sigma1 + dgp.sigma0) ** 2
    return PopulationTruth(
        tau_star=tau_star,
        v_joint=v_joint,
        v_o=v_o,
        v_p=v_p,
        tau_dr=solve_minimax(tau_star, v_joint, config),
        tau_p=solve_minimax(tau_star, v_p, config),
        tau_o=solve_minimax(tau_star, v_o, config),
    )


def _draw_potentials(dgp: GaussianDGP, rng: np.random.Generator):
    """Draw (y1, y0, t) with the exact joint law; both potentials returned."""
    z1 = rng.standard_normal(dgp.n)
    z2 = rng.standard_normal(dgp.n)
    y1 = dgp.mu1 + dgp.sigma1 * z1
    y0 = dgp.mu0 + dgp.sigma0 * (dgp.rho * z1 + math.sqrt(1.0 - dgp.rho**2) * z2)
    t = (rng.random(dgp.n) < dgp.e).astype(np.int8)
    return y1, y0, t


def draw_sample(dgp: GaussianDGP, seed) -> ExperimentalSample:
    """One revealed-outcome sample; deterministic given the seed.

    An all-treated or all-control draw is retried once with fresh
    randomness; a second failure raises DegenerateSample.
    """
    rng = np.random.default_rng(seed)
    for attempt in (0, 1):
        y1, y0, t = _draw_potentials(dgp, rng)
        if 0 < int(t.sum()) < dgp.n:
            y = np.where(t == 1, y1, y0)
            return ExperimentalSample(y, t)
    raise DegenerateSample(
        f"both draws produced an empty arm (n={dgp.n}, e={dgp.e})"
    )


# --------------------------------------------------------------- case presets

_CASE_PARAMS = {
    1: dict(sigma1=2.0, sigma0=1.0, c=0.1, p=2.0),
    2: dict(sigma1=2.0, sigma0=1.0, c=1.0, p=2.0),
    3: dict(sigma1=0.02, sigma0=0.01, c=1.0, p=2.0),
    4: dict(sigma1=20.0, sigma0=10.0, c=0.1, p=2.0, mu_scale=(0.1, 0.02)),
    5: dict(sigma1=2.0, sigma0=1.0, c=0.1, p=1.5),
    6: dict(sigma1=2.0, sigma0=1.0, c=0.1, p=3.0),
}


def case_preset(case: int, n: int = 1000):
    """The six built-in designs: (GaussianDGP, RobustConfig).

    All share rho=0.7 and e=0.3; means default to mu1=sigma1, mu0=0.2*sigma0
    (case 4 scales them down by a factor of 10); the radius is c*sigma0; the
    cost-norm order p maps to the dual order q = p/(p-1).
    """
    if case not in _CASE_PARAMS:
        raise DomainError(f"case must be one of 1..6, got {case}")
    params = _CASE_PARAMS[case]
    m1_scale, m0_scale = params.get("mu_scale", (1.0, 0.2))
    dgp = GaussianDGP(
        mu1=m1_scale * params["sigma1"],
        mu0=m0_scale * params["sigma0"],
        sigma1=params["sigma1"],
        sigma0=params["sigma0"],
        rho=0.7,
        e=0.3,
        n=n,
    )
    config = RobustConfig.from_p(params["c"] * params["sigma0"], params["p"])
    return dgp, config


# ------------------------------------------------------------ coverage study


@dataclass(frozen=True)
class SimulationReport:
    """Aggregated results of one coverage study."""

    case: str
    n: int
    replications: int
    seed: int
    bound_method: BoundsMethod
    alpha: float
    beta: float
    truth: PopulationTruth
    coverage_im: float
    coverage_bonf: float
    im_lower_mean: float
    im_upper_mean: float
    bonf_lower_mean: float
    bonf_upper_mean: float
    length_ratio_mean: float
    rejected_count: int

    def __post_init__(self):
        object.__setattr__(self, "bound_method", BoundsMethod(self.bound_method))
        for name in ("coverage_im", "coverage_bonf"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {value}")

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out["bound_method"] = self.bound_method.value
        return out


def _replicate(dgp, config, child_seed, alpha, beta, bound_method, grid_points):
    """One replication: (im_lo, im_hi, bonf_lo, bonf_hi, length_ratio, rejected)."""
    sample = draw_sample(dgp, child_seed)
    tau_hat, bounds, sigma = _estimate_pieces(sample, config, bound_method)
    est = _estimates_from_pieces(tau_hat, bounds, sigma, sample.n, config)
    im = _plain_im_from_estimates(est, alpha)
    union = _two_step_from_pieces(
        tau_hat, bounds, sigma, sample.n, config, alpha, beta, grid_points
    )
    if not union.rejected_first_step:
        return (im.lower, im.upper, math.nan, math.nan, math.nan, False)
    return (im.lower, im.upper, union.lower, union.upper, union.length / im.length, True)


def _replicate_block(
    dgp, config, seed, replications, start, stop, alpha, beta, bound_method, grid_points
):
    """Replications [start, stop) of a study, reconstructing seeds by index.

    Module-level (picklable) so worker processes can run blocks; rebuilding
    the full spawn in each worker keeps per-replication streams identical to
    a serial run.
    """
    children = np.random.SeedSequence(seed).spawn(replications)[start:stop]
    return [
        _replicate(dgp, config, child, alpha, beta, bound_method, grid_points)
        for child in children
    ]


def run_coverage_study(
    dgp: GaussianDGP,
    config: RobustConfig,
    replications: int,
    alpha: float = 0.05,
    beta: float = 0.045,
    bound_method=BoundsMethod.SHARP,
    seed: int = 0,
    case: str = "custom",
    grid_points: int = 101,
    workers: int = 1,
) -> SimulationReport:
    """Coverage of the population prediction by both interval constructions.

    Per replication: draw a sample, form the plain IM interval and the
    two-step union from the same bound/covariance estimates, and record
    whether each covers the population minimax prediction. The IM interval
    is averaged over every replication; two-step results are averaged over
    the replications whose first step rejected a zero effect.

    ``workers`` > 1 runs replications in a process pool. Seeds are assigned
    by replication index and aggregation happens in index order, so the
    report is identical for any worker count.
    """
    if replications < 100:
        raise DomainError(f"replications must be >= 100, got {replications}")
    if workers < 1:
        raise DomainError(f"workers must be >= 1, got {workers}")
    _check_two_step_args(config, alpha, beta, grid_points)
    bound_method = BoundsMethod(bound_method)
    truth = population_truth(dgp, config)
    target = truth.tau_dr

    workers = min(workers, replications)
    if workers == 1:
        records = _replicate_block(
            dgp, config, seed, replications, 0, replications,
            alpha, beta, bound_method, grid_points,
        )
    else:
        edges = np.linspace(0, replications, workers + 1).astype(int)
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    _replicate_block,
                    dgp, config, seed, replications, int(lo), int(hi),
                    alpha, beta, bound_method, grid_points,
                )
                for lo, hi in zip(edges[:-1], edges[1:])
                if hi > lo
            ]
            records = [rec for fut in futures for rec in fut.result()]

    covered_im = covered_bonf = rejected = 0
    im_lo_sum = im_hi_sum = 0.0
    bf_lo_sum = bf_hi_sum = ratio_sum = 0.0
    for im_lo, im_hi, bf_lo, bf_hi, ratio, rej in records:
        covered_im += im_lo <= target <= im_hi
        im_lo_sum += im_lo
        im_hi_sum += im_hi
        if rej:
            rejected += 1
            covered_bonf += bf_lo <= target <= bf_hi
            bf_lo_sum += bf_lo
            bf_hi_sum += bf_hi
            ratio_sum += ratio
    nan = math.nan
    return SimulationReport(
        case=case,
        n=dgp.n,
        replications=replications,
        seed=seed,
        bound_method=bound_method,
        alpha=alpha,
        beta=beta,
        truth=truth,
        coverage_im=covered_im / replications,
        coverage_bonf=covered_bonf / rejected if rejected else 0.0,
        im_lower_mean=im_lo_sum / replications,
        im_upper_mean=im_hi_sum / replications,
        bonf_lower_mean=bf_lo_sum / rejected if rejected else nan,
        bonf_upper_mean=bf_hi_sum / rejected if rejected else nan,
        length_ratio_mean=ratio_sum / rejected if rejected else nan,
        rejected_count=rejected,
    )


# ------------------------------------------------------------- serialization

_CSV_HEADER = (
    "case",
    "tau_dr",
    "coverage_im",
    "coverage_imbonf",
    "ci_lo",
    "ci_hi",
    "bonf_lo",
    "bonf_hi",
    "length_ratio",
)


def write_reports_csv(reports, path) -> None:
    """Table-shaped CSV: one row per case report."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for r in reports:
            writer.writerow(
                [
                    r.case,
                    f"{r.truth.tau_dr:.6g}",
                    f"{r.coverage_im:.4f}",
                    f"{r.coverage_bonf:.4f}",
                    f"{r.im_lower_mean:.6g}",
                    f"{r.im_upper_mean:.6g}",
                    f"{r.bonf_lower_mean:.6g}",
                    f"{r.bonf_upper_mean:.6g}",
                    f"{r.length_ratio_mean:.6g}",
                ]
            )


def write_reports_json(reports, path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_json_dict() for r in reports], fh, indent=2)
