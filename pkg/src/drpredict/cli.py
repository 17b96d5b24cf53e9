"""Command-line front end.

Five subcommands: ``estimate`` (point estimates and SDs from a CSV),
``sweep`` (predictions along a radius grid), ``infer`` (IM and two-step
confidence intervals), ``simulate`` (the coverage study), and ``benchmark``
(data-driven radius calibration). Human-readable reports go to stdout;
``--json`` switches stdout to a JSON document. Every JSON document embeds
the run manifest; CSV outputs get a ``<name>.manifest.json`` sidecar.
Reruns with an equal manifest and input digest produce identical outputs.

Exit codes: 0 success, 2 input error, 3 numerical error, 4 the two-step
procedure stopped at its first step (``status: no-second-step``).
"""

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bounds import BoundsMethod, neyman_bounds, sharp_bounds_empirical
from .calibration import SplitRule, split_benchmark
from .exceptions import (
    ConvergenceError,
    DegenerateSample,
    DensityError,
    DomainError,
    InsufficientData,
    OrderError,
    ParseError,
    UnsupportedConfig,
    UnsupportedRegime,
    ValidationError,
    ZeroTauError,
)
from .inference import (
    _check_two_step_args,
    _estimate_pieces,
    _estimates_from_pieces,
    _plain_im_from_estimates,
    _two_step_from_pieces,
)
from .moments import estimate_moments
from .sample import load_sample
from .simulation import (
    GaussianDGP,
    case_preset,
    run_coverage_study,
    write_reports_csv,
)
from .solver import RobustConfig, solve_minimax

_INPUT_ERRORS = (
    ParseError,
    ValidationError,
    DomainError,
    UnsupportedConfig,
    UnsupportedRegime,
    InsufficientData,
    DegenerateSample,
    FileNotFoundError,
)
_NUMERICAL_ERRORS = (ConvergenceError, DensityError, ZeroTauError, OrderError)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_NO_SECOND_STEP = 4


# ----------------------------------------------------------------- manifest


@dataclass(frozen=True)
class RunManifest:
    """What produced an output file: command, resolved flags, version, input.

    Two runs with equal manifests (and hence equal input digests) produce
    identical output bytes.
    """

    command: str
    config: dict = field(default_factory=dict)
    version: str = __version__
    input_sha256: str = None

    def to_json_dict(self) -> dict:
        return {
            "command": self.command,
            "config": dict(self.config),
            "version": self.version,
            "input_sha256": self.input_sha256,
        }


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _jsonify(obj):
    """Replace non-finite floats with null so output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def _dump_json(report: dict) -> str:
    return json.dumps(_jsonify(report), indent=2, allow_nan=False)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "n/a"
    return f"{x:.6g}"


# -------------------------------------------------------------------- flags


def _add_data_flags(sub, required=True):
    sub.add_argument("--data", required=required, metavar="CSV",
                     help="experiment file, one row per unit")
    sub.add_argument("--outcome", default="y", metavar="COL",
                     help="outcome column (default: y)")
    sub.add_argument("--treatment", default="t", metavar="COL",
                     help="treatment column, coded 0/1 (default: t)")


def _add_order_flags(sub):
    group = sub.add_mutually_exclusive_group()
    group.add_argument("--p", type=float, dest="p_order", metavar="P",
                       help="transport cost norm order, p > 1; stored as q = p/(p-1)")
    group.add_argument("--q", type=float, dest="q_order", metavar="Q",
                       help="dual order q >= 1 directly (default: 2)")


def _add_bounds_flag(sub):
    sub.add_argument("--bounds", choices=[m.value for m in BoundsMethod],
                     default=BoundsMethod.SHARP.value,
                     help="variance-bound method (default: sharp)")


def _config_from_args(args) -> RobustConfig:
    delta = args.delta
    if args.p_order is not None:
        return RobustConfig.from_p(delta, args.p_order)
    q = 2.0 if args.q_order is None else args.q_order
    return RobustConfig(delta=delta, q=q)


def _parse_delta_grid(text: str) -> list:
    """Radius grids: ``start:stop:step`` (inclusive), a comma list, or one value."""
    text = text.strip()
    if not text:
        raise ValidationError("--deltas must be nonempty")
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValidationError(
                    f"--deltas range must be start:stop:step, got {text!r}"
                )
            start, stop, step = (float(p) for p in parts)
            if step <= 0.0:
                raise ValidationError(f"--deltas step must be positive, got {step}")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            if count < 1:
                raise ValidationError(f"--deltas range {text!r} is empty")
            return [start + i * step for i in range(count)]
        values = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValidationError(f"--deltas contains a non-numeric entry: {text!r}") from None
    if not values:
        raise ValidationError("--deltas must be nonempty")
    return values


# ----------------------------------------------------------------- estimate


def cmd_estimate(args) -> int:
    config = _config_from_args(args)
    if config.q == 1.0 and not args.allow_q1:
        raise ValidationError(
            "q = 1 has no normal limit law; pass --allow-q1 for point estimates "
            "without standard errors"
        )
    sample = load_sample(args.data, args.outcome, args.treatment)
    moments = estimate_moments(sample)
    sharp = sharp_bounds_empirical(sample)
    neyman = neyman_bounds(moments.sigma1_sq, moments.sigma0_sq)
    method = BoundsMethod(args.bounds)
    selected = sharp if method is BoundsMethod.SHARP else neyman

    if config.q == 1.0:
        tau_p = solve_minimax(moments.ate, selected.v_p, config)
        tau_o = solve_minimax(moments.ate, selected.v_o, config)
        sd_tau = sd_p = sd_o = None
    else:
        _, _, sigma = _estimate_pieces(sample, config, method)
        est = _estimates_from_pieces(moments.ate, selected, sigma, sample.n, config)
        tau_p, tau_o = est.tau_p, est.tau_o
        sd_tau, sd_p, sd_o = sigma.sigma_tau, est.sd_p, est.sd_o

    manifest = RunManifest(
        command="estimate",
        config={
            "delta": config.delta,
            "q": config.q,
            "bounds": method.value,
            "outcome_column": args.outcome,
            "treatment_column": args.treatment,
        },
        input_sha256=_sha256_file(args.data),
    )
    report = {
        "manifest": manifest.to_json_dict(),
        "n": sample.n,
        "n1": sample.n1,
        "n0": sample.n0,
        "tau_star": moments.ate,
        "bounds": {
            "sharp": {"v_o": sharp.v_o, "v_p": sharp.v_p},
            "neyman": {"v_o": neyman.v_o, "v_p": neyman.v_p},
        },
        "tau_p": tau_p,
        "tau_o": tau_o,
        "sd_tau": sd_tau,
        "sd_p": sd_p,
        "sd_o": sd_o,
    }
    if args.out:
        _write_text(args.out, _dump_json(report))
    if args.json:
        print(_dump_json(report))
    else:
        print(f"n = {sample.n} (treated {sample.n1}, control {sample.n0})")
        print(f"tau_star = {_fmt(moments.ate)}   sd = {_fmt(sd_tau)}")
        print("variance bounds:")
        print(f"  sharp  : v_o = {_fmt(sharp.v_o)}, v_p = {_fmt(sharp.v_p)}")
        print(f"  neyman : v_o = {_fmt(neyman.v_o)}, v_p = {_fmt(neyman.v_p)}")
        print(f"predictions ({method.value} bounds, delta = {_fmt(config.delta)}, "
              f"q = {_fmt(config.q)}):")
        print(f"  tau_p = {_fmt(tau_p)}   sd = {_fmt(sd_p)}")
        print(f"  tau_o = {_fmt(tau_o)}   sd = {_fmt(sd_o)}")
    return EXIT_OK


# -------------------------------------------------------------------- sweep


def cmd_sweep(args) -> int:
    deltas = _parse_delta_grid(args.deltas)
    q = 2.0 if args.q_order is None else args.q_order
    if args.p_order is not None:
        q = RobustConfig.from_p(0.0, args.p_order).q

    population = args.data is None
    if population:
        if args.true_v is None or args.tau_star is None:
            raise ValidationError(
                "population mode (no --data) requires both --true-v and --tau-star"
            )
        tau_star = args.tau_star
        header = ["delta", "tau_p", "tau_o", "tau_dr"]
        rows = []
        for d in deltas:
            t = solve_minimax(tau_star, args.true_v, RobustConfig(delta=d, q=q))
            rows.append([d, t, t, t])
        digest = None
    else:
        if args.tau_star is not None:
            raise ValidationError(
                "--tau-star is population mode only; with --data the effect is estimated"
            )
        sample = load_sample(args.data, args.outcome, args.treatment)
        moments = estimate_moments(sample)
        tau_star = moments.ate
        if BoundsMethod(args.bounds) is BoundsMethod.SHARP:
            bounds = sharp_bounds_empirical(sample)
        else:
            bounds = neyman_bounds(moments.sigma1_sq, moments.sigma0_sq)
        header = ["delta", "tau_p", "tau_o"]
        if args.true_v is not None:
            header.append("tau_dr")
        rows = []
        for d in deltas:
            cfg = RobustConfig(delta=d, q=q)
            row = [
                d,
                solve_minimax(tau_star, bounds.v_p, cfg),
                solve_minimax(tau_star, bounds.v_o, cfg),
            ]
            if args.true_v is not None:
                row.append(solve_minimax(tau_star, args.true_v, cfg))
            rows.append(row)
        digest = _sha256_file(args.data)

    manifest = RunManifest(
        command="sweep",
        config={
            "deltas": deltas,
            "q": q,
            "bounds": None if population else args.bounds,
            "tau_star": args.tau_star,
            "true_v": args.true_v,
            "outcome_column": None if population else args.outcome,
            "treatment_column": None if population else args.treatment,
        },
        input_sha256=digest,
    )

    def _emit(stream):
        writer = csv.writer(stream)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{x:.10g}" for x in row])

    if args.out:
        with open(args.out, "w", newline="") as fh:
            _emit(fh)
        _write_text(args.out + ".manifest.json", _dump_json(manifest.to_json_dict()))
    else:
        _emit(sys.stdout)
    return EXIT_OK


# -------------------------------------------------------------------- infer


def cmd_infer(args) -> int:
    config = _config_from_args(args)
    _check_two_step_args(config, args.alpha, args.beta, args.grid_points)
    sample = load_sample(args.data, args.outcome, args.treatment)
    method = BoundsMethod(args.bounds)
    tau_hat, bounds, sigma = _estimate_pieces(sample, config, method)
    est = _estimates_from_pieces(tau_hat, bounds, sigma, sample.n, config)
    im = _plain_im_from_estimates(est, args.alpha)
    union = _two_step_from_pieces(
        tau_hat, bounds, sigma, sample.n, config,
        args.alpha, args.beta, args.grid_points,
    )
    ok = bool(union.rejected_first_step)

    manifest = RunManifest(
        command="infer",
        config={
            "delta": config.delta,
            "q": config.q,
            "alpha": args.alpha,
            "beta": args.beta,
            "bounds": method.value,
            "grid_points": args.grid_points,
            "outcome_column": args.outcome,
            "treatment_column": args.treatment,
        },
        input_sha256=_sha256_file(args.data),
    )
    report = {
        "manifest": manifest.to_json_dict(),
        "status": "ok" if ok else "no-second-step",
        "n": sample.n,
        "tau_star": est.tau_star,
        "tau_p": est.tau_p,
        "tau_o": est.tau_o,
        "sd_tau": sigma.sigma_tau,
        "sd_p": est.sd_p,
        "sd_o": est.sd_o,
        "first_step": {
            "lower": union.first_step[0],
            "upper": union.first_step[1],
            "level": 1.0 - args.beta,
        },
        "im": {
            "lower": im.lower,
            "upper": im.upper,
            "alpha": im.alpha,
            "c": im.c_values[0],
        },
        "im_bonferroni": {
            "lower": union.lower,
            "upper": union.upper,
            "alpha": union.alpha,
            "beta": args.beta,
            "c_min": union.c_values[0],
            "c_max": union.c_values[1],
            "grid_points": union.grid_points,
        } if ok else None,
    }
    if args.out:
        _write_text(args.out, _dump_json(report))
    if args.json:
        print(_dump_json(report))
    else:
        print(f"tau_star = {_fmt(est.tau_star)}, tau_p = {_fmt(est.tau_p)}, "
              f"tau_o = {_fmt(est.tau_o)}")
        print(f"first step ({_fmt(100 * (1 - args.beta))}%): "
              f"[{_fmt(union.first_step[0])}, {_fmt(union.first_step[1])}]")
        print(f"IM {100 * (1 - args.alpha):g}%: [{_fmt(im.lower)}, {_fmt(im.upper)}]"
              f"   c = {_fmt(im.c_values[0])}")
        if ok:
            print(f"IM-Bonferroni {100 * (1 - args.alpha):g}%: "
                  f"[{_fmt(union.lower)}, {_fmt(union.upper)}]"
                  f"   c in [{_fmt(union.c_values[0])}, {_fmt(union.c_values[1])}]")
        else:
            print("status: no-second-step (first-step interval contains zero)")
    return EXIT_OK if ok else EXIT_NO_SECOND_STEP


# ----------------------------------------------------------------- simulate


_DGP_FLAGS = ("mu1", "mu0", "sigma1", "sigma0", "delta")


def cmd_simulate(args) -> int:
    custom_given = any(getattr(args, name) is not None for name in _DGP_FLAGS) \
        or args.p_order is not None or args.q_order is not None
    if args.case and custom_given:
        raise ValidationError(
            "--case presets fix the design; drop the DGP flags "
            "(--mu1/--mu0/--sigma1/--sigma0/--delta/--p/--q)"
        )
    if args.case:
        runs = [(f"case{c}", *case_preset(c, args.n)) for c in args.case]
        dgp_config = {"cases": list(args.case)}
    else:
        missing = [name for name in _DGP_FLAGS if getattr(args, name) is None]
        if missing:
            raise ValidationError(
                "custom designs need --" + ", --".join(missing)
                + " (or use --case 1..6)"
            )
        dgp = GaussianDGP(
            mu1=args.mu1, mu0=args.mu0,
            sigma1=args.sigma1, sigma0=args.sigma0,
            rho=args.rho, e=args.e, n=args.n,
        )
        config = _config_from_args(args)
        runs = [("custom", dgp, config)]
        dgp_config = {
            "mu1": args.mu1, "mu0": args.mu0,
            "sigma1": args.sigma1, "sigma0": args.sigma0,
            "rho": args.rho, "e": args.e,
            "delta": config.delta, "q": config.q,
        }

    reports = [
        run_coverage_study(
            dgp, cfg, args.replications,
            alpha=args.alpha, beta=args.beta, bound_method=args.bounds,
            seed=args.seed, case=name, grid_points=args.grid_points,
            workers=args.threads,
        )
        for name, dgp, cfg in runs
    ]

    manifest = RunManifest(
        command="simulate",
        config={
            **dgp_config,
            "n": args.n,
            "replications": args.replications,
            "alpha": args.alpha,
            "beta": args.beta,
            "bounds": args.bounds,
            "grid_points": args.grid_points,
            "seed": args.seed,
        },
    )
    document = {
        "manifest": manifest.to_json_dict(),
        "reports": [r.to_json_dict() for r in reports],
    }
    _write_text(args.out + ".json", _dump_json(document))
    write_reports_csv(reports, args.out + ".csv")
    _write_text(args.out + ".manifest.json", _dump_json(manifest.to_json_dict()))

    print("case      tau_dr   cov_im   cov_bonf   ratio   rejected")
    for r in reports:
        print(f"{r.case:<8} {r.truth.tau_dr:>8.4f} {r.coverage_im:>8.4f} "
              f"{r.coverage_bonf:>10.4f} {r.length_ratio_mean:>7.3f} "
              f"{r.rejected_count:>6d}/{r.replications}")
    print(f"wrote {args.out}.json, {args.out}.csv, {args.out}.manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------- benchmark


def _load_mask_column(path, column: str, n_expected: int):
    """Read a 0/1 column aligned with the data rows into a boolean mask."""
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ParseError(
                f"missing column; header has {reader.fieldnames}",
                row=1, column=column,
            )
        for rownum, rec in enumerate(reader, start=2):
            raw = (rec.get(column) or "").strip()
            if raw not in ("0", "1"):
                raise ParseError(
                    f"mask entries must be 0 or 1, got {raw!r}",
                    row=rownum, column=column,
                )
            values.append(raw == "1")
    if len(values) != n_expected:
        raise ValidationError(
            f"mask column has {len(values)} rows but the sample has {n_expected}"
        )
    return np.asarray(values, dtype=bool)


def cmd_benchmark(args) -> int:
    sample = load_sample(args.data, args.outcome, args.treatment)
    split = SplitRule(args.split)
    mask = None
    if split is SplitRule.PROVIDED_MASK:
        if args.mask_col is None:
            raise ValidationError("--split provided_mask requires --mask-col")
        mask = _load_mask_column(args.data, args.mask_col, sample.n)
    bench = split_benchmark(
        sample, split, mask=mask, permutations=args.permutations, seed=args.seed
    )

    manifest = RunManifest(
        command="benchmark",
        config={
            "split": split.value,
            "mask_column": args.mask_col,
            "permutations": args.permutations,
            "seed": args.seed,
            "outcome_column": args.outcome,
            "treatment_column": args.treatment,
        },
        input_sha256=_sha256_file(args.data),
    )
    report = {"manifest": manifest.to_json_dict(), **bench.to_json_dict()}
    if args.out:
        _write_text(args.out, _dump_json(report))
    if args.json:
        print(_dump_json(report))
    else:
        print(f"split: {bench.split_description}")
        print(f"W2(treated cells) = {_fmt(bench.w2_y1)}")
        print(f"W2(control cells) = {_fmt(bench.w2_y0)}")
        print(f"joint lower bound = {_fmt(bench.joint_lower_bound)}")
        if bench.null_p95 is not None:
            print(f"permutation null 95th percentile = {_fmt(bench.null_p95)}")
    return EXIT_OK


# --------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drpredict",
        description="Robust treatment-effect prediction for new populations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="point estimates and SDs from a CSV")
    _add_data_flags(est)
    est.add_argument("--delta", type=float, required=True, help="transport radius, >= 0")
    _add_order_flags(est)
    _add_bounds_flag(est)
    est.add_argument("--allow-q1", action="store_true",
                     help="allow q = 1 (point estimates only, no SDs)")
    est.add_argument("--json", action="store_true", help="JSON report on stdout")
    est.add_argument("--out", metavar="FILE", help="also write the JSON report here")
    est.set_defaults(func=cmd_estimate)

    swp = sub.add_parser("sweep", help="tau_p/tau_o along a radius grid (CSV)")
    _add_data_flags(swp, required=False)
    swp.add_argument("--deltas", "--delta", dest="deltas", required=True,
                     metavar="GRID", help="radius grid: start:stop:step, a comma "
                     "list, or one value")
    _add_order_flags(swp)
    _add_bounds_flag(swp)
    swp.add_argument("--true-v", type=float, dest="true_v", metavar="V",
                     help="known effect variance; adds a tau_dr column")
    swp.add_argument("--tau-star", type=float, dest="tau_star", metavar="TAU",
                     help="known unrestricted effect (population mode, no --data)")
    swp.add_argument("--out", metavar="FILE", help="write the CSV here "
                     "(plus FILE.manifest.json)")
    swp.set_defaults(func=cmd_sweep)

    inf = sub.add_parser("infer", help="IM and two-step confidence intervals")
    _add_data_flags(inf)
    inf.add_argument("--delta", type=float, required=True, help="transport radius, >= 0")
    _add_order_flags(inf)
    _add_bounds_flag(inf)
    inf.add_argument("--alpha", type=float, default=0.05, help="overall level (default: 0.05)")
    inf.add_argument("--beta", type=float, default=0.045,
                     help="first-step share of the level (default: 0.045)")
    inf.add_argument("--grid-points", type=int, default=101, dest="grid_points",
                     help="second-step grid size, >= 25 (default: 101)")
    inf.add_argument("--json", action="store_true", help="JSON report on stdout")
    inf.add_argument("--out", metavar="FILE", help="also write the JSON report here")
    inf.set_defaults(func=cmd_infer)

    sim = sub.add_parser("simulate", help="Monte Carlo coverage study")
    sim.add_argument("--case", type=int, action="append", choices=range(1, 7),
                     metavar="1..6", help="built-in design; repeat for several")
    sim.add_argument("--mu1", type=float, help="custom design: treated mean")
    sim.add_argument("--mu0", type=float, help="custom design: control mean")
    sim.add_argument("--sigma1", type=float, help="custom design: treated SD")
    sim.add_argument("--sigma0", type=float, help="custom design: control SD")
    sim.add_argument("--rho", type=float, default=0.7,
                     help="custom design: potential-outcome correlation (default: 0.7)")
    sim.add_argument("--e", type=float, default=0.3,
                     help="custom design: treatment probability (default: 0.3)")
    sim.add_argument("--delta", type=float, default=None, help="custom design: radius")
    _add_order_flags(sim)
    _add_bounds_flag(sim)
    sim.add_argument("--n", type=int, default=1000, help="sample size per replication")
    sim.add_argument("--replications", type=int, default=1000,
                     help=">= 100 (default: 1000)")
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--beta", type=float, default=0.045)
    sim.add_argument("--grid-points", type=int, default=101, dest="grid_points")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=1,
                     help="worker processes for replications (default: 1)")
    sim.add_argument("--out", default="drpredict_sim", metavar="PREFIX",
                     help="output prefix (default: drpredict_sim)")
    sim.set_defaults(func=cmd_simulate)

    ben = sub.add_parser("benchmark", help="within-sample transport distances "
                         "to calibrate the radius")
    _add_data_flags(ben)
    ben.add_argument("--split", choices=[s.value for s in SplitRule],
                     default=SplitRule.MEDIAN_OUTCOME.value,
                     help="how to cut the sample in two (default: median_outcome)")
    ben.add_argument("--mask-col", dest="mask_col", metavar="COL",
                     help="0/1 column defining the split (with --split provided_mask)")
    ben.add_argument("--permutations", type=int, default=200,
                     help="label permutations for the null scale; 0 disables "
                     "(default: 200)")
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--json", action="store_true", help="JSON report on stdout")
    ben.add_argument("--out", metavar="FILE", help="also write the JSON report here")
    ben.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
