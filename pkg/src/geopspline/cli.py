"""Command-line interface: ``geopspline <subcommand> ...``.

Exit status is 0 on success, 1 on any data or validation error and 2 on
usage errors (unknown subcommand or flag).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import io as gio

logger = logging.getLogger("geopspline")


def _raster_shape(text):
    try:
        rows, cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}") from None
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError("raster dimensions must be positive")
    return rows, cols


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def cmd_grid_info(args):
    from .grid import GeodesicGrid

    summary = GeodesicGrid(args.nu).summary()
    if args.json:
        out = dict(summary)
        out["degree_histogram"] = {str(k): v for k, v in summary["degree_histogram"].items()}
        print(json.dumps(out, sort_keys=True))
        return
    sp = summary["spacing_km"]
    hist = ", ".join(f"{k}:{v}" for k, v in sorted(summary["degree_histogram"].items()))
    print(f"nu={summary['nu']}")
    print(f"V={summary['V']} E={summary['E']} F={summary['F']} euler={summary['euler']}")
    print(f"degree histogram: {hist}")
    print(f"knot spacing km: min={sp['min']:.3f} max={sp['max']:.3f} mean={sp['mean']:.3f}")


def cmd_build_basis(args):
    from .basis import BasisConfig, assemble_basis, write_sparse_text
    from .grid import GeodesicGrid

    lat, lon = gio.read_locations(args.input)
    cfg = BasisConfig(args.degree, not args.raw, args.nu)
    B = assemble_basis(lat, lon, GeodesicGrid(args.nu), cfg)
    write_sparse_text(B, gio.output_path(args.output))
    logger.info("basis %d x %d with %d entries", B.shape[0], B.shape[1], B.nnz)


def cmd_penalty_variances(args):
    from .penalty import (
        coefficient_of_variation, icar_structure, marginal_variance_diag, planar_structure,
        scale_structure,
    )

    if args.kind == "geodesic":
        from .grid import GeodesicGrid

        structure = icar_structure(GeodesicGrid(args.nu))
    else:
        if args.lat_knots is None or args.lon_knots is None:
            raise ValueError(f"--kind {args.kind} needs --lat-knots and --lon-knots")
        structure = planar_structure(args.lat_knots, args.lon_knots, args.kind == "circular")
    if not args.unscaled:
        structure = scale_structure(structure)
    var = marginal_variance_diag(structure)
    out = gio.output_path(args.output)
    gio.write_table(out, {"lat": structure.lat, "lon": structure.lon, "variance": var})
    print(f"K={structure.K} kappa={structure.kappa!r} cv={coefficient_of_variation(var)!r}")
    if args.figure:
        from .plotting import plot_knot_values

        plot_knot_values(structure.lat, structure.lon, var, gio.output_path(args.figure),
                         title=f"{structure.kind} marginal variances", label="variance")


def cmd_synth(args):
    spec = gio.SynthSpec(
        rows=args.rows, cols=args.cols, truth=args.truth, baseline=args.baseline,
        amplitude=args.amplitude, center_lat=args.center_lat, center_amp=args.center_amp,
        wavenumber=args.wavenumber, width=args.width, noise_sd=args.noise_sd,
        mask_fraction=args.mask_fraction, mask_pattern=args.mask_pattern, units=args.units,
    )
    obs, truth = gio.synth_generate(spec, seed=args.seed)
    gio.write_raster(obs, gio.output_path(args.output))
    if args.truth_output:
        gio.write_raster(truth, gio.output_path(args.truth_output))
    print(f"rows={obs.rows} cols={obs.cols} missing_fraction={obs.missing_fraction!r}")
    if args.figure:
        from .plotting import plot_raster

        plot_raster(obs, gio.output_path(args.figure), title="synthetic observations")


def cmd_fit(args):
    from .pipeline import fit_observations

    lat, lon, values = gio.read_observations(args.input)
    missing = np.isnan(values)
    if missing.any():
        logger.info("dropping %d missing of %d observations", int(missing.sum()), len(values))

    progress = None
    if args.verbose:
        step = max(1, args.draws // 10)

        def progress(g):
            if (g + 1) % step == 0:
                logger.info("draw %d / %d", g + 1, args.draws)

    samples = fit_observations(
        lat, lon, values, nu=args.nu, degree=args.degree, G=args.draws, burnin=args.burnin,
        seed=args.seed, thin=args.thin, tau_alpha=args.tau_alpha, hyper_a=args.hyper_a,
        hyper_b=args.hyper_b, progress=progress,
    )
    gio.save_samples(gio.output_path(args.output), samples)
    summ = samples.summary()
    print(f"draws={samples.G} K={samples.K} n_obs={samples.meta['n_obs']} "
          f"sigma_eps_mean={float(summ['sigma_eps']['mean'])!r}")


def cmd_predict(args):
    from .predict import (
        mean_sd_raster, posterior_predictive, predictive_moments, request_from_samples,
    )

    samples = gio.load_samples(args.samples)
    if args.raster:
        if not (args.output_mean and args.output_sd):
            raise ValueError("--raster needs --output-mean and --output-sd")
        rows, cols = args.raster
        mean, sd = mean_sd_raster(samples, rows, cols, nu=args.nu, degree=args.degree)
        gio.write_raster(mean, gio.output_path(args.output_mean))
        gio.write_raster(sd, gio.output_path(args.output_sd))
        if args.figure:
            from .plotting import plot_raster

            plot_raster(mean, gio.output_path(args.figure), title="posterior mean")
        return
    if not args.output:
        raise ValueError("--locations needs --output")
    lat, lon = gio.read_locations(args.locations)
    req = request_from_samples(lat, lon, samples, nu=args.nu, degree=args.degree)
    if args.observation_noise:
        draws = posterior_predictive(req, observation_noise=True, seed=args.seed)
        mean, sd = draws.mean(axis=0), draws.std(axis=0)
    else:
        mean, sd = predictive_moments(req)
    gio.write_table(gio.output_path(args.output), {"lat": req.lat, "lon": req.lon, "mean": mean, "sd": sd})


def cmd_itcz(args):
    from .detect import DetectConfig, band_probability_for_samples

    samples = gio.load_samples(args.samples)
    cfg = DetectConfig(width_km=args.width_km, meridian_length_km=args.meridian_km, L=args.L, M=args.M)
    bp = band_probability_for_samples(samples, cfg, nu=args.nu, degree=args.degree)
    gio.write_table(gio.output_path(args.output), bp.as_columns())
    if args.figure:
        from .plotting import plot_band_probability

        plot_band_probability(bp, gio.output_path(args.figure), title="band probability")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geopspline", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("grid-info", help="geodesic grid statistics")
    p.add_argument("--nu", type=_nonneg_int, required=True, help="subdivision level")
    p.add_argument("--json", action="store_true", help="print JSON instead of text")
    p.set_defaults(func=cmd_grid_info)

    p = sub.add_parser("build-basis", help="sparse basis matrix for a set of locations")
    p.add_argument("--nu", type=_nonneg_int, required=True)
    p.add_argument("--degree", type=int, choices=(1, 2, 3), default=3)
    p.add_argument("--input", required=True, help="lat,lon CSV or raster file")
    p.add_argument("--output", required=True, help="text triplet file")
    p.add_argument("--raw", action="store_true", help="skip row normalisation")
    p.set_defaults(func=cmd_build_basis)

    p = sub.add_parser("penalty-variances", help="prior marginal variances per knot")
    p.add_argument("--kind", choices=("geodesic", "naive", "circular"), required=True)
    p.add_argument("--nu", type=_nonneg_int, default=3, help="grid level for --kind geodesic")
    p.add_argument("--lat-knots", type=int, help="lattice rows for planar kinds")
    p.add_argument("--lon-knots", type=int, help="lattice columns for planar kinds")
    p.add_argument("--unscaled", action="store_true", help="report variances before scaling")
    p.add_argument("--output", required=True, help="CSV with lat, lon, variance")
    p.add_argument("--figure", help="optional image of the variances")
    p.set_defaults(func=cmd_penalty_variances)

    p = sub.add_parser("synth", help="synthetic noisy masked raster")
    p.add_argument("--rows", type=int, default=36)
    p.add_argument("--cols", type=int, default=72)
    p.add_argument("--truth", choices=("band", "bump", "sinusoid", "constant"), default="band")
    p.add_argument("--baseline", type=float, default=20.0)
    p.add_argument("--amplitude", type=float, default=30.0)
    p.add_argument("--center-lat", type=float, default=5.0)
    p.add_argument("--center-amp", type=float, default=10.0)
    p.add_argument("--wavenumber", type=int, default=1)
    p.add_argument("--width", type=float, default=15.0)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--mask-fraction", type=float, default=0.0)
    p.add_argument("--mask-pattern", choices=("random", "blocks"), default="random")
    p.add_argument("--units", default="kg/m2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="observation raster")
    p.add_argument("--truth-output", help="noise-free truth raster")
    p.add_argument("--figure", help="optional image of the observations")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    p.add_argument("--input", required=True, help="raster file or lat,lon,value CSV")
    p.add_argument("--nu", type=_nonneg_int, default=5)
    p.add_argument("--degree", type=int, choices=(1, 2, 3), default=3)
    p.add_argument("--draws", type=int, default=5000, help="stored draws after burn-in")
    p.add_argument("--burnin", type=_nonneg_int, default=500)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hyper-a", type=float, default=1.0)
    p.add_argument("--hyper-b", type=float, default=5e-5)
    p.add_argument("--tau-alpha", type=float, default=1e-6)
    p.add_argument("--output", required=True, help="samples file (.npz)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior mean and sd of the latent field")
    p.add_argument("--samples", required=True)
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--raster", type=_raster_shape, metavar="ROWSxCOLS")
    where.add_argument("--locations", help="lat,lon CSV or raster file")
    p.add_argument("--output-mean", help="mean raster (with --raster)")
    p.add_argument("--output-sd", help="sd raster (with --raster)")
    p.add_argument("--output", help="CSV of lat, lon, mean, sd (with --locations)")
    p.add_argument("--nu", type=_nonneg_int, help="expected grid level; checked against the fit")
    p.add_argument("--degree", type=int, choices=(1, 2, 3), help="expected degree; checked against the fit")
    p.add_argument("--observation-noise", action="store_true",
                   help="predict new observations instead of the latent field (--locations only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figure", help="optional image of the mean raster")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("itcz", help="probability of lying in the top band, per meridian")
    p.add_argument("--samples", required=True)
    p.add_argument("--width-km", type=float, default=1000.0)
    p.add_argument("--meridian-km", type=float, default=20000.0)
    p.add_argument("--L", type=int, default=1000, help="latitudes per meridian")
    p.add_argument("--M", type=int, default=360, help="number of meridians")
    p.add_argument("--nu", type=_nonneg_int)
    p.add_argument("--degree", type=int, choices=(1, 2, 3))
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; the detector is deterministic")
    p.add_argument("--output", required=True, help="CSV of lon, lat, probability")
    p.add_argument("--figure", help="optional image of the probability map")
    p.set_defaults(func=cmd_itcz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, ArithmeticError, RuntimeError, MemoryError, KeyError,
            np.linalg.LinAlgError) as exc:
        print(f"geopspline {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
