"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(unreadable or invalid input), 3 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import aggregates, bootstrap, pipeline, regression, segmentation, synthdata
from .errors import ConfigError, RatingDataError
from .pipeline import RunConfig

logger = logging.getLogger("ratingcohorts")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_input(p: argparse.ArgumentParser, default_format: str = "csv") -> None:
    p.add_argument("--reviews", help="review file (restaurant reviews unless --businesses is given)")
    p.add_argument("--businesses", help="business table; enables the restaurant filter")
    p.add_argument("--users", help="user table (only used for a consistency report)")
    p.add_argument("--format", choices=("json", "csv"), default=None,
                   help=f"input format (default {default_format})")
    p.add_argument("--strict", action="store_true", default=None, help="fail on the first malformed line")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with a [ratingcohorts] section; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ratingcohorts", description="Rater-cohort analytics for restaurant ratings.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse the raw tables and keep restaurant reviews")
    _add_input(p, "json")
    _add_common(p)

    p = sub.add_parser("stats", help="per-user / per-business statistics and moments")
    _add_input(p)
    _add_common(p)

    p = sub.add_parser("segment", help="label deflating / inflating raters")
    _add_input(p)
    _add_common(p)
    p.add_argument("--min-ratings", type=int)
    p.add_argument("--lo-pct", type=float)
    p.add_argument("--hi-pct", type=float)
    p.add_argument("--percentile-convention", choices=segmentation.PERCENTILE_CONVENTIONS)

    p = sub.add_parser("regress", help="rating-level or restaurant-level regression")
    _add_input(p)
    _add_common(p)
    p.add_argument("--level", choices=("rating", "restaurant"), default="rating")
    p.add_argument("--min-count", type=int, dest="reg_min_count")
    p.add_argument("--max-count", type=int, dest="reg_max_count")
    p.add_argument("--loo", action="store_true", default=None,
                   help="leave the predicted rating out of its user's mean")

    p = sub.add_parser("bootstrap", help="cohort ranking accuracy experiment")
    _add_input(p)
    _add_common(p)
    p.add_argument("--cohort", choices=("deflating", "inflating", "baseline", "all"), default="all")
    p.add_argument("--sample-size", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-ratings", type=int)
    p.add_argument("--min-total", type=int)
    p.add_argument("--min-per-cohort", type=int)
    p.add_argument("--allowed-scores", type=lambda s: tuple(float(x) for x in s.split(",")),
                   help="comma-separated score classes, e.g. 3.5,4.0,4.5")
    p.add_argument("--exclude-cohorts-from-target", action="store_true", default=None)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("synth", help="generate a synthetic review set with known latents")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=synthdata.SynthConfig.n_users)
    p.add_argument("--restaurants", type=int, default=synthdata.SynthConfig.n_restaurants)
    p.add_argument("--ratings-per-user", type=int, default=synthdata.SynthConfig.ratings_per_user)
    p.add_argument("--quality-spread", type=float, default=synthdata.SynthConfig.quality_spread)
    p.add_argument("--generosity-spread", type=float, default=synthdata.SynthConfig.generosity_spread)
    p.add_argument("--noise-spread", type=float, default=synthdata.SynthConfig.noise_spread)
    p.add_argument("--popularity-skew", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("run", help="full pipeline with manifest")
    _add_input(p, "json")
    _add_common(p)
    for flag, kind in [("--min-ratings", int), ("--lo-pct", float), ("--hi-pct", float),
                       ("--min-total", int), ("--min-per-cohort", int), ("--min-count", int),
                       ("--max-count", int), ("--sample-size", int), ("--replicates", int),
                       ("--seed", int), ("--workers", int)]:
        dest = {"--min-count": "reg_min_count", "--max-count": "reg_max_count"}.get(flag)
        p.add_argument(flag, type=kind, **({"dest": dest} if dest else {}))
    p.add_argument("--allowed-scores", type=lambda s: tuple(float(x) for x in s.split(",")))
    p.add_argument("--percentile-convention", choices=segmentation.PERCENTILE_CONVENTIONS)
    p.add_argument("--loo", action="store_true", default=None)
    p.add_argument("--exclude-cohorts-from-target", action="store_true", default=None)

    p = sub.add_parser("report", help="histogram data for the overview figures")
    _add_input(p)
    _add_common(p)
    p.add_argument("--min-ratings", type=int)
    return parser


def resolve_config(args: argparse.Namespace, default_format: str) -> RunConfig:
    """Defaults < config file < explicit flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(pipeline.load_config(args.config))
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key, val in vars(args).items():
        if key in known and val is not None:
            values[key] = val
    values.setdefault("format", default_format)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _load(cfg: RunConfig):
    table, _ = pipeline.ingest_tables(cfg)
    users = aggregates.user_stats(table)
    businesses = aggregates.business_stats(table)
    return table, users, businesses


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args):
    cfg = resolve_config(args, "json")
    _, summary = pipeline.ingest_tables(cfg, _outdir(cfg))
    print(f"restaurant reviews: {summary['restaurant_reviews']}")


def cmd_stats(args):
    cfg = resolve_config(args, "csv")
    table, users, businesses = _load(cfg)
    moments = aggregates.population_moments(users, businesses)
    pipeline.write_stats(_outdir(cfg), table, users, businesses, moments)
    print(f"users: {len(users)}  businesses: {len(businesses)}  {moments}")


def cmd_segment(args):
    cfg = resolve_config(args, "csv")
    table, users, businesses = _load(cfg)
    seg = segmentation.segment_raters(users, cfg.min_ratings, cfg.lo_pct, cfg.hi_pct, cfg.percentile_convention)
    pipeline.write_segments(_outdir(cfg), seg, users, table, businesses)
    print(f"lo={seg.lo_threshold:.4f} hi={seg.hi_threshold:.4f} "
          f"deflating={seg.size('deflating')} inflating={seg.size('inflating')}")


def cmd_regress(args):
    cfg = resolve_config(args, "csv")
    table, users, businesses = _load(cfg)
    out = _outdir(cfg)
    if args.level == "rating":
        moments = aggregates.population_moments(users, businesses)
        fit = regression.rating_level_regression(table, users, businesses, moments, leave_one_out=cfg.loo)
        pipeline.write_rating_regression(out, fit, loo=cfg.loo)
        print(fit.to_markdown(), end="")
    else:
        res = regression.restaurant_level_regression(table, users, businesses, cfg.reg_min_count, cfg.reg_max_count)
        pipeline.write_restaurant_regression(out, res, cfg.reg_min_count, cfg.reg_max_count)
        print(f"slope={res.slope:.4f} intercept={res.intercept:.4f} R2={res.fit.r_squared:.4f} "
              f"restaurants={res.fit.n_obs}")


def cmd_bootstrap(args):
    cfg = resolve_config(args, "csv")
    table, users, businesses = _load(cfg)
    seg = segmentation.segment_raters(users, cfg.min_ratings, cfg.lo_pct, cfg.hi_pct, cfg.percentile_convention)
    uni = bootstrap.build_universe(businesses, table, seg, cfg.min_total, cfg.min_per_cohort,
                                   cfg.allowed_scores, cfg.exclude_cohorts_from_target)
    cohorts = {"deflating": ["deflating"], "inflating": ["inflating"], "baseline": [bootstrap.BASELINE],
               "all": ["deflating", "inflating", bootstrap.BASELINE]}[args.cohort]
    results = pipeline.run_cohort_bootstraps(uni, cohorts, cfg.sample_size, cfg.replicates, cfg.seed, cfg.workers)
    pipeline.write_bootstrap(_outdir(cfg), uni, results)
    for r in results:
        mean, se = r.accuracy_mean, r.accuracy_se
        print(r.cohort, "  ".join(f"{c}: {mean[c]:.3f}±{se[c]:.3f}" for c in r.classes))


def cmd_synth(args):
    cfg = synthdata.SynthConfig(
        n_users=args.users, n_restaurants=args.restaurants, ratings_per_user=args.ratings_per_user,
        quality_spread=args.quality_spread, generosity_spread=args.generosity_spread,
        noise_spread=args.noise_spread, popularity_skew=args.popularity_skew,
        seed=pipeline.derive_seed(args.seed, "synth"),
    )
    data = synthdata.generate(cfg)
    paths = data.write(args.out)
    print(f"wrote {len(data.ratings)} ratings to {paths['reviews']}")


def cmd_run(args):
    cfg = resolve_config(args, "json")
    manifest = pipeline.run_pipeline(cfg)
    print(f"wrote {len(manifest['outputs'])} files to {cfg.out}")


def cmd_report(args):
    cfg = resolve_config(args, "csv")
    table, users, businesses = _load(cfg)
    seg = segmentation.segment_raters(users, cfg.min_ratings, cfg.lo_pct, cfg.hi_pct, cfg.percentile_convention)
    for path in pipeline.export_histograms(_outdir(cfg), table, users, businesses, seg):
        print(path)


COMMANDS = {
    "ingest": cmd_ingest, "stats": cmd_stats, "segment": cmd_segment, "regress": cmd_regress,
    "bootstrap": cmd_bootstrap, "synth": cmd_synth, "run": cmd_run, "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        COMMANDS[args.command](args)
    except pipeline.StageError as exc:
        stage, cause = exc.stage, exc.cause
        return _report_error(stage, cause)
    except Exception as exc:
        return _report_error(stage, exc)
    return EXIT_OK


def _report_error(stage: str, exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, UsageError)):
        code = EXIT_USAGE
    elif isinstance(exc, (RatingDataError, OSError)):
        code = EXIT_DATA
    else:
        code = EXIT_INTERNAL
        logger.debug("internal error", exc_info=exc)
    print(f"error [{stage}]: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
