"""End-to-end run: ingest, statistics, segmentation, regressions, bootstrap.

Every stage writes plain CSV / JSON into the output directory; the run
finishes by writing ``manifest.json`` with the configuration, input
checksums, stage timings and a digest of every file produced.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import aggregates, bootstrap, regression, segmentation
from .errors import ConfigError
from .ingest import (FilterStats, ParseStats, RatingTable, filter_restaurant_reviews, parse_businesses,
                     parse_reviews, parse_users, write_reviews_csv)

logger = logging.getLogger(__name__)

CONFIG_SECTION = "ratingcohorts"


@dataclass
class RunConfig:
    reviews: str | None = None
    businesses: str | None = None
    users: str | None = None
    format: str = "json"
    out: str = "out"
    strict: bool = False
    min_ratings: int = 5
    lo_pct: float = 25.0
    hi_pct: float = 75.0
    percentile_convention: str = "linear"
    min_total: int = 200
    min_per_cohort: int = 50
    allowed_scores: tuple[float, ...] = (3.5, 4.0, 4.5)
    reg_min_count: int = 200
    reg_max_count: int = 2000
    loo: bool = False
    sample_size: int = 20
    replicates: int = 100
    seed: int = 0
    exclude_cohorts_from_target: bool = False
    workers: int | None = None

    def validate(self) -> None:
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got {self.format!r}")
        if self.percentile_convention not in segmentation.PERCENTILE_CONVENTIONS:
            raise ConfigError(f"unknown percentile convention {self.percentile_convention!r}")
        if not 0 <= self.lo_pct <= self.hi_pct <= 100:
            raise ConfigError("need 0 <= lo_pct <= hi_pct <= 100")
        if self.sample_size < 1 or self.replicates < 2:
            raise ConfigError("sample_size must be >= 1 and replicates >= 2")
        if self.reg_min_count > self.reg_max_count:
            raise ConfigError("reg_min_count exceeds reg_max_count")


def _coerce(name: str, raw: str) -> Any:
    ftype = {f.name: f.type for f in dataclasses.fields(RunConfig)}[name]
    text = raw.strip()
    if "bool" in ftype:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if name == "allowed_scores":
        return tuple(float(x) for x in text.replace(",", " ").split())
    if text.lower() in ("", "none") and "None" in ftype:
        return None
    try:
        if ftype.startswith("int"):
            return int(text)
        if ftype.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return text


def load_config(path: str | Path) -> dict[str, Any]:
    """Read an INI file whose ``[ratingcohorts]`` section holds RunConfig keys.

    Keys use the field names (dashes are accepted for underscores).
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    if CONFIG_SECTION not in parser:
        raise ConfigError(f"{path}: missing [{CONFIG_SECTION}] section")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    out = {}
    for key, raw in parser[CONFIG_SECTION].items():
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigError(f"{path}: unknown key {key!r}")
        out[name] = _coerce(name, raw)
    return out


def derive_seed(master: int, label: str) -> int:
    """Stable 63-bit seed for a named stage of a run seeded with ``master``."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


# -- stages ---------------------------------------------------------------

def ingest_tables(cfg: RunConfig, out: Path | None = None) -> tuple[RatingTable, dict]:
    """Parse the input tables and return restaurant reviews plus counts.

    Without a business table the review file is taken to hold restaurant
    reviews already (e.g. a synthetic or previously ingested file).
    """
    if not cfg.reviews:
        raise ConfigError("no review file given")
    summary: dict[str, Any] = {}
    review_stats = ParseStats()
    fstats = FilterStats()
    with open(cfg.reviews, "rb") as fh:
        records = parse_reviews(fh, cfg.format, strict=cfg.strict, stats=review_stats)
        if cfg.businesses:
            bstats = ParseStats()
            with open(cfg.businesses, "rb") as bfh:
                businesses = list(parse_businesses(bfh, cfg.format, strict=cfg.strict, stats=bstats))
            summary["businesses"] = {"records": bstats.records, "skipped": bstats.skipped,
                                     "restaurants": sum(b.is_restaurant for b in businesses)}
            records = filter_restaurant_reviews(records, businesses, strict=cfg.strict, stats=fstats)
        table = RatingTable.from_records(records)
    summary["reviews"] = {"records": review_stats.records, "skipped": review_stats.skipped,
                          "errors": review_stats.errors}
    if cfg.businesses:
        summary["filter"] = dataclasses.asdict(fstats)
    summary["restaurant_reviews"] = len(table)

    if cfg.users:
        ustats = ParseStats()
        source = {}
        with open(cfg.users, "rb") as ufh:
            for rec in parse_users(ufh, cfg.format, strict=cfg.strict, stats=ustats):
                source[rec.user_id] = rec.source_average
        summary["users"] = {"records": ustats.records, "skipped": ustats.skipped}
        summary["user_average_consistency"] = aggregates.source_average_report(
            aggregates.user_stats(table), source)

    if out is not None:
        write_reviews_csv(table.records(), out / "reviews.csv")
        write_json(out / "ingest.json", summary)
    return table, summary


def write_stats(out: Path, table: RatingTable, users, businesses, moments) -> list[Path]:
    means = aggregates.overall_means(table, users)
    return [
        write_csv(out / "user_stats.csv", users.to_frame()),
        write_csv(out / "business_stats.csv", businesses.to_frame()),
        write_json(out / "moments.json", {**moments.to_dict(), "mean_rating_per_rating": means["per_rating"],
                                          "mean_rating_per_user": means["per_user"],
                                          "n_ratings": len(table), "n_users": len(users),
                                          "n_businesses": len(businesses)}),
    ]


def write_segments(out: Path, assignment, users, table, businesses) -> list[Path]:
    summary = segmentation.cohort_summary(assignment, users, table, businesses)
    return [
        write_csv(out / "segments.csv", assignment.to_frame(users)),
        write_json(out / "thresholds.json", assignment.thresholds_dict()),
        write_json(out / "cohort_summary.json", {k: dataclasses.asdict(v) for k, v in summary.items()}),
    ]


def write_rating_regression(out: Path, fit: regression.RegressionFit, loo: bool = False) -> list[Path]:
    stem = "table1_loo" if loo else "table1"
    title = "Rating-level regression (DV = rating)" + (" - leave-one-out user mean" if loo else "")
    md = out / f"{stem}.md"
    md.write_text(fit.to_markdown(title))
    return [write_json(out / f"{stem}.json", fit.to_dict()), md]


def write_restaurant_regression(out: Path, res: regression.RestaurantRegression,
                                min_count: int, max_count: int) -> list[Path]:
    return [
        write_csv(out / "figure3.csv", res.scatter_frame()),
        write_json(out / "figure3_fit.json", {
            "intercept": res.intercept, "slope": res.slope,
            "r_squared": res.fit.r_squared, "n_restaurants": res.fit.n_obs,
            "min_count": min_count, "max_count": max_count, "fit": res.fit.to_dict(),
        }),
    ]


def run_cohort_bootstraps(universe, cohorts, sample_size: int, replicates: int, seed: int,
                          workers: int | None = None) -> list[bootstrap.BootstrapResult]:
    results = []
    for cohort in cohorts:
        if cohort == bootstrap.BASELINE:
            results.append(bootstrap.random_baseline(universe, replicates, derive_seed(seed, "baseline"), workers))
        else:
            results.append(bootstrap.run_bootstrap(universe, cohort, sample_size, replicates,
                                                   derive_seed(seed, f"bootstrap:{cohort}"), workers))
    return results


def write_bootstrap(out: Path, universe, results) -> list[Path]:
    frame = pd.concat([r.to_frame() for r in results], ignore_index=True)
    return [write_csv(out / "universe.csv", universe.to_frame()), write_csv(out / "figure4.csv", frame)]


def _hist_frame(label_col: str, groups: dict[str, np.ndarray], bins: np.ndarray, value_col: str) -> pd.DataFrame:
    rows = []
    for label, values in groups.items():
        if len(values) == 0:
            continue
        counts = [int(np.count_nonzero(values == b)) for b in bins]
        rows += [{label_col: label, value_col: b, "count": c} for b, c in zip(bins, counts)]
    return pd.DataFrame(rows, columns=[label_col, value_col, "count"])


def export_histograms(out: Path, table: RatingTable, users, businesses, assignment) -> list[Path]:
    """Histogram data for the dataset overview figures.

    * ``figure1_panel1.csv``: Yelp score counts for restaurants with 10-199
      and 200-2000 ratings.
    * ``figure1_panel2.csv``: star counts of ratings written by users with
      0-4 and 5-2000 ratings.
    * ``figure2_panel1.csv`` / ``figure2_panel2.csv``: star counts of
      ratings by inflating / deflating users.

    A group with no data contributes no rows, so an empty group leaves a
    header-only file.
    """
    half_stars = np.arange(1.0, 5.01, 0.5)
    stars = np.arange(1, 6)
    n_j, score = businesses.counts, businesses.yelp_scores
    p1 = _hist_frame("stratum", {
        "10-199": score[(n_j >= 10) & (n_j <= 199)],
        "200-2000": score[(n_j >= 200) & (n_j <= 2000)],
    }, half_stars, "yelp_score")

    n_i = users.counts[users.rows_for(table.user_ids)][table.user_codes]
    p2 = _hist_frame("stratum", {
        "0-4": table.stars[n_i <= 4],
        "5-2000": table.stars[(n_i >= 5) & (n_i <= 2000)],
    }, stars, "stars")

    codes = assignment.codes_for(table.user_ids)[table.user_codes]
    f2 = {c: _hist_frame("cohort", {c: table.stars[codes == segmentation.CODE_OF[c]]}, stars, "stars")
          for c in segmentation.COHORTS}
    return [
        write_csv(out / "figure1_panel1.csv", p1),
        write_csv(out / "figure1_panel2.csv", p2),
        write_csv(out / "figure2_panel1.csv", f2[segmentation.INFLATING]),
        write_csv(out / "figure2_panel2.csv", f2[segmentation.DEFLATING]),
    ]


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Manifest:
    config: dict
    inputs: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    complete: bool = False
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every stage in order and return the manifest (also written to disk).

    A failing stage stops the run; the manifest written so far marks it as
    incomplete and names the stage, then :class:`StageError` is raised.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(config=dataclasses.asdict(cfg))
    produced: list[Path] = []
    state: dict[str, Any] = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            manifest.failed_stage = name
            manifest.error = f"{type(exc).__name__}: {exc}"
            _finish(manifest, out, produced)
            raise StageError(name, exc) from exc
        manifest.stages.append({"stage": name, "seconds": round(time.perf_counter() - t0, 3)})
        return result

    def do_ingest():
        for key in ("reviews", "businesses", "users"):
            path = getattr(cfg, key)
            if path:
                manifest.inputs[key] = {"path": str(path), "sha256": sha256_file(path)}
        table, _ = ingest_tables(cfg, out)
        produced.extend([out / "reviews.csv", out / "ingest.json"])
        state["table"] = table

    def do_stats():
        t = state["table"]
        state["users"] = aggregates.user_stats(t)
        state["businesses"] = aggregates.business_stats(t)
        state["moments"] = aggregates.population_moments(state["users"], state["businesses"])
        produced.extend(write_stats(out, t, state["users"], state["businesses"], state["moments"]))

    def do_segment():
        state["segments"] = segmentation.segment_raters(
            state["users"], cfg.min_ratings, cfg.lo_pct, cfg.hi_pct, cfg.percentile_convention)
        produced.extend(write_segments(out, state["segments"], state["users"], state["table"], state["businesses"]))

    def do_regress():
        t, u, b = state["table"], state["users"], state["businesses"]
        fit = regression.rating_level_regression(t, u, b, state["moments"])
        produced.extend(write_rating_regression(out, fit))
        if cfg.loo:
            produced.extend(write_rating_regression(
                out, regression.rating_level_regression(t, u, b, state["moments"], leave_one_out=True), loo=True))
        res = regression.restaurant_level_regression(t, u, b, cfg.reg_min_count, cfg.reg_max_count)
        produced.extend(write_restaurant_regression(out, res, cfg.reg_min_count, cfg.reg_max_count))

    def do_bootstrap():
        uni = bootstrap.build_universe(state["businesses"], state["table"], state["segments"],
                                       cfg.min_total, cfg.min_per_cohort, cfg.allowed_scores,
                                       cfg.exclude_cohorts_from_target)
        results = run_cohort_bootstraps(uni, (segmentation.DEFLATING, segmentation.INFLATING, bootstrap.BASELINE),
                                        cfg.sample_size, cfg.replicates, cfg.seed, cfg.workers)
        produced.extend(write_bootstrap(out, uni, results))

    def do_report():
        produced.extend(export_histograms(out, state["table"], state["users"], state["businesses"],
                                          state["segments"]))

    for name, fn in [("ingest", do_ingest), ("stats", do_stats), ("segment", do_segment),
                     ("regress", do_regress), ("bootstrap", do_bootstrap), ("report", do_report)]:
        stage(name, fn)
    manifest.complete = True
    return _finish(manifest, out, produced)


def _finish(manifest: Manifest, out: Path, produced: list[Path]) -> dict:
    manifest.outputs = {p.name: sha256_file(p) for p in sorted(produced, key=lambda p: p.name) if p.exists()}
    data = manifest.to_dict()
    write_json(out / "manifest.json", data)
    return data

