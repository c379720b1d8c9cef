"""Rater-cohort analytics for restaurant rating data.

Typical flow::

    table, _ = ingest.read_reviews("reviews.csv")
    users, businesses = aggregates.user_stats(table), aggregates.business_stats(table)
    segments = segmentation.segment_raters(users)
    universe = bootstrap.build_universe(businesses, table, segments)
    result = bootstrap.run_bootstrap(universe, "deflating", replicates=100, seed=1)
"""

from . import aggregates, bootstrap, ingest, pipeline, regression, segmentation, synthdata
from .aggregates import business_stats, normalize, population_moments, round_half, user_stats
from .bootstrap import build_universe, classify_by_proportions, random_baseline, run_bootstrap
from .ingest import RatingRecord, RatingTable, parse_businesses, parse_reviews, parse_users
from .regression import ols_fit, rating_level_regression, restaurant_level_regression
from .segmentation import segment_raters

__version__ = "0.1.0"
