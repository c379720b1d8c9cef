"""Split experienced raters into deflating, inflating and neutral cohorts."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .aggregates import BusinessStatsTable, UserStatsTable, as_table, business_stats
from .errors import InsufficientDataError
from .ingest import RatingTable

logger = logging.getLogger(__name__)

DEFLATING, INFLATING, NEUTRAL = "deflating", "inflating", "neutral"
COHORTS = (DEFLATING, INFLATING)

# label codes stored per user row
NO_LABEL, NEUTRAL_CODE, DEFLATING_CODE, INFLATING_CODE = -1, 0, 1, 2
CODE_OF = {NEUTRAL: NEUTRAL_CODE, DEFLATING: DEFLATING_CODE, INFLATING: INFLATING_CODE}
LABEL_OF = {v: k for k, v in CODE_OF.items()}

PERCENTILE_CONVENTIONS = ("linear", "nearest-rank")


def percentile(values: Sequence[float] | np.ndarray, pct: float, convention: str = "linear") -> float:
    """Percentile of ``values`` (``pct`` in [0, 100]).

    ``linear`` interpolates between closest ranks at position
    ``pct/100 * (N - 1)`` of the sorted data (Hyndman-Fan type 7).
    ``nearest-rank`` returns the ``ceil(pct/100 * N)``-th smallest value.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = len(x)
    if n == 0:
        raise ValueError("percentile of an empty sequence")
    if not 0 <= pct <= 100:
        raise ValueError(f"pct must be in [0, 100], got {pct}")
    if convention == "linear":
        pos = pct / 100.0 * (n - 1)
        lo = math.floor(pos)
        hi = min(lo + 1, n - 1)
        frac = pos - lo
        return float(x[lo] + (x[hi] - x[lo]) * frac) if frac else float(x[lo])
    if convention == "nearest-rank":
        rank = max(1, math.ceil(pct / 100.0 * n))
        return float(x[rank - 1])
    raise ValueError(f"unknown percentile convention {convention!r}")


@dataclass(frozen=True)
class SegmentAssignment:
    """Frozen cohort labels plus the thresholds that produced them.

    ``codes`` is aligned with ``user_ids`` (the rows of the user stats table
    the assignment was computed from); ineligible users carry ``NO_LABEL``.
    """

    lo_threshold: float
    hi_threshold: float
    min_ratings: int
    lo_pct: float
    hi_pct: float
    convention: str
    user_ids: np.ndarray = field(repr=False)
    codes: np.ndarray = field(repr=False)

    @property
    def labels(self) -> dict[str, str]:
        keep = self.codes != NO_LABEL
        return {u: LABEL_OF[int(c)] for u, c in zip(self.user_ids[keep], self.codes[keep])}

    def label(self, user_id: str) -> str | None:
        return self.labels.get(user_id)

    def members(self, cohort: str) -> np.ndarray:
        return self.user_ids[self.codes == CODE_OF[cohort]]

    def size(self, cohort: str) -> int:
        return int(np.count_nonzero(self.codes == CODE_OF[cohort]))

    @property
    def n_eligible(self) -> int:
        return int(np.count_nonzero(self.codes != NO_LABEL))

    def codes_for(self, ids: np.ndarray) -> np.ndarray:
        """Label codes for an array of user ids (NO_LABEL for unknown ids)."""
        if ids is self.user_ids:
            return self.codes
        pos = pd.Index(self.user_ids).get_indexer(ids)
        out = np.full(len(ids), NO_LABEL, dtype=np.int8)
        hit = pos >= 0
        out[hit] = self.codes[pos[hit]]
        return out

    def thresholds_dict(self) -> dict:
        return {
            "lo": self.lo_threshold,
            "hi": self.hi_threshold,
            "lo_pct": self.lo_pct,
            "hi_pct": self.hi_pct,
            "min_ratings": self.min_ratings,
            "percentile_convention": (
                "linear interpolation between closest ranks, position p*(N-1) (type 7)"
                if self.convention == "linear" else "nearest rank, ceil(p*N)"
            ),
            "eligible_users": self.n_eligible,
            "deflating_users": self.size(DEFLATING),
            "inflating_users": self.size(INFLATING),
        }

    def to_frame(self, users: UserStatsTable) -> pd.DataFrame:
        """Rows for eligible users: ``user_id,label,mean,n``."""
        keep = self.codes != NO_LABEL
        rows = users.rows_for(self.user_ids[keep])
        return pd.DataFrame({
            "user_id": self.user_ids[keep],
            "label": [LABEL_OF[int(c)] for c in self.codes[keep]],
            "mean": users.means[rows],
            "n": users.counts[rows],
        })


def segment_raters(users: UserStatsTable, min_ratings: int = 5, lo_pct: float = 25,
                   hi_pct: float = 75, convention: str = "linear") -> SegmentAssignment:
    """Label users with at least ``min_ratings`` ratings by percentile of their mean.

    Deflating means strictly below the ``lo_pct`` percentile of eligible
    users' means, inflating strictly above ``hi_pct``; users sitting exactly
    on a threshold are neutral.
    """
    if not lo_pct <= hi_pct:
        raise ValueError("lo_pct must not exceed hi_pct")
    eligible = users.counts >= min_ratings
    if not eligible.any():
        raise InsufficientDataError(f"no user has {min_ratings} or more ratings")
    means = users.means[eligible]
    lo = percentile(means, lo_pct, convention)
    hi = percentile(means, hi_pct, convention)
    if lo == hi:
        logger.warning("all eligible users share one mean rating; both cohorts are empty")

    codes = np.full(len(users), NO_LABEL, dtype=np.int8)
    codes[eligible] = NEUTRAL_CODE
    codes[eligible & (users.means < lo)] = DEFLATING_CODE
    codes[eligible & (users.means > hi)] = INFLATING_CODE
    return SegmentAssignment(lo, hi, min_ratings, lo_pct, hi_pct, convention, users.ids, codes)


@dataclass(frozen=True)
class CohortSummary:
    cohort: str
    users: int
    ratings: int
    mean_rating: float | None
    mean_restaurant_rating: float | None


def cohort_summary(assignment: SegmentAssignment, users: UserStatsTable, ratings,
                   businesses: BusinessStatsTable | None = None) -> dict[str, CohortSummary]:
    """Average stars given by each cohort and average rating of what they rated.

    Both averages run over the cohort's individual ratings: the first over
    the stars themselves, the second over the mean rating of the restaurant
    each rating was for.
    """
    t = as_table(ratings)
    if businesses is None:
        businesses = business_stats(t)
    codes = assignment.codes_for(t.user_ids)[t.user_codes]
    brows = businesses.rows_for(t.business_ids)
    restaurant_means = businesses.means[brows][t.business_codes]

    out = {}
    for cohort in COHORTS:
        hit = codes == CODE_OF[cohort]
        n = int(np.count_nonzero(hit))
        if n == 0:
            logger.warning("cohort %s has no ratings", cohort)
            out[cohort] = CohortSummary(cohort, assignment.size(cohort), 0, None, None)
            continue
        out[cohort] = CohortSummary(
            cohort, assignment.size(cohort), n,
            float(np.mean(t.stars[hit])), float(np.mean(restaurant_means[hit])),
        )
    return out


def cohort_star_histograms(assignment: SegmentAssignment, ratings: RatingTable) -> pd.DataFrame:
    """Counts of 1..5 star ratings authored by each cohort."""
    codes = assignment.codes_for(ratings.user_ids)[ratings.user_codes]
    rows = []
    for cohort in COHORTS:
        stars = ratings.stars[codes == CODE_OF[cohort]]
        counts = np.bincount(stars, minlength=6)[1:6]
        rows += [{"cohort": cohort, "stars": s, "count": int(c)} for s, c in zip(range(1, 6), counts)]
    return pd.DataFrame(rows, columns=["cohort", "stars", "count"])
