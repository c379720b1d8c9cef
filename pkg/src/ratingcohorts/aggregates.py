"""Per-user and per-business rating statistics.

Stars are small integers, so per-entity sums are accumulated exactly in
integer arithmetic and each mean is a single correctly rounded division.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DegeneratePopulationError
from .ingest import RatingRecord, RatingTable


@dataclass(frozen=True, slots=True)
class UserStats:
    user_id: str
    n: int
    mean_rating: float


@dataclass(frozen=True, slots=True)
class BusinessStats:
    business_id: str
    n: int
    mean_rating: float
    yelp_score: float


@dataclass(frozen=True)
class PopulationMoments:
    mu_u: float
    sigma_u: float
    mu_r: float
    sigma_r: float

    def to_dict(self) -> dict[str, float]:
        return {"mu_u": self.mu_u, "sigma_u": self.sigma_u, "mu_r": self.mu_r, "sigma_r": self.sigma_r}


class StatsTable(Mapping):
    """Read-only ``id -> stats`` mapping backed by parallel arrays.

    ``ids``, ``counts`` and ``means`` are aligned; row ``k`` describes
    ``ids[k]``.  When built from a :class:`RatingTable` the rows follow that
    table's id coding, so ``means[table.user_codes]`` broadcasts a
    per-rating value without any lookup.
    """

    def __init__(self, ids: np.ndarray, counts: np.ndarray, means: np.ndarray):
        self.ids = np.asarray(ids, dtype=object)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.means = np.asarray(means, dtype=np.float64)
        self._index: dict[str, int] | None = None

    @property
    def index(self) -> dict[str, int]:
        if self._index is None:
            self._index = {k: i for i, k in enumerate(self.ids)}
        return self._index

    def rows_for(self, ids: np.ndarray) -> np.ndarray:
        """Row positions of ``ids``; raises KeyError if any id is absent."""
        if ids is self.ids:
            return np.arange(len(ids))
        pos = pd.Index(self.ids).get_indexer(ids)
        if len(pos) and pos.min() < 0:
            raise KeyError(ids[int(np.argmin(pos))])
        return pos

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[str]:
        return iter(self.ids)

    def __contains__(self, key) -> bool:
        return key in self.index

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"n": self.counts, "mean": self.means}, index=pd.Index(self.ids, name="id"))


class UserStatsTable(StatsTable):
    def __getitem__(self, user_id: str) -> UserStats:
        k = self.index[user_id]
        return UserStats(user_id, int(self.counts[k]), float(self.means[k]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"user_id": self.ids, "n": self.counts, "mean": self.means})


class BusinessStatsTable(StatsTable):
    def __init__(self, ids, counts, means):
        super().__init__(ids, counts, means)
        self.yelp_scores = round_half(self.means)

    def __getitem__(self, business_id: str) -> BusinessStats:
        k = self.index[business_id]
        return BusinessStats(business_id, int(self.counts[k]), float(self.means[k]), float(self.yelp_scores[k]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"business_id": self.ids, "n": self.counts, "mean": self.means,
                             "yelp_score": self.yelp_scores})


def as_table(ratings: RatingTable | Iterable[RatingRecord]) -> RatingTable:
    return ratings if isinstance(ratings, RatingTable) else RatingTable.from_records(ratings)


def _grouped(ids: np.ndarray, codes: np.ndarray, stars: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    counts = np.bincount(codes, minlength=len(ids))
    sums = np.bincount(codes, weights=stars, minlength=len(ids))
    present = counts > 0
    # integer-valued float sums below 2**53 are exact
    return ids[present], counts[present], sums[present] / counts[present]


def user_stats(ratings: RatingTable | Iterable[RatingRecord]) -> UserStatsTable:
    """Count and mean star rating per user (the user's X_1)."""
    t = as_table(ratings)
    ids, n, mean = _grouped(t.user_ids, t.user_codes, t.stars)
    return UserStatsTable(t.user_ids if len(ids) == t.n_users else ids, n, mean)


def business_stats(ratings: RatingTable | Iterable[RatingRecord]) -> BusinessStatsTable:
    """Count, mean rating and half-star Yelp score per business."""
    t = as_table(ratings)
    ids, n, mean = _grouped(t.business_ids, t.business_codes, t.stars)
    return BusinessStatsTable(t.business_ids if len(ids) == t.n_businesses else ids, n, mean)


def round_half(x):
    """Round to the nearest multiple of 0.5, with exact midpoints rounding up.

    Works elementwise on arrays; returns a float for scalar input.
    """
    out = np.floor(np.asarray(x, dtype=np.float64) * 2.0 + 0.5) / 2.0
    return float(out) if np.ndim(out) == 0 else out


def population_moments(users: StatsTable, businesses: StatsTable) -> PopulationMoments:
    """Mean and population (divisor N) standard deviation of entity means."""
    if len(users) < 2 or len(businesses) < 2:
        raise DegeneratePopulationError(
            f"need at least 2 users and 2 businesses, got {len(users)} and {len(businesses)}")
    return PopulationMoments(
        float(np.mean(users.means)), float(np.std(users.means)),
        float(np.mean(businesses.means)), float(np.std(businesses.means)),
    )


def normalize(x, mu: float, sigma: float):
    """(x - mu) / sigma, elementwise."""
    if not sigma > 0 or not math.isfinite(sigma):
        raise DegeneratePopulationError(f"cannot normalize with sigma={sigma!r}")
    out = (np.asarray(x, dtype=np.float64) - mu) / sigma
    return float(out) if np.ndim(out) == 0 else out


def denormalize(z, mu: float, sigma: float):
    out = np.asarray(z, dtype=np.float64) * sigma + mu
    return float(out) if np.ndim(out) == 0 else out


def overall_means(ratings: RatingTable, users: UserStatsTable) -> dict[str, float]:
    """Dataset-wide average rating computed two ways.

    ``per_rating`` is the plain mean over all ratings; ``per_user`` averages
    the users' own means so each user counts once.
    """
    return {
        "per_rating": float(np.mean(ratings.stars)) if len(ratings) else math.nan,
        "per_user": float(np.mean(users.means)) if len(users) else math.nan,
    }


def source_average_report(users: UserStatsTable, source_averages: Mapping[str, float]) -> dict[str, float]:
    """Compare review-derived user means with the user table's average_stars.

    The user table covers every business a user reviewed, so differences are
    expected; this only summarises them.
    """
    common = [u for u in users.ids if u in source_averages]
    if not common:
        return {"users_compared": 0}
    ours = np.array([users[u].mean_rating for u in common])
    theirs = np.array([source_averages[u] for u in common])
    diff = ours - theirs
    return {
        "users_compared": len(common),
        "mean_abs_diff": float(np.mean(np.abs(diff))),
        "max_abs_diff": float(np.max(np.abs(diff))),
        "correlation": float(np.corrcoef(ours, theirs)[0, 1]) if len(common) > 1 and np.std(theirs) > 0 else math.nan,
    }
