"""Bootstrap ranking experiment: how well does each cohort order restaurants?

For every restaurant in the universe we keep, per cohort, the pool of
distinct cohort members who rated it together with each member's mean star
rating of that restaurant.  One replicate draws ``sample_size`` pool
members with replacement per restaurant, ranks restaurants by the sample
average, cuts the ranking into score classes sized like the universe's own
class counts, and scores the fraction of each true class put back in its
own class.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .aggregates import BusinessStatsTable, as_table, round_half
from .errors import EmptyUniverseError
from .regression import distinct_pairs
from .segmentation import CODE_OF, COHORTS, DEFLATING_CODE, INFLATING_CODE, SegmentAssignment

logger = logging.getLogger(__name__)

BASELINE = "random-baseline"
DEFAULT_SCORES = (3.5, 4.0, 4.5)


@dataclass(frozen=True)
class Pool:
    """Compressed per-restaurant pools for one cohort (CSR layout)."""

    offsets: np.ndarray  # len N+1
    user_ids: np.ndarray
    values: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def entries(self, k: int) -> list[tuple[str, float]]:
        lo, hi = self.offsets[k], self.offsets[k + 1]
        return [(u, float(v)) for u, v in zip(self.user_ids[lo:hi], self.values[lo:hi])]


@dataclass(frozen=True)
class Universe:
    """Eligible restaurants, their true score class, and per-cohort pools.

    Restaurants are held in ascending ``business_id`` order, which is also
    the tie-break order used when ranking.
    """

    business_ids: np.ndarray
    true_scores: np.ndarray
    cohort_pools: Mapping[str, Pool]
    classes: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.classes:
            object.__setattr__(self, "classes", tuple(sorted(set(float(s) for s in self.true_scores))))

    def __len__(self) -> int:
        return len(self.business_ids)

    @property
    def restaurants(self) -> list[tuple[str, float]]:
        return [(b, float(s)) for b, s in zip(self.business_ids, self.true_scores)]

    @property
    def class_counts(self) -> dict[float, int]:
        return {c: int(np.count_nonzero(self.true_scores == c)) for c in self.classes}

    @property
    def proportions(self) -> dict[float, float]:
        n = len(self)
        return {c: k / n for c, k in self.class_counts.items()}

    @property
    def pools(self) -> dict[tuple[str, str], list[tuple[str, float]]]:
        return {(b, cohort): pool.entries(k)
                for cohort, pool in self.cohort_pools.items()
                for k, b in enumerate(self.business_ids)}

    def pool(self, business_id: str, cohort: str) -> list[tuple[str, float]]:
        k = int(np.searchsorted(self.business_ids, business_id))
        if k >= len(self) or self.business_ids[k] != business_id:
            raise KeyError(business_id)
        return self.cohort_pools[cohort].entries(k)

    def to_frame(self) -> pd.DataFrame:
        out = {"business_id": self.business_ids, "true_score": self.true_scores}
        for cohort, pool in self.cohort_pools.items():
            out[f"{cohort}_raters"] = pool.sizes
        return pd.DataFrame(out)

    @classmethod
    def from_pools(cls, restaurants: Sequence[tuple[str, float]],
                   pools: Mapping[tuple[str, str], Sequence[tuple[str, float]]],
                   classes: Sequence[float] | None = None) -> Universe:
        """Build a universe from plain Python structures (handy for small cases)."""
        order = sorted(restaurants, key=lambda r: r[0])
        bids = np.array([b for b, _ in order], dtype=object)
        scores = np.array([s for _, s in order], dtype=np.float64)
        cohorts = sorted({c for _, c in pools})
        built = {}
        for cohort in cohorts:
            users, values, offsets = [], [], [0]
            for b in bids:
                entries = pools.get((b, cohort), [])
                users += [u for u, _ in entries]
                values += [v for _, v in entries]
                offsets.append(len(values))
            built[cohort] = Pool(np.array(offsets, dtype=np.int64), np.array(users, dtype=object),
                                 np.array(values, dtype=np.float64))
        return cls(bids, scores, built, tuple(classes) if classes else ())


def build_universe(businesses: BusinessStatsTable, ratings, segments: SegmentAssignment,
                   min_total: int = 200, min_per_cohort: int = 50,
                   allowed_scores: Sequence[float] = DEFAULT_SCORES,
                   exclude_cohorts_from_target: bool = False) -> Universe:
    """Restaurants with more than ``min_total`` ratings and enough cohort raters.

    A restaurant qualifies when it has ``n > min_total`` ratings, at least
    ``min_per_cohort`` distinct deflating and as many distinct inflating
    raters, and a true score in ``allowed_scores``.  The true score is the
    half-star rounded mean of all its ratings, or with
    ``exclude_cohorts_from_target`` of the ratings by users outside both
    cohorts.
    """
    t = as_table(ratings)
    ucodes, bcodes, pair_means = distinct_pairs(t)
    label = segments.codes_for(t.user_ids)[ucodes]
    brows = businesses.rows_for(t.business_ids)
    nb = t.n_businesses

    n_def = np.bincount(bcodes[label == DEFLATING_CODE], minlength=nb)
    n_inf = np.bincount(bcodes[label == INFLATING_CODE], minlength=nb)
    total = businesses.counts[brows]

    if exclude_cohorts_from_target:
        rating_label = segments.codes_for(t.user_ids)[t.user_codes]
        outside = (rating_label != DEFLATING_CODE) & (rating_label != INFLATING_CODE)
        cnt = np.bincount(t.business_codes[outside], minlength=nb)
        sums = np.bincount(t.business_codes[outside], weights=t.stars[outside], minlength=nb)
        with np.errstate(invalid="ignore", divide="ignore"):
            target = round_half(sums / cnt)
    else:
        target = businesses.yelp_scores[brows]

    allowed = np.array(sorted(float(s) for s in allowed_scores))
    ok = ((total > min_total) & (n_def >= min_per_cohort) & (n_inf >= min_per_cohort)
          & np.isin(target, allowed))
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        raise EmptyUniverseError(
            f"no restaurant has >{min_total} ratings, >={min_per_cohort} raters per cohort "
            f"and a score in {list(allowed)}")

    order = idx[np.argsort(t.business_ids[idx].astype(str), kind="stable")]
    position = np.full(nb, -1, dtype=np.int64)
    position[order] = np.arange(len(order))

    pools = {}
    for cohort in COHORTS:
        hit = (label == CODE_OF[cohort]) & (position[bcodes] >= 0)
        pos = position[bcodes[hit]]
        # pairs are sorted by (business code, user code); restore universe order
        perm = np.argsort(pos, kind="stable")
        sizes = np.bincount(pos, minlength=len(order))
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        pools[cohort] = Pool(offsets, t.user_ids[ucodes[hit][perm]], pair_means[hit][perm])

    uni = Universe(t.business_ids[order], target[order].astype(np.float64), pools,
                   tuple(float(s) for s in allowed if np.any(target[order] == s)))
    logger.info("universe: %d restaurants, classes %s", len(uni), uni.class_counts)
    return uni


def block_sizes(n: int, proportions: Sequence[float]) -> np.ndarray:
    """Split ``n`` into integer blocks proportional to ``proportions`` (largest remainder)."""
    p = np.asarray(proportions, dtype=np.float64)
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0):
        raise ValueError(f"proportions must be non-negative and sum to 1, got {p.tolist()}")
    quota = p * n
    sizes = np.floor(quota).astype(np.int64)
    short = n - int(sizes.sum())
    # ties in the remainder go to the earlier entry
    order = np.argsort(-(quota - sizes), kind="stable")
    sizes[order[:short]] += 1
    return sizes


def classify_by_proportions(sorted_ids: Sequence, proportions: Mapping[float, float]) -> dict:
    """Assign classes down a best-first ranking.

    The highest class takes the first block of ``sorted_ids``, the next
    class the following block, and so on; block sizes come from
    :func:`block_sizes`.
    """
    classes = sorted(proportions, reverse=True)
    sizes = block_sizes(len(sorted_ids), [proportions[c] for c in classes])
    out = {}
    start = 0
    for c, size in zip(classes, sizes):
        for item in sorted_ids[start:start + size]:
            out[item] = c
        start += size
    return out


def _class_labels(universe: Universe) -> tuple[np.ndarray, np.ndarray]:
    """Class index for each rank (0 = best), plus the ascending class array."""
    classes = np.array(universe.classes)
    counts = np.array([universe.class_counts[c] for c in universe.classes])
    desc = np.arange(len(classes))[::-1]
    sizes = block_sizes(len(universe), counts[desc] / counts.sum())
    return np.repeat(desc, sizes), classes


def _accuracy(universe: Universe, ranking: np.ndarray, rank_labels: np.ndarray,
              classes: np.ndarray) -> np.ndarray:
    assigned = np.empty(len(universe), dtype=np.int64)
    assigned[ranking] = rank_labels
    truth = np.searchsorted(classes, universe.true_scores)
    correct = np.bincount(truth[assigned == truth], minlength=len(classes))
    return correct / np.bincount(truth, minlength=len(classes))


def rank_restaurants(scores: np.ndarray) -> np.ndarray:
    """Universe positions ordered by descending score, ties by ascending business_id."""
    return np.lexsort((np.arange(len(scores)), -np.asarray(scores)))


def sample_averages(universe: Universe, cohort: str, sample_size: int,
                    rng: np.random.Generator) -> np.ndarray:
    pool = universe.cohort_pools[cohort]
    sizes = pool.sizes
    if np.any(sizes == 0):
        raise EmptyUniverseError(f"some restaurants have an empty {cohort} pool")
    draws = rng.integers(0, sizes[:, None], size=(len(universe), sample_size))
    picked = pool.values[pool.offsets[:-1, None] + draws]
    return picked.sum(axis=1) / sample_size


def bootstrap_replicate(universe: Universe, cohort: str, sample_size: int = 20,
                        rng: np.random.Generator | None = None) -> dict[float, float]:
    """Per-class accuracy of one resampled ranking (class -> accuracy)."""
    rng = rng if rng is not None else np.random.default_rng()
    return dict(zip(universe.classes, _replicate(universe, cohort, sample_size, rng)))


def _replicate(universe, cohort, sample_size, rng) -> np.ndarray:
    labels, classes = _class_labels(universe)
    if cohort == BASELINE:
        ranking = rng.permutation(len(universe))
    else:
        ranking = rank_restaurants(sample_averages(universe, cohort, sample_size, rng))
    return _accuracy(universe, ranking, labels, classes)


@dataclass(frozen=True)
class BootstrapResult:
    cohort: str
    replicates: int
    sample_size: int
    seed: int
    classes: tuple[float, ...]
    accuracies: np.ndarray = field(repr=False)  # replicates x classes

    @property
    def accuracy_mean(self) -> dict[float, float]:
        return dict(zip(self.classes, self.accuracies.mean(axis=0).tolist()))

    @property
    def accuracy_se(self) -> dict[float, float]:
        sd = self.accuracies.std(axis=0, ddof=1)
        return dict(zip(self.classes, (sd / np.sqrt(self.replicates)).tolist()))

    def to_frame(self) -> pd.DataFrame:
        mean, se = self.accuracy_mean, self.accuracy_se
        return pd.DataFrame({
            "cohort": self.cohort,
            "category": list(self.classes),
            "accuracy_mean": [mean[c] for c in self.classes],
            "accuracy_se": [se[c] for c in self.classes],
            "R": self.replicates,
            "seed": self.seed,
        })


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def run_bootstrap(universe: Universe, cohort: str, sample_size: int = 20, replicates: int = 100,
                  seed: int = 0, workers: int | None = None) -> BootstrapResult:
    """Repeat :func:`bootstrap_replicate` and collect per-class accuracies.

    Replicate ``r`` always uses :func:`replicate_rng` ``(seed, r)``, so the
    result does not depend on ``workers``.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates for a standard error")
    if cohort != BASELINE and cohort not in universe.cohort_pools:
        raise KeyError(f"unknown cohort {cohort!r}")

    def one(r: int) -> np.ndarray:
        return _replicate(universe, cohort, sample_size, replicate_rng(seed, r))

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(one, range(replicates)))
    else:
        rows = [one(r) for r in range(replicates)]
    return BootstrapResult(cohort, replicates, sample_size, seed, universe.classes, np.vstack(rows))


def random_baseline(universe: Universe, replicates: int = 100, seed: int = 0,
                    workers: int | None = None) -> BootstrapResult:
    """Accuracy of uniformly random rankings; expected value is each class's share."""
    return run_bootstrap(universe, BASELINE, 0, replicates, seed, workers)
