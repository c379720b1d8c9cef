"""Synthetic rating data with known restaurant quality and rater generosity.

A user ``i`` rating restaurant ``j`` gives

    clamp(round_half_up(3 + q_j + g_i + e_ij), 1, 5)

with ``q``, ``g`` and ``e`` independent zero-mean normals whose standard
deviations are ``quality_spread``, ``generosity_spread`` and
``noise_spread``.  Each user rates a set of distinct restaurants.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ConfigError
from .ingest import RatingTable, write_reviews_csv

BASE_LEVEL = 3.0


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 10_000
    n_restaurants: int = 500
    # int for a fixed count, or ("poisson", mean) / ("uniform", lo, hi)
    ratings_per_user: int | tuple = 30
    quality_spread: float = 0.5
    generosity_spread: float = 0.7
    noise_spread: float = 0.8
    # Zipf-like exponent on restaurant popularity; 0 is uniform choice
    popularity_skew: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_users < 1 or self.n_restaurants < 1:
            raise ConfigError("n_users and n_restaurants must be at least 1")
        for name in ("quality_spread", "generosity_spread", "noise_spread", "popularity_skew"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise ConfigError(f"{name} must be a non-negative number, got {v!r}")
        rpu = self.ratings_per_user
        if isinstance(rpu, (int, np.integer)):
            if rpu < 1:
                raise ConfigError("ratings_per_user must be at least 1")
        elif not (isinstance(rpu, (tuple, list)) and rpu and rpu[0] in ("poisson", "uniform")):
            raise ConfigError(f"unsupported ratings_per_user setting {rpu!r}")


@dataclass(frozen=True)
class SynthData:
    ratings: RatingTable
    latent_quality: dict[str, float]
    latent_generosity: dict[str, float]
    config: SynthConfig

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        """Write ``reviews.csv`` (generic review format) and ``latents.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        reviews = out / "reviews.csv"
        write_reviews_csv(self.ratings.records(), reviews)
        latents = out / "latents.json"
        latents.write_text(json.dumps({
            "config": asdict(self.config),
            "base_level": BASE_LEVEL,
            "quality": self.latent_quality,
            "generosity": self.latent_generosity,
        }, indent=1, sort_keys=True) + "\n")
        return {"reviews": reviews, "latents": latents}


def _ids(prefix: str, n: int) -> list[str]:
    width = len(str(n))
    return [f"{prefix}{k:0{width}d}" for k in range(1, n + 1)]


def _counts(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    rpu = cfg.ratings_per_user
    if isinstance(rpu, (int, np.integer)):
        k = np.full(cfg.n_users, int(rpu))
    elif rpu[0] == "poisson":
        k = 1 + rng.poisson(max(float(rpu[1]) - 1, 0), cfg.n_users)
    else:
        k = rng.integers(int(rpu[1]), int(rpu[2]) + 1, cfg.n_users)
    return np.clip(k, 1, cfg.n_restaurants)


def discretize(latent_score: np.ndarray) -> np.ndarray:
    """Round half up onto the 1..5 star grid."""
    return np.clip(np.floor(latent_score + 0.5), 1, 5).astype(np.int8)


def generate(config: SynthConfig | None = None) -> SynthData:
    """Draw one dataset.  Output rows are sorted by (user_id, business_id)."""
    cfg = config or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    q = rng.normal(0.0, cfg.quality_spread, cfg.n_restaurants) if cfg.quality_spread else np.zeros(cfg.n_restaurants)
    g = rng.normal(0.0, cfg.generosity_spread, cfg.n_users) if cfg.generosity_spread else np.zeros(cfg.n_users)
    k = _counts(cfg, rng)

    if cfg.popularity_skew > 0:
        w = 1.0 / np.arange(1, cfg.n_restaurants + 1) ** cfg.popularity_skew
        w = rng.permutation(w / w.sum())
    else:
        w = None
    users, items = [], []
    for i in range(cfg.n_users):
        if w is None:
            chosen = rng.permutation(cfg.n_restaurants)[:k[i]]
        else:
            chosen = rng.choice(cfg.n_restaurants, size=k[i], replace=False, p=w)
        chosen.sort()
        users.append(np.full(k[i], i))
        items.append(chosen)
    u = np.concatenate(users)
    b = np.concatenate(items)
    eps = rng.normal(0.0, cfg.noise_spread, len(u)) if cfg.noise_spread else np.zeros(len(u))
    stars = discretize(BASE_LEVEL + q[b] + g[u] + eps)

    user_ids = np.array(_ids("u", cfg.n_users), dtype=object)
    business_ids = np.array(_ids("r", cfg.n_restaurants), dtype=object)
    table = RatingTable.from_columns(user_ids[u], business_ids[b], stars)
    return SynthData(
        table,
        {bid: float(v) for bid, v in zip(business_ids, q)},
        {uid: float(v) for uid, v in zip(user_ids, g)},
        cfg,
    )


def expected_stars(mu: np.ndarray, noise_spread: float) -> np.ndarray:
    """E[stars] given the latent location ``3 + q + g`` (before noise).

    Exact under the generative model: sums each star value times the normal
    probability mass that discretizes to it.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if noise_spread == 0:
        return discretize(mu).astype(np.float64)
    cuts = np.array([1.5, 2.5, 3.5, 4.5])
    cdf = stats.norm.cdf((cuts[None, :] - mu[..., None]) / noise_spread)
    # P(stars >= s) for s = 2..5 is 1 - cdf at the cut below s
    return 1.0 + np.sum(1.0 - cdf, axis=-1)
