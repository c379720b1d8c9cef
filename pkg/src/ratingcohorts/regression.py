"""Ordinary least squares and the two rating regressions built on it.

The solver factorizes the design with Householder QR and never forms the
normal equations.  Standard errors are the classical homoskedastic ones.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats
from scipy.linalg import solve_triangular

from .aggregates import BusinessStatsTable, PopulationMoments, UserStatsTable, as_table, normalize
from .errors import InsufficientDataError, SingularDesignError

# relative size of a QR pivot below which a column counts as dependent
RANK_TOL = 1e-10


@dataclass(frozen=True)
class RegressionFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    r_squared: float
    adj_r_squared: float
    f_value: float
    f_p_value: float
    df_residual: int
    df_model: int
    n_obs: int
    names: tuple[str, ...] = ()
    residual_orthogonality: float = field(default=0.0, repr=False)

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def to_dict(self) -> dict:
        return {
            "coefficients": [
                {"name": name, "coefficient": float(c), "std_error": float(se),
                 "t_value": float(t), "p_value": float(p)}
                for name, c, se, t, p in zip(self.names, self.coefficients, self.std_errors,
                                             self.t_values, self.p_values)
            ],
            "r_squared": self.r_squared,
            "adj_r_squared": self.adj_r_squared,
            "f_value": self.f_value,
            "f_p_value": self.f_p_value,
            "df_residual": self.df_residual,
            "df_model": self.df_model,
            "n_obs": self.n_obs,
        }

    def to_markdown(self, title: str = "") -> str:
        lines = [f"**{title}**", ""] if title else []
        lines += ["| | Coefficient | Stand. error | t-value | p-value |", "|---|---|---|---|---|"]
        for name, c, se, t, p in zip(self.names, self.coefficients, self.std_errors,
                                     self.t_values, self.p_values):
            lines.append(f"| {name} | {c:.4f} | {se:.3f} | {t:.3f} | {p:.3f} |")
        lines += [
            "",
            "| Statistic | Value |",
            "|---|---|",
            f"| R² | {self.r_squared:.3f} |",
            f"| Adj. R² | {self.adj_r_squared:.3f} |",
            f"| F-value | {self.f_value:.3e} |",
            f"| p-value | {self.f_p_value:.3f} |",
            f"| df residuals | {self.df_residual} |",
            f"| df model | {self.df_model} |",
        ]
        return "\n".join(lines) + "\n"


def _two_sided_p(t: np.ndarray, df: int) -> np.ndarray:
    t = np.abs(t)
    if df > 10_000:
        return 2.0 * stats.norm.sf(t)
    return 2.0 * stats.t.sf(t, df)


def ols_fit(design, response, names: Sequence[str] | None = None, *,
            allow_exact: bool = False) -> RegressionFit:
    """Least-squares fit of ``response`` on ``design``.

    ``design`` is n-by-k and must already contain the intercept column, which
    is assumed to be column 0 for the R² and F statistics.  Raises
    :class:`InsufficientDataError` when n <= k and
    :class:`SingularDesignError` when a column is (numerically) a linear
    combination of the columns before it.  ``allow_exact`` admits n == k,
    an interpolating fit whose standard errors are undefined (NaN).
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: design {X.shape}, response {y.shape}")
    n, k = X.shape
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(k))
    if len(names) != k:
        raise ValueError("one name per design column required")
    if n < k or (n == k and not allow_exact):
        raise InsufficientDataError(f"{n} observations for {k} coefficients")

    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    col_norms = np.linalg.norm(X, axis=0)
    for j in range(k):
        if col_norms[j] == 0 or diag[j] <= RANK_TOL * col_norms[j]:
            raise SingularDesignError(names[j])

    qty = Q.T @ y
    beta = _solve_upper(R, qty)
    resid = y - X @ beta
    sse = float(resid @ resid)
    df_resid = n - k
    df_model = k - 1
    sigma2 = sse / df_resid if df_resid else math.nan

    # diag((R^T R)^{-1}) = row norms of R^{-1}
    R_inv = _solve_upper(R, np.eye(k))
    se = np.sqrt(sigma2 * np.sum(R_inv * R_inv, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    t = np.where(se == 0, np.where(beta == 0, np.nan, np.copysign(np.inf, beta)), t)
    p = _two_sided_p(t, df_resid)

    centered = y - y.mean()
    sst = float(centered @ centered)
    if sst > 0:
        r2 = max(0.0, 1.0 - sse / sst)
    else:
        r2 = 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid if df_resid else math.nan
    ssm = max(sst - sse, 0.0)
    if df_model == 0 or df_resid == 0:
        f, fp = math.nan, math.nan
    elif sse > 0:
        f = (ssm / df_model) / sigma2
        fp = float(stats.f.sf(f, df_model, df_resid))
    else:
        f, fp = (math.inf, 0.0) if ssm > 0 else (math.nan, math.nan)

    ortho = float(np.max(np.abs(X.T @ resid)) / n)
    return RegressionFit(beta, se, t, p, r2, adj, f, fp, df_resid, df_model, n, names, ortho)


def _solve_upper(R: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_triangular(R, b, lower=False)


def rating_level_design(ratings, users: UserStatsTable, businesses: BusinessStatsTable,
                        moments: PopulationMoments, leave_one_out: bool = False):
    """Response and design for y_ij ~ 1 + user_mean_norm + restaurant_mean_norm.

    With ``leave_one_out`` the user mean omits the rating being explained;
    users with a single rating then have no defined mean and are dropped.
    """
    t = as_table(ratings)
    urows = users.rows_for(t.user_ids)[t.user_codes]
    brows = businesses.rows_for(t.business_ids)[t.business_codes]
    y = t.stars.astype(np.float64)
    x1 = users.means[urows]
    if leave_one_out:
        n = users.counts[urows]
        keep = n > 1
        x1 = (x1[keep] * n[keep] - y[keep]) / (n[keep] - 1)
        y = y[keep]
        brows = brows[keep]
    x1n = normalize(x1, moments.mu_u, moments.sigma_u)
    x2n = normalize(businesses.means[brows], moments.mu_r, moments.sigma_r)
    X = np.column_stack([np.ones_like(y), x1n, x2n])
    return X, y


RATING_LEVEL_NAMES = ("Intercept", "Average normalized user rating", "Average normalized restaurant rating")


def rating_level_regression(ratings, users: UserStatsTable, businesses: BusinessStatsTable,
                            moments: PopulationMoments, leave_one_out: bool = False) -> RegressionFit:
    """Regress every individual rating on its author's and its restaurant's normalized means."""
    X, y = rating_level_design(ratings, users, businesses, moments, leave_one_out)
    return ols_fit(X, y, RATING_LEVEL_NAMES)


@dataclass(frozen=True)
class RestaurantRegression:
    fit: RegressionFit
    business_ids: np.ndarray
    restaurant_mean: np.ndarray
    rater_mean: np.ndarray

    @property
    def intercept(self) -> float:
        return float(self.fit.coefficients[0])

    @property
    def slope(self) -> float:
        return float(self.fit.coefficients[1])

    def scatter_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"business_id": self.business_ids, "x2": self.restaurant_mean,
                             "y": self.rater_mean})


def distinct_pairs(t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse repeat (user, business) ratings to one row holding their mean stars.

    Returns ``(user_codes, business_codes, mean_stars)`` sorted by business
    code, then user code.
    """
    key = t.business_codes.astype(np.int64) * max(t.n_users, 1) + t.user_codes
    uniq, inv = np.unique(key, return_inverse=True)
    counts = np.bincount(inv)
    sums = np.bincount(inv, weights=t.stars)
    return uniq % max(t.n_users, 1), uniq // max(t.n_users, 1), sums / counts


def restaurant_level_regression(ratings, users: UserStatsTable, businesses: BusinessStatsTable,
                                min_count: int = 200, max_count: int = 2000) -> RestaurantRegression:
    """Regress the average rater generosity of each restaurant on its own mean rating.

    For restaurants with ``min_count <= n <= max_count`` ratings the
    response is the mean, over distinct users who rated the restaurant, of
    those users' overall mean ratings.
    """
    t = as_table(ratings)
    ucodes, bcodes, _ = distinct_pairs(t)
    urows = users.rows_for(t.user_ids)
    brows = businesses.rows_for(t.business_ids)
    x1 = users.means[urows][ucodes]
    rater_sum = np.bincount(bcodes, weights=x1, minlength=t.n_businesses)
    rater_n = np.bincount(bcodes, minlength=t.n_businesses)

    n_j = businesses.counts[brows]
    qualifying = (n_j >= min_count) & (n_j <= max_count) & (rater_n > 0)
    if np.count_nonzero(qualifying) < 2:
        raise InsufficientDataError(
            f"need at least 2 restaurants with {min_count}..{max_count} ratings, "
            f"found {np.count_nonzero(qualifying)}")
    idx = np.flatnonzero(qualifying)
    x2 = businesses.means[brows][idx]
    y = rater_sum[idx] / rater_n[idx]
    X = np.column_stack([np.ones_like(x2), x2])
    fit = ols_fit(X, y, ("Intercept", "Average restaurant rating"), allow_exact=True)
    return RestaurantRegression(fit, t.business_ids[idx], x2, y)
