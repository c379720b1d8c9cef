"""
Rating-level and restaurant-level regressions
=============================================

Explain each rating by the rater's and the restaurant's normalized mean,
then regress each restaurant's raters' average on the restaurant's own mean.
"""

from ratingcohorts import aggregates, regression, synthdata

t = synthdata.generate(synthdata.SynthConfig(seed=3)).ratings
users, biz = aggregates.user_stats(t), aggregates.business_stats(t)
moments = aggregates.population_moments(users, biz)
print(moments)

fit = regression.rating_level_regression(t, users, biz, moments)
print(fit.to_markdown("Rating-level regression"))

# including a rating in its own rater's mean flatters the fit a little
loo = regression.rating_level_regression(t, users, biz, moments, leave_one_out=True)
print(f"leave-one-out: b1 {loo.coefficients[1]:.4f} (was {fit.coefficients[1]:.4f}), "
      f"R2 {loo.r_squared:.3f} (was {fit.r_squared:.3f})")

rest = regression.restaurant_level_regression(t, users, biz, min_count=200, max_count=2000)
print(f"restaurant level: slope {rest.slope:.3f}, R2 {rest.fit.r_squared:.3f}, "
      f"{rest.fit.n_obs} restaurants")
print(rest.scatter_frame().head())
