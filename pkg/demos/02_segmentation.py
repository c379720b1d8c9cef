"""
Deflating and inflating raters
==============================

Label experienced raters by where their mean rating sits relative to the
quartiles of all experienced raters, then compare what the two groups give.
"""

from ratingcohorts import aggregates, segmentation, synthdata

t = synthdata.generate(synthdata.SynthConfig(n_users=5000, n_restaurants=200, seed=1)).ratings
users = aggregates.user_stats(t)
seg = segmentation.segment_raters(users, min_ratings=5)

print(f"25th percentile {seg.lo_threshold:.3f}   75th percentile {seg.hi_threshold:.3f}")
print(f"eligible {seg.n_eligible}: deflating {seg.size('deflating')}, inflating {seg.size('inflating')}")

# nearest-rank and interpolated thresholds rarely differ by much
alt = segmentation.segment_raters(users, convention="nearest-rank")
print(f"nearest-rank thresholds {alt.lo_threshold:.3f} / {alt.hi_threshold:.3f}")

summary = segmentation.cohort_summary(seg, users, t)
for name in segmentation.COHORTS:
    s = summary[name]
    print(f"{name:10s} gives {s.mean_rating:.2f} on average to restaurants averaging {s.mean_restaurant_rating:.2f}")

hist = segmentation.cohort_star_histograms(seg, t)
print(hist.pivot(index="stars", columns="cohort", values="count"))
