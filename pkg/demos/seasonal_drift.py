"""
Unicity across periods
======================

Twelve monthly periods with churn. Per-period unicity, the rescaled
series, and how much fingerprints drift from month to month.
"""

# %%
from unicity import GeneratorConfig, generate, seasonal_curves
from unicity.temporal import jaccard_drift, usage_stats

t = generate(GeneratorConfig(users=10_000, items=30_000, periods=12, churn=0.25, seed=3))

# %%
for row in usage_stats(t)[:3]:
    print(row)

# %%
curve = seasonal_curves(t, [3], "popularity", s=3, sample_size=2000, seed=5)[0]
for row in curve.rows():
    print(row["period"], f"{row['u']:.3f}", row["n_items"], f"{row['u_rescaled']:.3f}")

# %%
# Jaccard distance between consecutive months and against the first month.
for mode in ("consecutive", "baseline"):
    s = jaccard_drift(t, mode)
    print(mode, [round(r["mean"], 3) for r in s.summaries])

# %%
# With a constant churn the consecutive drift stays flat while the distance
# to month 0 keeps growing.
