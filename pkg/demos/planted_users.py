"""
Planted unique users
====================

Give a handful of users a private item and check that the popularity
strategy finds every one of them with a single item.
"""

# %%
import numpy as np

from unicity import GeneratorConfig, estimate_unicity, generate, plant_unique_users

base = generate(GeneratorConfig(users=5000, items=40_000, seed=2))
t, planted = plant_unique_users(base, 25, seed=3)
print(planted[:5])

# %%
est = estimate_unicity(t, None, 1, "popularity", s=1, sample_size=25, users=np.array(planted))
print("planted users unique at n=1:", est.mean)

# %%
# Items shared by three planted users are not enough on their own.
t3, planted3 = plant_unique_users(base, 30, rarity=3, seed=3)
for n in (1, 2, 3):
    e = estimate_unicity(t3, None, n, "popularity", s=1, sample_size=30, users=np.array(planted3))
    print(n, e.mean)
