"""
Fingerprints and unicity
========================

How unique are app fingerprints? Build a small synthetic population, look
at a few users, then estimate unicity for the random and popularity
strategies.
"""

# %%
import numpy as np

from unicity import GeneratorConfig, generate, unicity_curve, window_fingerprint

t = generate(GeneratorConfig(users=20_000, items=30_000, alpha=1.5, mean_items=23, seed=1))
print(t)

# %%
# A fingerprint is just the set of items a user touched in the window.
for u in t.user_ids[:3]:
    fp = window_fingerprint(t, u)
    print(u, len(fp.items), fp.items[:8])

# %%
# Item popularity is heavy tailed: a few items are everywhere, most are rare.
pop = t.popularity()
order = np.argsort(pop.counts)[::-1]
print("top counts", pop.counts[order[:5]])
print("items used once", int((pop.counts == 1).sum()))

# %%
# Unicity for n = 1..6 under both strategies.
ns = range(1, 7)
for strategy in ("random", "popularity"):
    curve = unicity_curve(t, None, ns, strategy, s=5, sample_size=2000, seed=7)
    print(f"{strategy:>10}", " ".join(f"{e.mean:.3f}" for e in curve))

# %%
# Picking the rarest items first identifies most users with very few of them.
