"""
Unicity against population size
===============================

Subsample a population at increasing sizes, fit four functional forms to
the curve and extrapolate to larger populations.
"""

# %%
from unicity import GeneratorConfig, generate
from unicity.scaling import Form, extrapolation_table, fit_scaling, scaling_curve, schedule_for

t = generate(GeneratorConfig(users=100_000, items=50_000, seed=4))
schedule = schedule_for([10_000, 20_000, 40_000, 60_000, 80_000, 100_000], 3)

# %%
curve = scaling_curve(t, schedule, 5, "random", s=3, sample_size=2000, seed=9)
for n, m, s in zip(curve.sizes, curve.mean, curve.std):
    print(n, f"{m:.4f} +/- {s:.4f}")

# %%
# x is in millions of users.
fits = []
for form in Form:
    try:
        fits.append(fit_scaling(curve, form))
    except (ValueError, ArithmeticError) as exc:
        print(form.value, "failed:", exc)
for f in fits:
    print(f.form.value, f"a={f.a:.4f} b={f.b:.4f} gamma={f.gamma} r2={f.pseudo_r2:.3f}")

# %%
for row in extrapolation_table(fits, [0.5, 1.0, 10.0]):
    print(row)

# %%
# Forms that fit the observed range equally well can disagree a lot once
# extrapolated far outside it.
