# %% [markdown]
# # The fairness penalty, factored and literal
#
# The penalty averages products of logit gaps over every pair of
# cross-group pairs, which is quartic in n if evaluated literally. Because
# each pair contributes linearly in theta, the whole thing collapses to
# one direction vector built from per-(group, label) counts and sums.
# This script checks the two agree and shows how the three notions differ.

# %%
import numpy as np

from fairunlearn import fairloss
from fairunlearn.data import Dataset

rng = np.random.default_rng(0)
X = rng.normal(size=(9, 3))
X /= np.linalg.norm(X, axis=1).max()
y = np.array([0, 1, 0, 1, 1, 0, 1, 0, 1])
s = np.array([0, 0, 0, 0, 1, 1, 1, 1, 1])
ds = Dataset.from_arrays(X, y, s)
theta = rng.normal(size=3)
print("cell counts [group, label]:\n", ds.counts)

# %% [markdown]
# Factored form (v . theta)^2 against the literal average over all tuples.

# %%
for notion in fairloss.NOTIONS:
    v = fairloss.fair_direction(ds, notion)
    fast = float(v @ theta) ** 2
    slow = fairloss.brute_force_fair(theta, ds, notion)
    print(f"{notion:>24}: factored {fast:.12f}  literal {slow:.12f}")

# %% [markdown]
# The pair weights say which label combinations are compared: matching
# labels only, every pair, or positive pairs only.

# %%
for notion, W in fairloss.PAIR_WEIGHTS.items():
    print(notion, W.tolist())

# %% [markdown]
# Raising gamma pulls the fitted logits of the two groups together along v.

# %%
from fairunlearn.data import SynthConfig, synth_generate
from fairunlearn.fairloss import LossConfig
from fairunlearn.trainer import train

big = synth_generate(SynthConfig(n=1500, d=6, p_a=0.25, mean_shift=2.5, offset_a=1.0, seed=1))
v = fairloss.fair_direction(big)
for gamma in (0.0, 0.1, 1.0, 10.0):
    model = train(big, LossConfig(lam=1e-3, gamma=gamma))
    print(f"gamma={gamma:>5}: |v . theta| = {abs(v @ model.theta):.5f}")
