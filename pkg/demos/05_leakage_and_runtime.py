# %% [markdown]
# # Noise, leakage and speed
#
# More noise buys a smaller epsilon at a cost in accuracy. Past the point
# where the perturbation dominates the fitted parameters, the residual
# bound itself grows and epsilon climbs again.

# %%
from fairunlearn import bench
from fairunlearn.data import SynthConfig, split, synth_generate
from fairunlearn.fairloss import LossConfig

ds = synth_generate(SynthConfig(n=5000, d=10, p_a=0.3, mean_shift=2.0, offset_a=1.0, seed=0))
tr, te = split(ds, 0.2, seed=0)
cfg = LossConfig(lam=1e-3, gamma=1.0)
for row in bench.leakage_sweep(tr, cfg, [0.01, 0.1, 1.0, 10.0, 100.0], delta=1e-4, m=100, test=te):
    print(f"sigma={row['sigma']:>7}  eps'={row['eps_prime']:.3e} ({row['binding']})  "
          f"epsilon={row['epsilon']:.4g}  accuracy={row['accuracy']:.3f}")

# %% [markdown]
# Runtime: one cache build, then each request is a small linear solve plus
# an O(n d) residual check, against a full Newton retraining.

# %%
big = synth_generate(SynthConfig(n=100_000, d=20, seed=0))
for row in bench.timing(big, cfg, [1, 10, 100, 1000]):
    print(f"m={row['m']:>5}  unlearn {row['time_unlearn'] * 1e3:7.2f} ms  "
          f"retrain {row['time_retrain'] * 1e3:7.1f} ms  speedup {row['speedup']:5.1f}x  "
          f"(cache build {row['time_precompute'] * 1e3:.1f} ms)")
