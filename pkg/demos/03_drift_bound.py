# %% [markdown]
# # How far can fairness drift?
#
# If the unlearned parameters lie within kappa of the retrained ones, the
# decision boundary can only tilt by a bounded angle. Converting that angle
# into a band of the unit ball, and the band into a probability mass,
# bounds how much the equalized-odds gap can move.

# %%
import numpy as np

from fairunlearn import certify

for d in (2, 5, 10, 20):
    V = certify.ball_volume(d)
    print(f"d={d:>2}: V={V:.4f}  cap(0)={certify.cap_integral(0.0, d):.4f}  "
          f"cap(0.3)/V={certify.cap_integral(0.3, d) / V:.4f}")

# %% [markdown]
# Slack as kappa grows, for a model with norm 2 in 10 dimensions and the
# default concentration constant c = 2.

# %%
for kappa in np.linspace(0.0, 1.5, 7):
    b = certify.aeod_drift_bound(baseline=0.05, kappa=float(kappa), theta_norm=2.0, d=10)
    print(f"kappa={kappa:.2f}  phi={b.phi:.3f}  mu={b.mu:.3f}  slack={b.slack:.4f}  bound={b.bound:.4f}")

# %% [markdown]
# Plugging in the data-independent parameter distance from a real removal
# shows how conservative the chain is: kappa is usually far above the
# measured distance.

# %%
from fairunlearn import metrics
from fairunlearn.data import SynthConfig, sample_deletions, split, synth_generate
from fairunlearn.fairloss import LossConfig
from fairunlearn.trainer import train
from fairunlearn.unlearner import build_cache, unlearn

ds = synth_generate(SynthConfig(n=20000, d=8, p_a=0.3, mean_shift=2.0, offset_a=1.0, seed=3))
tr, te = split(ds, 0.2, seed=0, notion="equalized_odds")
cfg = LossConfig(lam=1e-1, gamma=1.0)
model = train(tr, cfg)
req = sample_deletions(tr, "random", 0.0005, seed=0)
u = unlearn(model, tr, req, build_cache(model, tr))
retrained = train(tr.remove(req.indices), cfg)
kappa = certify.param_distance_bound(tr.n, req.m, req.m_a, req.m_b, tr.n_a, tr.n_b,
                                     cfg.lam, cfg.psi, cfg.g, float(np.linalg.norm(model.theta)))
measured = float(np.linalg.norm(u.theta - retrained.theta))
base = metrics.aeod(metrics.group_rates(retrained.theta, te))
print(f"kappa bound {kappa:.3e} vs measured distance {measured:.3e}")
try:
    b = certify.aeod_drift_bound(base, kappa, float(np.linalg.norm(retrained.theta)), tr.d)
    print(f"AEOD retrained {base:.4f}, bound on unlearned AEOD {b.bound:.4f}")
except ValueError as exc:
    print(f"bound not applicable: {exc}")
print(f"actual unlearned AEOD {metrics.aeod(metrics.group_rates(u.theta, te)):.4f}")
