"""Random instance generators shared by the test modules."""

import numpy as np

from fairunlearn.data import Dataset, DeletionRequest


def random_dataset(rng, n, d, all_cells=True, p_a=0.5):
    """Rows with ||x|| <= 1; with ``all_cells`` the first four rows cover every (group, label) cell."""
    X = rng.normal(size=(n, d))
    X /= np.linalg.norm(X, axis=1).max() * rng.uniform(1.0, 1.5)
    s = (rng.random(n) >= p_a).astype(int)
    y = (rng.random(n) < 0.5).astype(int)
    if all_cells:
        assert n >= 4
        s[:4] = [0, 0, 1, 1]
        y[:4] = [0, 1, 0, 1]
    return Dataset.from_arrays(X, y, s)


def random_request(rng, ds, m, keep_cells=True, keep_groups=True):
    """m random indices leaving at least one row in every (group, label) cell.

    With ``keep_cells=False`` only the two groups must stay nonempty (unless
    ``keep_groups`` is also False).
    """
    for _ in range(1000):
        idx = rng.choice(ds.n, size=m, replace=False)
        keep = np.ones(ds.n, dtype=bool)
        keep[idx] = False
        if keep_cells:
            ok = all(((ds.s[keep] == g) & (ds.y[keep] == lab)).any() for g in (0, 1) for lab in (0, 1))
        else:
            ok = not keep_groups or all((ds.s[keep] == g).any() for g in (0, 1))
        if ok:
            return DeletionRequest.from_indices(ds, idx, "random")
    raise RuntimeError("could not draw a feasible request")


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)
