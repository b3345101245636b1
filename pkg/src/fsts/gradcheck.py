"""Central finite-difference gradient oracle used by the tests and ``fsts verify``."""

import numpy as np


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place one entry at a time."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric) -> float:
    """Largest absolute discrepancy scaled by the largest gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def near_kink(f, x: np.ndarray, h: float = 1e-5, rtol: float = 1e-7) -> bool:
    """True when central differences at ``h`` and ``h / 2`` disagree.

    Smooth functions agree to O(h^2); a ReLU or max-pool switch within ``h`` of
    ``x`` does not.  Uses only ``f``, never the analytic gradient, so rejecting
    such points cannot favour a wrong backward pass.
    """
    g1, g2 = numeric_grad(f, x, h), numeric_grad(f, x, h / 2)
    scale = max(1.0, float(np.abs(g1).max(initial=0.0)))
    return bool(np.abs(g1 - g2).max(initial=0.0) > rtol * scale)
