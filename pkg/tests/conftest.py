"""Shared numerical test helpers."""

import numpy as np


def fd_gradients(f, arrays, h=1e-6):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. ``arrays``.

    The arrays are perturbed in place, so ``f`` must read them afresh on
    every call (graph leaves do: their ``value`` is the same array object).
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"], op_flags=["readwrite"])
        for _ in it:
            idx = it.multi_index
            orig = float(a[idx])
            a[idx] = orig + h
            fp = f()
            a[idx] = orig - h
            fm = f()
            a[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(a, b, floor=1e-8):
    """max |a-b| / max(|a|, |b|, floor) over all entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
