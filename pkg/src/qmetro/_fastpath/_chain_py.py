"""Pure-numpy sequential chain kernel.

This loop is small-matrix and call-overhead bound, which is why a compiled
twin exists; results agree up to BLAS rounding.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def chain_apply(qs: np.ndarray, v0: np.ndarray) -> np.ndarray:
    """Trajectory of v_{j+1} = Q_j v_j.

    qs has shape (n_steps, m, m); returns (n_steps + 1, m) with row 0 = v0.
    """
    qs = np.asarray(qs, dtype=complex)
    v = np.asarray(v0, dtype=complex).reshape(-1)
    ns, m, m2 = qs.shape
    if m != m2 or v.size != m:
        raise ValueError("chain_apply shape mismatch")
    out = np.empty((ns + 1, m), dtype=complex)
    out[0] = v
    for j in range(ns):
        v = qs[j] @ v
        out[j + 1] = v
    return out
