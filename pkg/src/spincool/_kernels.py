"""Hot-loop application of the coupled Hamiltonian to column blocks.

The joint operator is a diagonal plus a handful of XOR-mask flip terms
(bath bonds and system-bath couplings), so its action is a single fused
pass over the block. A numba kernel provides that pass when numba is
importable; otherwise callers fall back to sparse matrices. Rows are
independent in the parallel loop, so results do not depend on the thread
count.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @numba.njit(parallel=True, fastmath=True, cache=True)
    def _apply_masked_terms(diag, masks, coeffs, x, y):
        dim, c = x.shape
        nterms = masks.size
        for i in numba.prange(dim):
            d = diag[i]
            for k in range(c):
                y[i, k] = d * x[i, k]
            for t in range(nterms):
                j = i ^ masks[t]
                cf = coeffs[t]
                for k in range(c):
                    y[i, k] += cf * x[j, k]

    @numba.njit(parallel=True, fastmath=True, cache=True)
    def _add_vector_coeff_term(mask, coeff, x, y):
        dim, c = x.shape
        for i in numba.prange(dim):
            j = i ^ mask
            cf = coeff[i]
            for k in range(c):
                y[i, k] += cf * x[j, k]


def masked_action(diag, masks, coeffs, vector_terms):
    """Build mv(x) applying diag + sum of flip terms; x may be 1-D or a block.

    vector_terms is a list of (mask, coefficient_vector) entries whose
    amplitude depends on the basis index (the combined XX+YY coupling).
    Returns None when numba is unavailable.
    """
    if not HAVE_NUMBA:
        return None
    diag = np.ascontiguousarray(diag, dtype=np.complex128)
    masks = np.ascontiguousarray(masks, dtype=np.int64)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    vec = [
        (np.int64(m), np.ascontiguousarray(v, dtype=np.complex128))
        for m, v in vector_terms
    ]

    def mv(x):
        flat = x.ndim == 1
        block = x[:, None] if flat else x
        block = np.ascontiguousarray(block)
        out = np.empty_like(block)
        _apply_masked_terms(diag, masks, coeffs, block, out)
        for mask, cvec in vec:
            _add_vector_coeff_term(mask, cvec, block, out)
        return out[:, 0] if flat else out

    return mv
