"""Hot inner loops with a numba path and a pure-numpy fallback.

The numba versions are used when numba imports cleanly and the environment
variable ``SGCN_NUMBA`` is not set to ``0``/``false``/``off``.  Both paths
produce identical results up to floating-point summation order (the numba
scatter accumulates edges in index order, as does ``np.add.at``).
"""
import os

import numpy as np

_FLAG = os.environ.get("SGCN_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "off", "no")

try:
    if not _WANT_NUMBA:
        raise ImportError("disabled by SGCN_NUMBA")
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def scatter_add_rows_numpy(values, index, n_rows):
    """Sum rows of ``values`` into ``n_rows`` buckets given by ``index``."""
    out = np.zeros((n_rows,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, index, values)
    return out


def count_inversions_numpy(seq):
    seq = np.asarray(seq)
    if seq.size < 2:
        return 0
    # pairs i < j with seq[i] > seq[j]
    upper = np.triu(seq[:, None] > seq[None, :], k=1)
    return int(upper.sum())


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _scatter_add_2d(values, index, out):
        n_edges, width = values.shape
        for e in range(n_edges):
            row = index[e]
            for j in range(width):
                out[row, j] += values[e, j]
        return out

    @numba.njit(cache=True)
    def _count_inversions(seq):
        n = seq.shape[0]
        total = 0
        for i in range(n):
            for j in range(i + 1, n):
                if seq[i] > seq[j]:
                    total += 1
        return total

    def scatter_add_rows_numba(values, index, n_rows):
        values = np.ascontiguousarray(values)
        flat = values.reshape(values.shape[0], -1)
        out = np.zeros((n_rows, flat.shape[1]), dtype=values.dtype)
        _scatter_add_2d(flat, np.ascontiguousarray(index, dtype=np.int64), out)
        return out.reshape((n_rows,) + values.shape[1:])

    def count_inversions_numba(seq):
        seq = np.ascontiguousarray(seq, dtype=np.int64)
        return int(_count_inversions(seq))

    scatter_add_rows = scatter_add_rows_numba
    count_inversions = count_inversions_numba
else:
    scatter_add_rows_numba = None
    count_inversions_numba = None
    scatter_add_rows = scatter_add_rows_numpy
    count_inversions = count_inversions_numpy


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
