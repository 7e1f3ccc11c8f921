"""Pure-Python (numpy) fallback for the jet arithmetic kernels.

Same call signatures as the compiled ``_kernels`` module. The pair tables are
in CSR layout: for output slot ``k`` the contributing pairs are
``I[ptr[k]:ptr[k+1]]`` (index into the first factor) and ``J[...]`` (index into
the second factor). The first pair of every row is ``(0, k)``.
"""

import numpy as np


def _row_ids(ptr):
    return np.repeat(np.arange(ptr.shape[0] - 1), np.diff(ptr))


def mul(a, b, ptr, I, J):
    n = ptr.shape[0] - 1
    return np.bincount(_row_ids(ptr), weights=a[I] * b[J], minlength=n)


def div(a, b, ptr, I, J, blocks):
    """Solve ``b * q = a`` for the truncated series ``q``.

    ``blocks`` lists, per total degree, ``(start, stop, rows, ii, jj)`` where
    ``rows/ii/jj`` are the non-leading pairs of the rows in ``start:stop``.
    """
    q = np.empty_like(a)
    b0 = b[0]
    for start, stop, rows, ii, jj in blocks:
        acc = np.bincount(rows, weights=b[ii] * q[jj], minlength=stop - start)
        q[start:stop] = (a[start:stop] - acc) / b0
    return q


def horner(c, h, ptr, I, J):
    """Evaluate ``sum_k c[k] * h**k`` in truncated arithmetic."""
    out = np.zeros_like(h)
    out[0] = c[-1]
    for ck in c[-2::-1]:
        out = mul(out, h, ptr, I, J)
        out[0] += ck
    return out
