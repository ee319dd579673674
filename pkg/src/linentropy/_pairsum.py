"""Compiled pair-sum loops for the stock kernels.

Input is sorted ascending.  Row ``i`` accumulates ``K((x_j - x_i)/h)`` for
``j = i+1, i+2, ...`` with Neumaier compensation and stops at the first ``j``
past the kernel cutoff; the caller reduces row sums with ``math.fsum``.  The
order depends only on the sorted values, so results are independent of the
input permutation and of any threading around the call.
"""

import math

import numpy as np
from numba import njit

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True, nogil=True)
def _kval(code, u):
    if code == 0:
        return math.exp(-0.5 * u * u) * _INV_SQRT_2PI
    if code == 1:
        return 0.75 * (1.0 - u * u) if u <= 1.0 else 0.0
    if code == 2:
        return 1.0 - u if u <= 1.0 else 0.0
    if code == 3:
        return 0.5 if u <= 1.0 else 0.0
    if code == 4:
        return 0.5 * (3.0 - u * u) * math.exp(-0.5 * u * u) * _INV_SQRT_2PI
    return math.nan


@njit(cache=True, nogil=True)
def sorted_row_sums(xs, h, code, cutoff):
    n = xs.shape[0]
    rows = np.zeros(n)
    for i in range(n - 1):
        s = 0.0
        c = 0.0
        xi = xs[i]
        for j in range(i + 1, n):
            u = (xs[j] - xi) / h
            if u > cutoff:
                break
            k = _kval(code, u)
            t = s + k
            if abs(s) >= abs(k):
                c += (s - t) + k
            else:
                c += (k - t) + s
            s = t
        rows[i] = s + c
    return rows
