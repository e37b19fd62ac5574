"""Pfaffians of antisymmetric matrices.

Three independent evaluations are provided:

* ``pfaffian_recursive``: first-row expansion memoized on column subsets,
  exact up to floating-point rounding and free of pivoting decisions.
* ``pfaffian_elimination``: Parlett-Reid style elimination, O(n^3).
* ``pfaffian_pairings``: explicit sum over perfect matchings with the sign of
  each matching, used as an oracle for small n.
"""

from functools import lru_cache

import numpy as np

from grasq import kernels


class AntisymmetryError(ValueError):
    """Raised when a matrix is not antisymmetric within tolerance."""


def check_antisymmetric(m, tol=1e-12):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise AntisymmetryError(f"square matrix expected, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    err = float(np.max(np.abs(m + m.T))) if m.size else 0.0
    if err > tol * scale:
        raise AntisymmetryError(f"matrix is not antisymmetric (||M + M^T||_max = {err:.3e})")
    return m


def pfaffian_recursive(m):
    """Pf(M) by expansion along the first remaining row, memoized on subsets.

    Cost O(2^n n); intended for n up to about 24.
    """
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    if n % 2:
        return 0j
    if n == 0:
        return 1.0 + 0j
    rows = [list(r) for r in m]

    @lru_cache(maxsize=None)
    def pf(mask):
        if mask == 0:
            return 1.0 + 0j
        low = mask & -mask
        i = low.bit_length() - 1
        rest = mask ^ low
        total = 0j
        sign = 1
        mm = rest
        while mm:
            lj = mm & -mm
            j = lj.bit_length() - 1
            a = rows[i][j]
            if a != 0:
                total += sign * a * pf(rest ^ lj)
            sign = -sign
            mm ^= lj
        return total

    return complex(pf((1 << n) - 1))


def pfaffian_elimination(m):
    """Pf(M) by Gaussian elimination with pivoting (compiled when available)."""
    return complex(kernels.pfaffian_elim(np.asarray(m, dtype=complex)))


def pfaffian_pairings(m):
    """Pf(M) as the signed sum over all perfect matchings of 0..n-1."""
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    if n % 2:
        return 0j

    def rec(items):
        if not items:
            return 1.0 + 0j
        i = items[0]
        total = 0j
        for pos in range(1, len(items)):
            j = items[pos]
            rest = items[1:pos] + items[pos + 1:]
            # moving j next to i crosses pos - 1 elements
            sign = -1 if (pos - 1) % 2 else 1
            total += sign * m[i, j] * rec(rest)
        return total

    return complex(rec(list(range(n))))


def pfaffian(m, method="auto", tol=1e-12):
    """Pfaffian of an antisymmetric matrix; 0 in odd dimension.

    ``method`` is ``"recursive"``, ``"elimination"``, ``"pairings"`` or
    ``"auto"`` (recursion up to 12 rows, elimination beyond).
    """
    m = check_antisymmetric(np.asarray(m, dtype=complex), tol)
    n = m.shape[0]
    if n % 2:
        return 0j
    if method == "auto":
        method = "recursive" if n <= 12 else "elimination"
    if method == "recursive":
        return pfaffian_recursive(m)
    if method == "elimination":
        return pfaffian_elimination(m)
    if method == "pairings":
        return pfaffian_pairings(m)
    raise ValueError(f"unknown Pfaffian method {method!r}")
