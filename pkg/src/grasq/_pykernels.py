"""Pure-Python reference implementations of the hot kernels.

Masks are Python ints (bit i set means generator i is present), so these
routines work for any number of generators.  The compiled module
``grasq._ckernels`` exposes the same functions with identical semantics.
"""

import numpy as np


def prefix_parity(mask):
    """Mask whose bit i is the parity of #{j in mask : j < i}.

    Uses Python's infinite two's complement: the result may be negative,
    but ``a & prefix_parity(b)`` is a plain non-negative mask for a >= 0.
    """
    out = 0
    m = mask
    while m:
        low = m & -m
        out ^= -(low << 1)
        m ^= low
    return out


def merge_sign(a, b):
    """Sign of v_a ^ v_b relative to v_{a|b}; 0 if the masks overlap."""
    if a & b:
        return 0
    return -1 if _parity_above(a, b) else 1


def _parity_above(a, b):
    # parity of #{(i in a, j in b) : i > j}
    count = 0
    m = b
    while m:
        low = m & -m
        j = low.bit_length() - 1
        count += (a >> (j + 1)).bit_count()
        m ^= low
    return count & 1


def wedge(ta, tb, max_degree=-1):
    """Product of two sparse elements given as {mask: coeff} dicts."""
    out = {}
    if not ta or not tb:
        return out
    limit = max_degree if max_degree >= 0 else None
    bterms = [(mb, cb, mb.bit_count(), prefix_parity(mb)) for mb, cb in tb.items()]
    for ma, ca in ta.items():
        da = ma.bit_count()
        for mb, cb, db, pb in bterms:
            if ma & mb:
                continue
            if limit is not None and da + db > limit:
                continue
            c = ca * cb
            if (ma & pb).bit_count() & 1:
                c = -c
            m = ma | mb
            out[m] = out.get(m, 0.0) + c
    return {m: c for m, c in sorted(out.items()) if c != 0}


def bit_indices(mask):
    idx = []
    m = mask
    while m:
        low = m & -m
        idx.append(low.bit_length() - 1)
        m ^= low
    return idx


def pfaffian(a):
    """Pfaffian by Gaussian elimination with pivoting (Parlett-Reid style).

    ``a`` is copied; it must be antisymmetric.
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    if n % 2:
        return 0.0 + 0.0j
    pf = 1.0 + 0.0j
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(a[k + 1:, k])))
        if kp != k + 1:
            a[[k + 1, kp], :] = a[[kp, k + 1], :]
            a[:, [k + 1, kp]] = a[:, [kp, k + 1]]
            pf = -pf
        piv = a[k, k + 1]
        if piv == 0:
            return 0.0 + 0.0j
        pf *= piv
        if k + 2 < n:
            tau = a[k, k + 2:] / piv
            col = a[k + 2:, k + 1].copy()
            a[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return complex(pf)


def wick_eval(terms, sigma):
    """Sum of coeff * Pf(sigma[A, A]) over the terms of an element."""
    sigma = np.asarray(sigma, dtype=complex)
    total = 0.0 + 0.0j
    for mask, c in terms.items():
        deg = mask.bit_count()
        if deg == 0:
            total += c
            continue
        if deg % 2:
            continue
        idx = bit_indices(mask)
        if deg == 2:
            total += c * sigma[idx[0], idx[1]]
            continue
        if deg == 4:
            i, j, k, l = idx
            total += c * (sigma[i, j] * sigma[k, l] - sigma[i, k] * sigma[j, l]
                          + sigma[i, l] * sigma[j, k])
            continue
        total += c * pfaffian(sigma[np.ix_(idx, idx)])
    return complex(total)


def wick_eval_product(ta, tb, sigma):
    """omega(a b) for a, b given as term dicts, without forming a*b."""
    sigma = np.asarray(sigma, dtype=complex)
    total = 0.0 + 0.0j
    bl = [(mb, cb, mb.bit_count()) for mb, cb in tb.items()]
    for ma, ca in ta.items():
        da = ma.bit_count()
        for mb, cb, db in bl:
            if ma & mb or (da + db) % 2:
                continue
            c = ca * cb
            if _parity_above(ma, mb):
                c = -c
            total += wick_eval({ma | mb: c}, sigma)
    return complex(total)
