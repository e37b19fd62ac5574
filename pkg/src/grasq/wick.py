"""Quasi-free (Gaussian) states on a Grassmann ambient algebra.

A state is fixed by its two-point matrix ``sigma[i, j] = omega(g_i g_j)``;
higher moments follow from Wick's rule, i.e. Pfaffians of sub-matrices.
"""

import numpy as np
from scipy.linalg import block_diag

from grasq import kernels
from grasq.exterior import AlgebraElement, GeneratorContext
from grasq.pfaffian import AntisymmetryError, pfaffian, pfaffian_pairings


class CovarianceMatrix:
    """Correlation operator of a Gaussian variable.

    ``flavor="real"`` requires C^T = -C.  ``flavor="kappa"`` stores the real
    structure kappa(v) = K conj(v) through the matrix ``kappa`` (symmetric and
    unitary) and requires C^kappa = K C^T conj(K) = -C.
    """

    def __init__(self, entries, flavor="real", kappa=None, tol=1e-12):
        c = np.array(entries, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"square matrix expected, got shape {c.shape}")
        self.entries = c
        self.dim = c.shape[0]
        self.flavor = flavor
        scale = max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0
        if flavor == "real":
            err = float(np.max(np.abs(c + c.T))) if c.size else 0.0
            if err > tol * scale:
                raise AntisymmetryError(f"C is not antisymmetric (residual {err:.3e})")
            self.kappa = None
        elif flavor == "kappa":
            k = np.eye(self.dim, dtype=complex) if kappa is None else np.array(kappa, dtype=complex)
            if k.shape != c.shape:
                raise ValueError("kappa matrix has the wrong shape")
            if np.max(np.abs(k - k.T)) > tol or np.max(np.abs(k @ k.conj() - np.eye(self.dim))) > tol:
                raise ValueError("kappa must be symmetric and unitary (an anti-unitary involution)")
            err = float(np.max(np.abs(self.kappa_conjugate(c, k) + c))) if c.size else 0.0
            if err > tol * scale:
                raise AntisymmetryError(f"C is not kappa-antisymmetric (residual {err:.3e})")
            self.kappa = k
        else:
            raise ValueError(f"unknown flavor {flavor!r}")

    @staticmethod
    def kappa_conjugate(c, k):
        """C^kappa = kappa C^* kappa as a matrix: K C^T conj(K)."""
        return k @ c.T @ k.conj()

    def apply_kappa(self, v):
        k = np.eye(self.dim) if self.kappa is None else self.kappa
        return k @ np.conj(np.asarray(v, dtype=complex))

    def re_kappa(self, v):
        v = np.asarray(v, dtype=complex)
        return 0.5 * (v + self.apply_kappa(v))

    def im_kappa(self, v):
        v = np.asarray(v, dtype=complex)
        return (v - self.apply_kappa(v)) / 2j

    def pairing(self, v, w):
        """<<v, C w>>: <v, Cw> (real flavor) or (kappa v, C w) (kappa flavor)."""
        v = np.asarray(v, dtype=complex)
        w = np.asarray(w, dtype=complex)
        if self.flavor == "real":
            return complex(v @ self.entries @ w)
        return complex(np.vdot(self.apply_kappa(v), self.entries @ w))

    def two_point_matrix(self):
        """omega(X(e_i) X(e_j)) in the basis e_i."""
        if self.flavor == "real":
            return self.entries.copy()
        return self.kappa.conj() @ self.entries

    def norm(self):
        return float(np.linalg.norm(self.entries, 2)) if self.dim else 0.0


class WickState:
    """Gaussian state on ``M`` ambient generators with two-point matrix sigma."""

    def __init__(self, sigma, ctx=None, tol=1e-12, label=""):
        s = np.array(sigma, dtype=complex)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("sigma must be square")
        scale = max(1.0, float(np.max(np.abs(s)))) if s.size else 1.0
        err = float(np.max(np.abs(s + s.T))) if s.size else 0.0
        if err > tol * scale:
            raise AntisymmetryError(f"sigma is not antisymmetric (residual {err:.3e})")
        # store the exactly antisymmetric part
        self.sigma = 0.5 * (s - s.T)
        self.M = s.shape[0]
        if ctx is None:
            ctx = GeneratorContext(self.M, label=label, cap=max(self.M, 1))
        elif ctx.n != self.M:
            raise ValueError("context size does not match sigma")
        self.ctx = ctx

    def moment(self, ids, method="auto"):
        """omega(g_{i1} ... g_{in}) for an ordered id list (repeats allowed)."""
        ids = list(ids)
        for i in ids:
            if not 0 <= i < self.M:
                raise IndexError(f"generator {i} outside 0..{self.M - 1}")
        if len(ids) % 2:
            return 0j
        if not ids:
            return 1.0 + 0j
        sub = self.sigma[np.ix_(ids, ids)]
        return pfaffian(sub, method=method)

    def moment_pairings(self, ids):
        """Same moment by the exhaustive pairing sum."""
        ids = list(ids)
        if len(ids) % 2:
            return 0j
        return pfaffian_pairings(self.sigma[np.ix_(ids, ids)])

    def expect(self, a):
        """omega(a) for an ambient element a."""
        if not isinstance(a, AlgebraElement):
            return complex(a)
        if a.ctx is not self.ctx:
            raise ValueError("element does not live on this state's generators")
        return complex(kernels.wick_eval(dict(a.terms), self.sigma))

    def expect_product(self, a, b):
        """omega(a b) without forming the product explicitly."""
        if a.ctx is not self.ctx or b.ctx is not self.ctx:
            raise ValueError("element does not live on this state's generators")
        return complex(kernels.wick_eval_product(dict(a.terms), dict(b.terms), self.sigma))

    def join(self, other, label=""):
        """Independent join: block-diagonal two-point matrix."""
        s = block_diag(self.sigma, other.sigma)
        ctx = GeneratorContext(s.shape[0], label=label, cap=max(s.shape[0], 1))
        return WickState(s, ctx)

    def embed(self, a, offset, ctx):
        """Shift the generators of ``a`` by ``offset`` into context ``ctx``."""
        return AlgebraElement(ctx, {m << offset: c for m, c in a.terms.items()}, prune=False)


def wick_moment(state, ids):
    return state.moment(ids)


def state_eval(state, a):
    return state.expect(a)


def gaussian_state(cov):
    """WickState of the basis images X(e_i) of a Gaussian with correlation cov."""
    if not isinstance(cov, CovarianceMatrix):
        cov = CovarianceMatrix(cov)
    return WickState(cov.two_point_matrix())
