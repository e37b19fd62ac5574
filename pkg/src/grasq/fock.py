"""Dense operator realizations of Gaussian Grassmann variables.

The antisymmetric Fock space over C^N has the basis |m>, m a bitmask of
occupied modes.  Creation adds a mode with the sign (-1)^{#occupied below}.
Gaussian variables are built from creation and annihilation operators:

* real correlation C:   X(e_a) = sum_i C[i, a] c_i^+ + c_a
* kappa correlation C:  X(e_a) = sum_i C[i, a] a_i^+ + sum_i conj(K)[i, a] a_i

so that <Omega, X(v) X(w) Omega> equals <v, C w>, resp. (kappa v, C w).
"""

import numpy as np
import scipy.sparse as sp

from grasq.exterior import CapacityError
from grasq.wick import CovarianceMatrix

DENSE_CAP = 12


def creation_operators(n):
    """Sparse creation matrices c_0^+ .. c_{n-1}^+ on the 2^n Fock space."""
    dim = 1 << n
    masks = np.arange(dim, dtype=np.int64)
    ops = []
    for i in range(n):
        bit = 1 << i
        src = masks[(masks & bit) == 0]
        below = src & (bit - 1)
        parity = np.array([int(b).bit_count() & 1 for b in below], dtype=np.int64)
        vals = np.where(parity, -1.0, 1.0)
        ops.append(sp.csr_matrix((vals, (src | bit, src)), shape=(dim, dim), dtype=complex))
    return ops


class DenseRep:
    """Generators as 2^M x 2^M sparse matrices with the vacuum state."""

    def __init__(self, mats, omega, grading):
        self.mats = list(mats)
        self.M = len(self.mats)
        self.omega = np.asarray(omega, dtype=complex)
        self.R = grading
        self.dim = self.omega.shape[0]
        self.identity = sp.identity(self.dim, dtype=complex, format="csr")

    def expect(self, op):
        """<Omega, op Omega> for a matrix or a scalar."""
        if np.isscalar(op):
            return complex(op)
        return complex(np.vdot(self.omega, op @ self.omega))

    def anticommutator_residual(self):
        worst = 0.0
        for i in range(self.M):
            for j in range(i, self.M):
                a = self.mats[i] @ self.mats[j] + self.mats[j] @ self.mats[i]
                if a.nnz:
                    worst = max(worst, float(np.max(np.abs(a.data))))
        return worst

    def dump_csv(self, path):
        """Write generator matrices as rows ``generator,row,col,re,im``."""
        with open(path, "w") as fh:
            fh.write("generator,row,col,re,im\n")
            for g, m in enumerate(self.mats):
                coo = m.tocoo()
                for r, c, v in zip(coo.row, coo.col, coo.data):
                    fh.write(f"{g},{r},{c},{v.real!r},{v.imag!r}\n")


def _grading(n):
    masks = np.arange(1 << n)
    signs = np.array([1.0 if not int(m).bit_count() & 1 else -1.0 for m in masks])
    return sp.diags(signs.astype(complex), format="csr")


def _vacuum(n):
    omega = np.zeros(1 << n, dtype=complex)
    omega[0] = 1.0
    return omega


def _check_cap(n, cap):
    limit = DENSE_CAP if cap is None else cap
    if n > limit:
        raise CapacityError(f"dense backend limited to {limit} generators, got {n}")


def build_fock(cov, cap=None):
    """Dense Gaussian variable with (possibly complex) antisymmetric correlation.

    Returns ``(rep, rv)`` where ``rv`` maps e_a to ``rep.mats[a]``.
    """
    from grasq.rv import GrassmannRV

    c = cov.entries if isinstance(cov, CovarianceMatrix) else np.asarray(cov, dtype=complex)
    if isinstance(cov, CovarianceMatrix) and cov.flavor != "real":
        raise ValueError("build_fock needs a real-flavor correlation; use build_complex_gaussian")
    if np.max(np.abs(c + c.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(c), initial=0.0)):
        raise ValueError("correlation must be antisymmetric")
    n = c.shape[0]
    _check_cap(n, cap)
    cr = creation_operators(n)
    an = [op.T.tocsr() for op in cr]
    mats = []
    for a in range(n):
        x = an[a].copy()
        for i in range(n):
            if c[i, a] != 0:
                x = x + c[i, a] * cr[i]
        mats.append(x.tocsr())
    rep = DenseRep(mats, _vacuum(n), _grading(n))
    return rep, GrassmannRV(mats, rep, backend="dense")


def build_complex_gaussian(cov, cap=None):
    """Dense (V, kappa)-Gaussian: X(v) = a(Cv)^* + a(kappa v)."""
    from grasq.rv import GrassmannRV

    if not isinstance(cov, CovarianceMatrix) or cov.flavor != "kappa":
        raise ValueError("build_complex_gaussian needs a kappa-flavor CovarianceMatrix")
    c = cov.entries
    kbar = cov.kappa.conj()
    n = cov.dim
    _check_cap(n, cap)
    cr = creation_operators(n)
    an = [op.T.tocsr() for op in cr]
    mats = []
    for a in range(n):
        x = sp.csr_matrix((1 << n, 1 << n), dtype=complex)
        for i in range(n):
            if c[i, a] != 0:
                x = x + c[i, a] * cr[i]
            if kbar[i, a] != 0:
                x = x + kbar[i, a] * an[i]
        mats.append(x.tocsr())
    rep = DenseRep(mats, _vacuum(n), _grading(n))
    return rep, GrassmannRV(mats, rep, backend="dense")


def dense_from_state(state, cap=None):
    """Dense realization of a WickState: generators with the same moments."""
    return build_fock(state.sigma, cap=cap)


def tensor_join(x1, x2, cap=None):
    """Compatible independent copies of two dense variables on H1 (x) H2.

    X1 images become X1(v) (x) R2 and X2 images become Id (x) X2(w).
    Returns ``(joined, left, right)``: the variable over V1 + V2 and its two
    blocks as separate variables on the joined space.
    """
    from grasq.rv import GrassmannRV

    if x1.backend != "dense" or x2.backend != "dense":
        raise ValueError("tensor_join works on dense variables; join WickStates for the symbolic backend")
    r1, r2 = x1.state, x2.state
    _check_cap(r1.M + r2.M, cap)
    id1 = sp.identity(r1.dim, dtype=complex, format="csr")
    base = [sp.kron(m, r2.R, format="csr") for m in r1.mats] + [sp.kron(id1, m, format="csr") for m in r2.mats]
    rep = DenseRep(base, np.kron(r1.omega, r2.omega), sp.kron(r1.R, r2.R, format="csr"))
    left = [sp.kron(m, r2.R, format="csr") for m in x1.images]
    right = [sp.kron(id1, m, format="csr") for m in x2.images]
    joined = GrassmannRV(left + right, rep, backend="dense")
    return joined, GrassmannRV(left, rep, backend="dense"), GrassmannRV(right, rep, backend="dense")
