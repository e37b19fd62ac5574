"""Grassmann random variables: homomorphisms from Lambda V into an ambient algebra.

A variable is stored by the images of the basis vectors e_0 .. e_{N-1}.  Two
backends share one interface:

* ``symbolic``: images are elements of an ambient Grassmann algebra whose
  generators carry a Gaussian (Wick) state.  Moments are exact Pfaffian sums;
  operator norms are bounded through per-generator norm bounds.
* ``dense``: images are sparse matrices on a Fock space with a vacuum state;
  operator norms are computed exactly.
"""

import math
from itertools import permutations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from grasq.exterior import AlgebraElement, GeneratorContext, right_derive, weighted_norm, wedge
from grasq.wick import CovarianceMatrix, WickState


class CompatibilityError(ValueError):
    """Raised when two variables do not jointly extend to a homomorphism."""


def op_norm(m):
    """Operator 2-norm of a dense or sparse matrix."""
    if sp.issparse(m):
        if m.nnz == 0:
            return 0.0
        if m.shape[0] <= 512:
            return float(np.linalg.norm(m.toarray(), 2))
        herm = (m.conj().T @ m).tocsr()
        val = spla.eigsh(herm, k=1, which="LA", return_eigenvectors=False, tol=1e-12)
        return float(math.sqrt(max(val[0].real, 0.0)))
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


class GrassmannRV:
    """Images of the basis of V under a homomorphism into the ambient algebra.

    Parameters
    ----------
    images : list
        ``AlgebraElement`` (symbolic) or sparse matrices (dense), one per basis vector.
    state : WickState or DenseRep
        State on the ambient algebra.
    ambient_norms : array_like, optional
        Symbolic backend only: operator-norm bounds of the ambient generators.
    """

    def __init__(self, images, state, backend=None, vctx=None, ambient_norms=None):
        self.images = list(images)
        self.state = state
        if backend is None:
            backend = "symbolic" if all(isinstance(x, AlgebraElement) for x in self.images) else "dense"
        self.backend = backend
        self.N = len(self.images)
        self.vctx = vctx if vctx is not None else GeneratorContext(self.N, label="V", cap=max(self.N, 1))
        if backend == "symbolic":
            for x in self.images:
                if x.ctx is not state.ctx:
                    raise ValueError("images must live on the state's generators")
                if x.parity() not in ("odd", "zero"):
                    raise ValueError("images of a Grassmann variable must be odd")
            if ambient_norms is None:
                ambient_norms = np.ones(state.M)
            self.ambient_norms = np.asarray(ambient_norms, dtype=float)
        else:
            self.ambient_norms = None

    @property
    def ambient(self):
        return self.state.ctx if self.backend == "symbolic" else None

    def unit(self):
        if self.backend == "symbolic":
            return self.state.ctx.one()
        return self.state.identity

    def zero_element(self):
        if self.backend == "symbolic":
            return self.state.ctx.zero()
        return sp.csr_matrix(self.state.identity.shape, dtype=complex)

    def apply(self, vec):
        """Image of the degree-one element sum_a vec[a] e_a."""
        vec = np.asarray(vec)
        out = self.zero_element()
        for a, c in enumerate(vec):
            if c != 0:
                out = out + self.images[a] * c
        return out

    def scale(self, lam):
        return GrassmannRV([x * lam for x in self.images], self.state, self.backend, self.vctx, self.ambient_norms)

    def compose(self, mat):
        """Variable v -> X(mat v), i.e. images X(mat e_a)."""
        mat = np.asarray(mat)
        return GrassmannRV([self.apply(mat[:, a]) for a in range(mat.shape[1])], self.state,
                           self.backend, None, self.ambient_norms)

    def __add__(self, other):
        return rv_sum(self, other)

    def __sub__(self, other):
        return rv_sum(self, other.scale(-1.0))

    def hom(self, g, max_degree=None):
        return hom_eval(self, g, max_degree)

    def expect(self, g):
        """omega(X(g))."""
        return expect(self.state, hom_eval(self, g))

    def norm_of(self, a):
        """Operator norm (dense) or its bound (symbolic) of an ambient element."""
        if self.backend == "symbolic":
            return weighted_norm(a, self.ambient_norms)
        return op_norm(a)


def expect(state, a):
    if isinstance(state, WickState):
        return state.expect(a)
    return state.expect(a)


def _prod(x, a, b, max_degree):
    if x.backend == "symbolic":
        return wedge(a, b, max_degree)
    return (a @ b).tocsr()


def hom_eval(x, g, max_degree=None, cache=None):
    """X(g) = sum_A g_A X(e_{a1}) ... X(e_{ak}) with prefix products memoized.

    ``cache`` (a dict) may be shared between calls with the same ``x`` and
    ``max_degree``.
    """
    if g.ctx.n != x.N:
        raise ValueError(f"element over {g.ctx.n} generators applied to a variable over {x.N}")
    if cache is None:
        cache = {}
    cache.setdefault(0, x.unit())

    def prod(mask):
        if mask in cache:
            return cache[mask]
        top = mask.bit_length() - 1
        val = _prod(x, prod(mask ^ (1 << top)), x.images[top], max_degree)
        cache[mask] = val
        return val

    out = x.zero_element()
    for mask in sorted(g.terms):
        c = g.terms[mask]
        out = out + prod(mask) * c
    return out


def _anticommutator_residual(a, b, backend):
    if backend == "symbolic":
        r = wedge(a, b) + wedge(b, a)
        return r.max_abs()
    r = a @ b + b @ a
    return float(np.max(np.abs(r.data))) if r.nnz else 0.0


def rv_sum(x, y, check=True, tol=1e-10):
    """(X + Y)(v) = X(v) + Y(v) for compatible variables on one state."""
    if x.state is not y.state:
        raise CompatibilityError("variables live on different probability spaces")
    if x.N != y.N:
        raise CompatibilityError("variables over spaces of different dimension")
    if check:
        for a in x.images:
            for b in y.images:
                scale = max(1.0, _max_entry(a, x.backend) * _max_entry(b, x.backend))
                if _anticommutator_residual(a, b, x.backend) > tol * scale:
                    raise CompatibilityError("images do not anticommute")
    return GrassmannRV([a + b for a, b in zip(x.images, y.images)], x.state, x.backend, x.vctx, x.ambient_norms)


def _max_entry(a, backend):
    if backend == "symbolic":
        return a.max_abs()
    return float(np.max(np.abs(a.data))) if a.nnz else 0.0


def gv_norm(x):
    """(upper, lower) for sup_{|v|=1} ||X(v)||.

    ``upper = sqrt(sum_a ||X(e_a)||^2)`` is certified; ``lower = max_a ||X(e_a)||``
    is the true lower bound in the dense backend and a diagnostic in the
    symbolic one, where every generator norm is itself an upper bound.
    """
    norms = [x.norm_of(a) for a in x.images]
    if not norms:
        return 0.0, 0.0
    return float(math.sqrt(sum(n * n for n in norms))), float(max(norms))


def gv_norm_sup(x, samples=721):
    """Brute-force sup over unit vectors of a real 2-dimensional V (dense backend)."""
    if x.N != 2:
        raise ValueError("only implemented for two-dimensional V")
    best = 0.0
    for th in np.linspace(0.0, np.pi, samples):
        best = max(best, x.norm_of(x.apply([np.cos(th), np.sin(th)])))
    return best


# ---------------------------------------------------------------- Taylor machinery

def derivative_term(g, x, z, k):
    """m^{k+1}[(X (x) Z^{(x)k})(d_R^k g)] times k!  (exact for integer data)."""
    t = right_derive(g, k)
    out = x.zero_element()
    cache = {}
    for key in sorted(t.terms):
        mask, ids = key[0], key[1:]
        if mask not in cache:
            cache[mask] = hom_eval(x, g.ctx.monomial(_bits(mask)))
        term = cache[mask]
        for i in ids:
            term = _prod(x, term, z.images[i], None)
        out = out + term * t.terms[key]
    return out


def _bits(mask):
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def taylor_remainder(g, x, y, n):
    """G(Y) - G(X) - sum_{k=1..n} (1/k!) m^{k+1}[(X (x) (Y-X)^{(x)k}) d_R^k G]."""
    if n < 0:
        raise ValueError("n must be non-negative")
    z = rv_sum(y, x.scale(-1.0))
    out = hom_eval(y, g) - hom_eval(x, g)
    for k in range(1, min(n, max(g.degree(), 0)) + 1):
        out = out - derivative_term(g, x, z, k) / math.factorial(k)
    return out


def symmetrization_sides(g, x, y, k):
    """Both sides of the symmetrization identity for a homogeneous g of degree n.

    Left: m^{k+1}[(X (x) Y^{(x)k}) d_R^k g].  Right:
    n!/(n-k)! * m^n(S(X^{(n-k)} (x) Y^{(x)k}) i(g)), with the antisymmetric
    embedding i and the symmetrizer S written out as permutation sums.
    """
    n = g.degree()
    if g.min_degree() != n:
        raise ValueError("g must be homogeneous")
    lhs = derivative_term(g, x, y, k)
    zs = [x] * (n - k) + [y] * k
    perms = list(permutations(range(n)))
    signs = [_perm_sign(p) for p in perms]
    rhs = x.zero_element()
    for mask, c in sorted(g.terms.items()):
        ids = _bits(mask)
        acc = x.zero_element()
        for sig, ssign in zip(perms, signs):
            for pi in perms:
                term = x.unit()
                for j in range(n):
                    term = _prod(x, term, zs[pi[j]].images[ids[sig[j]]], None)
                acc = acc + term * ssign
        rhs = rhs + acc * c
    scale = math.factorial(n) / math.factorial(n - k) / math.factorial(n) ** 2
    return lhs, rhs * scale


def _perm_sign(p):
    sign = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                sign = -sign
    return sign


def taylor_constant(n, h):
    """Constant of the order-n remainder bound for a degree-h component."""
    if n == 0:
        return float(h)
    total = 0.0
    for p in range(h - n):
        inner = sum((-1) ** l * math.comb(h, p + l + n + 1) * math.comb(p + l, l) for l in range(h - n - p))
        total += abs(inner)
    return float(total)


def taylor_bound(g, x, y, n):
    """Right-hand side of the remainder bound with the certified gv_norm bounds."""
    from grasq.exterior import pi_norm

    deg = g.degree()
    if n > deg - 1:
        return 0.0
    nx = gv_norm(x)[0]
    ny = gv_norm(y)[0]
    nd = gv_norm(rv_sum(y, x.scale(-1.0), check=False))[0]
    c = max(taylor_constant(n, h) for h in range(n + 1, deg + 1))
    return c * (1.0 + max(nx, ny)) ** (deg - n - 1) * pi_norm(g) * nd ** (n + 1)


# ---------------------------------------------------------------- constructors

def symbolic_gaussian(cov, gen_norm=None, label="X"):
    """Gaussian variable whose images are the generators of a fresh Wick state.

    ``gen_norm`` bounds ||X(e_a)||; the default 1 + ||C|| is the bound of the
    creation/annihilation realization.
    """
    if not isinstance(cov, CovarianceMatrix):
        cov = CovarianceMatrix(cov)
    st = WickState(cov.two_point_matrix(), label=label)
    nu = 1.0 + cov.norm() if gen_norm is None else gen_norm
    return GrassmannRV(st.ctx.gens(), st, "symbolic", ambient_norms=np.full(st.M, nu))


def linear_rv(coeffs, state, ambient_norms=None):
    """Variable with images X(e_a) = sum_i coeffs[a, i] g_i on a Wick state."""
    coeffs = np.asarray(coeffs)
    images = [state.ctx.linear(row) for row in coeffs]
    return GrassmannRV(images, state, "symbolic", ambient_norms=ambient_norms)
