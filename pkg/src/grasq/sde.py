"""Finite-dimensional Grassmann SDEs.

Two fixed-point engines share the node quadrature of ``noise.node_weights``:

* ``picard_solve`` iterates the integral equation with a numeric coupling,
  truncating ambient degrees when asked.  Linear drifts take a matrix fast
  path that never builds ambient generators.
* ``stationary_solve`` (and ``series_fixed_point``) computes the fixed point
  order by order in the coupling, Psi = sum_r lam^r Z^(r).  The coefficients
  Z^(r) do not depend on lam, so one solve serves every coupling.

Sign conventions: a vector v acts as F(v) = sum_a v_a F(e_a); a linear map A
acts on the basis as A e_a = sum_b A[b, a] e_b.
"""

import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from grasq.exterior import (AlgebraElement, GeneratorContext, all_monomials, contract_slots, exp_nilpotent,
                            pair_contract, pi_norm, q_contract, right_derive, wedge, weighted_norm)
from grasq.noise import (GaussianLinear, NodeFamily, OUSpec, TimeGrid, WhiteNoise, _weights_exp,
                         lyapunov_CA, node_weights, stationary_norm_bound)
from grasq.rv import GrassmannRV, hom_eval
from grasq.wick import WickState


class AdmissibilityError(ValueError):
    """Raised when the coupling exceeds the admissible bound."""

    def __init__(self, msg, lam0=None):
        super().__init__(msg)
        self.lam0 = lam0


class ConvergenceError(RuntimeError):
    """Raised when a fixed-point iteration does not converge; carries diagnostics."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------- drifts

class DriftSpec:
    """Drift F: V -> Lambda V given by the images F(e_a).

    Every image must be odd.  ``norm()`` is sqrt(sum_a pi_norm(F(e_a))^2),
    an upper bound for the operator norm from V into Lambda V with the
    projective norm.
    """

    def __init__(self, images):
        self.images = list(images)
        if not self.images:
            raise ValueError("drift over an empty basis")
        self.ctx = self.images[0].ctx
        self.N = self.ctx.n
        if len(self.images) != self.N:
            raise ValueError("one image per basis vector expected")
        for f in self.images:
            if f.ctx is not self.ctx:
                raise ValueError("drift images must share one context")
            if f.parity() not in ("odd", "zero"):
                raise ValueError("drift images must be odd")

    @classmethod
    def zero(cls, ctx):
        return cls([ctx.zero() for _ in range(ctx.n)])

    @classmethod
    def from_matrix(cls, A, ctx):
        A = np.asarray(A)
        return cls([ctx.linear(A[:, a]) for a in range(ctx.n)])

    @classmethod
    def from_potential(cls, U, C, scale=-0.5, transpose=False):
        """F(v) = scale * <C d_R U, v>.

        With d_R U = sum f_i (x) e_i the pairing is sum f_i (C^T v)_i, the
        orientation for which the Gaussian-times-weight state is invariant;
        ``transpose=True`` selects the opposite orientation (for checks).
        """
        C = np.asarray(C)
        m = C if transpose else C.T
        d = right_derive(U, 1)
        eye = np.eye(U.ctx.n)
        return cls([pair_contract(d, eye[a], m) * scale for a in range(U.ctx.n)])

    @classmethod
    def cubic(cls, coeffs, ctx):
        """F(e_a) = sum coeffs[a, b, c, d] v_b v_c v_d."""
        coeffs = np.asarray(coeffs)
        images = []
        for a in range(ctx.n):
            f = ctx.zero()
            for idx in zip(*np.nonzero(coeffs[a])):
                f = f + ctx.monomial([int(i) for i in idx], coeffs[(a,) + tuple(idx)])
            images.append(f)
        return cls(images)

    def __add__(self, other):
        if other.ctx is not self.ctx:
            raise ValueError("drifts over different contexts")
        return DriftSpec([a + b for a, b in zip(self.images, other.images)])

    def scale(self, s):
        return DriftSpec([f * s for f in self.images])

    def degree(self):
        return max((f.degree() for f in self.images if not f.is_zero()), default=0)

    def min_degree(self):
        return min((f.min_degree() for f in self.images if not f.is_zero()), default=0)

    def is_zero(self):
        return all(f.is_zero() for f in self.images)

    def is_linear(self):
        return self.degree() <= 1

    def linear_matrix(self):
        """Matrix M with F(e_a) = sum_b M[b, a] e_b for the degree-one part."""
        m = np.zeros((self.N, self.N), dtype=complex)
        for a, f in enumerate(self.images):
            for b in range(self.N):
                m[b, a] = f.coefficient(1 << b)
        return m.real if np.max(np.abs(m.imag), initial=0.0) == 0 else m

    def norm(self):
        return float(math.sqrt(sum(pi_norm(f) ** 2 for f in self.images)))

    def apply_vector(self, vec):
        out = self.ctx.zero()
        for a, c in enumerate(np.asarray(vec)):
            if c != 0:
                out = out + self.images[a] * c
        return out


def total_drift(A, F=None, lam=1.0, ctx=None):
    """Drift v -> A v + lam F(v)."""
    if ctx is None:
        if F is None:
            raise ValueError("need a context or a nonlinear drift")
        ctx = F.ctx
    out = DriftSpec.from_matrix(A, ctx)
    if F is not None:
        out = out + F.scale(lam)
    return out


def admissible_lambda(K, L, F_norm, deg, lam_A):
    """Largest lam0 allowed by the self-map and contraction conditions.

    self-map:     2 lam0 ||F|| (1+K)^deg / lam_A + 2 L <= K
    contraction:  2 lam0 deg ||F|| (1+K)^(deg-1) / lam_A < 1
    """
    if F_norm == 0 or deg == 0:
        return math.inf
    a = (K - 2.0 * L) * lam_A / (2.0 * F_norm * (1.0 + K) ** deg)
    b = lam_A / (2.0 * deg * F_norm * (1.0 + K) ** (deg - 1))
    return float(min(a, b * (1.0 - 1e-12)))


def generator_apply(G, drift, C):
    """L G = (d_R G) . F + 1/2 Q_C(d_R^2 G) with (f (x) v) . F = f F(v)."""
    if drift.ctx is not G.ctx:
        raise ValueError("G and the drift must share a context")
    out = G.ctx.zero()
    if G.degree() >= 1:
        out = out + contract_slots(right_derive(G, 1), drift.images)
    if G.degree() >= 2:
        out = out + q_contract(right_derive(G, 2), C) * 0.5
    return out


def exp_even(U, scale):
    """exp(scale U) for an even element, scalar part split off."""
    u0 = U.scalar_part()
    rest = U - U.ctx.scalar(u0) if u0 != 0 else U
    return exp_nilpotent(rest, scale) * complex(np.exp(scale * u0))


# ---------------------------------------------------------------- problems and trajectories

class SDEProblem:
    """Psi_t(v) = Psi0(v) + int_0^t Psi_s(A v + lam F(v)) ds + B_t(v).

    ``noise`` must carry the initial block (Psi0) of dimension N.
    """

    def __init__(self, A, drift, lam, noise):
        self.A = np.asarray(A, dtype=float)
        self.drift = drift
        self.lam = lam
        self.noise = noise
        self.N = self.A.shape[0]
        if noise.N != self.N:
            raise ValueError("noise dimension does not match A")
        if noise.N0 not in (0, self.N):
            raise ValueError("initial block must have the dimension of V")
        if drift is not None and drift.N != self.N:
            raise ValueError("drift dimension does not match A")

    @property
    def grid(self):
        return self.noise.grid

    def total_matrix(self):
        m = self.A.astype(complex)
        if self.drift is not None and not self.drift.is_zero():
            m = m + self.lam * self.drift.linear_matrix()
        return m.real if np.max(np.abs(m.imag), initial=0.0) == 0 else m

    def is_linear(self):
        return self.drift is None or self.drift.is_linear()


class LinearTrajectory:
    """Solution of a linear SDE as Psi_i(v) = Psi0(P_i v) + sum_{k<i} xi_k(d[i-k] v)."""

    def __init__(self, noise, P, d, info):
        self.noise = noise
        self.P = P
        self.d = d
        self.info = info
        self.times = noise.grid.nodes()
        self.N = noise.N
        h = noise.grid.h
        C = noise.C
        self._noise_cov = np.cumsum(np.einsum("mai,ab,mbj->mij", d, h * C, d), axis=0)

    def __len__(self):
        return len(self.times)

    def covariance(self, i):
        """omega(Psi_i(e_a) Psi_i(e_b))."""
        out = self._noise_cov[i].copy()
        if self.noise.N0:
            out = out + self.P[i].T @ self.noise.initial @ self.P[i]
        return out

    def cross_initial(self, i):
        """omega(Psi_i(e_a) Psi0(e_b))."""
        if not self.noise.N0:
            return np.zeros((self.N, self.N))
        return self.P[i].T @ self.noise.initial

    def snapshot(self, i):
        """Snapshot i as a GaussianLinear over the noise family."""
        steps = self.noise.grid.steps
        cells = np.zeros((steps, self.N, self.N), dtype=self.d.dtype)
        for k in range(i):
            cells[k] = self.d[i - k]
        init = self.P[i] if self.noise.N0 else None
        return GaussianLinear(self.noise, init, cells)

    def rv(self, i):
        return self.snapshot(i).to_rv()

    def initial_rv(self):
        return self.noise.initial_rv()


class Trajectory:
    """Snapshots Psi_{tau_i} as GrassmannRVs on a shared ambient state."""

    def __init__(self, times, images, state, ambient_norms, info, initial=None):
        self.times = np.asarray(times)
        self.images = images
        self.state = state
        self.ambient_norms = ambient_norms
        self.info = info
        self.initial = initial

    def __len__(self):
        return len(self.times)

    def rv(self, i):
        return GrassmannRV(self.images[i], self.state, "symbolic", ambient_norms=self.ambient_norms)

    def initial_rv(self):
        if self.initial is None:
            raise ValueError("trajectory has no stored initial variable")
        return GrassmannRV(self.initial, self.state, "symbolic", ambient_norms=self.ambient_norms)

    def sup_norm(self):
        return max(_image_norm(im, self.ambient_norms) for im in self.images)


def _image_norm(images, nu):
    return float(math.sqrt(sum(weighted_norm(x, nu) ** 2 for x in images)))


# ---------------------------------------------------------------- node mixing

def _mix(Y, W, efun, ctx):
    """out[i][a] = sum_j W[i, j] sum_b E_ij[b, a] Y[j][b] as one sparse product."""
    n1 = len(Y)
    N = len(Y[0])
    index = {}
    rows, cols, vals = [], [], []
    for j in range(n1):
        for b in range(N):
            r = j * N + b
            for m, c in Y[j][b].terms.items():
                k = index.get(m)
                if k is None:
                    k = len(index)
                    index[m] = k
                rows.append(r)
                cols.append(k)
                vals.append(c)
    if not index:
        return [[ctx.zero() for _ in range(N)] for _ in range(n1)]
    ymat = sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(n1 * N, len(index)))
    mx = np.zeros((n1 * N, n1 * N), dtype=complex)
    for i in range(n1):
        for j in range(n1):
            if W[i, j] != 0:
                e = np.eye(N) if efun is None else efun(i, j)
                mx[i * N:(i + 1) * N, j * N:(j + 1) * N] = W[i, j] * np.asarray(e).T
    res = (sp.csr_matrix(mx) @ ymat).tocsr()
    masks = [None] * len(index)
    for m, k in index.items():
        masks[k] = m
    out = []
    for i in range(n1):
        row_i = []
        for a in range(N):
            r = i * N + a
            lo, hi = res.indptr[r], res.indptr[r + 1]
            terms = {masks[k]: complex(v) for k, v in zip(res.indices[lo:hi], res.data[lo:hi]) if v != 0}
            row_i.append(AlgebraElement(ctx, terms))
        out.append(row_i)
    return out


def _add_nodes(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def _node_diff(a, b, nu):
    return max(_image_norm([x - y for x, y in zip(ra, rb)], nu) for ra, rb in zip(a, b))


class _NodeEval:
    """F(e_b)(Psi_j) for a fixed image list, sharing prefix products."""

    def __init__(self, images, ctx, max_degree):
        self.images = images
        self.ctx = ctx
        self.max_degree = max_degree
        self.cache = {0: ctx.one()}

    def mono(self, mask):
        val = self.cache.get(mask)
        if val is None:
            top = mask.bit_length() - 1
            val = wedge(self.mono(mask ^ (1 << top)), self.images[top], self.max_degree)
            self.cache[mask] = val
        return val

    def eval(self, g):
        out = self.ctx.zero()
        for m in sorted(g.terms):
            out = out + self.mono(m) * g.terms[m]
        return out


def picard_nodes(base, drift_images, W, efun, ctx, nu, max_degree=None, tol=1e-12, max_iter=200, init=None):
    """Iterate psi_i = base_i + sum_j W_ij E_ij^T F(psi_j) to a fixed point.

    Returns ``(psi, diffs)`` where ``diffs[n]`` is the surrogate sup-norm of
    the n-th update.
    """
    psi = [list(r) for r in (init if init is not None else base)]
    diffs = []
    for _ in range(max_iter):
        Y = []
        for j in range(len(psi)):
            ev = _NodeEval(psi[j], ctx, max_degree)
            Y.append([ev.eval(f) for f in drift_images])
        new = _add_nodes(base, _mix(Y, W, efun, ctx))
        if max_degree is not None:
            new = [[x.truncate(max_degree) for x in r] for r in new]
        diff = _node_diff(new, psi, nu)
        diffs.append(diff)
        psi = new
        if diff <= tol:
            return psi, diffs
    raise ConvergenceError("Picard iteration did not converge", _contraction_diagnostics(diffs))


def _contraction_diagnostics(diffs):
    ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > 0]
    return {"diffs": diffs, "ratios": ratios, "max_ratio": max(ratios) if ratios else None}


# ---------------------------------------------------------------- linear fast path

def _cumtrapz(vals, h):
    """Cumulative trapezoid along axis 0, starting at 0."""
    cs = np.cumsum(vals, axis=0)
    return h * (cs - 0.5 * (vals[0][None] + vals))


def _linear_picard(M, noise, tol, max_iter):
    """Trapezoid Picard for P' = P M and the noise kernels d[m]."""
    g = noise.grid
    n1 = g.steps + 1
    N = noise.N
    eye = np.eye(N)
    dt = np.result_type(M, float)
    P = np.broadcast_to(eye, (n1, N, N)).astype(dt)
    d = np.broadcast_to(eye, (n1, N, N)).astype(dt).copy()
    d[0] = 0
    diffs = []
    for _ in range(max_iter):
        P_new = eye[None] + _cumtrapz(P, g.h) @ M
        d_new = eye[None] + _cumtrapz(d, g.h) @ M
        d_new[0] = 0
        diff = max(float(np.max(np.abs(P_new - P))), float(np.max(np.abs(d_new - d))))
        diffs.append(diff)
        P, d = P_new, d_new
        if diff <= tol:
            return P, d, diffs
    raise ConvergenceError("linear Picard iteration did not converge", _contraction_diagnostics(diffs))


def picard_solve(problem, tol=1e-12, max_iter=200, max_degree=None, form="raw", init=None):
    """Fixed point of the integral equation on the noise grid.

    ``form="raw"`` integrates Psi_s(A v + lam F(v)); ``form="mild"`` keeps
    e^{A(t-s)} in the kernel and integrates lam Psi_s(F(e^{A(t-s)} v)).
    Linear problems in raw form return a ``LinearTrajectory``.
    """
    wn = problem.noise
    g = wn.grid
    if form == "raw" and problem.is_linear() and init is None:
        P, d, diffs = _linear_picard(problem.total_matrix(), wn, tol, max_iter)
        return LinearTrajectory(wn, P, d, {"iterations": len(diffs), **_contraction_diagnostics(diffs)})
    st = wn.state
    ctx = st.ctx
    nu = wn.ambient_norms()
    N = problem.N
    n1 = g.steps + 1
    W = node_weights(g.steps, g.h)
    eye = np.eye(N)
    initial = [ctx.gen(a) for a in range(wn.N0)] if wn.N0 else None
    if form == "raw":
        base = []
        for i in range(n1):
            b = brownian_images(wn, i)
            if initial is not None:
                b = [x + y for x, y in zip(b, initial)]
            base.append(b)
        vctx = problem.drift.ctx if problem.drift is not None else GeneratorContext(N, "V")
        images = total_drift(problem.A, problem.drift, problem.lam, vctx).images
        efun = None
    elif form == "mild":
        base = [mild_base(wn, problem.A, i) for i in range(n1)]
        images = problem.drift.scale(problem.lam).images
        efun = _semigroup_fun(problem.A, g.h)
    else:
        raise ValueError(f"unknown form {form!r}")
    psi, diffs = picard_nodes(base, images, W, efun, ctx, nu, max_degree, tol, max_iter, init)
    info = {"iterations": len(diffs), "form": form, **_contraction_diagnostics(diffs)}
    return Trajectory(g.nodes(), psi, st, nu, info, initial)


def brownian_images(wn, i):
    """B_{tau_i}(e_a) = sum_{k<i} xi_{k,a} as ambient elements."""
    ctx = wn.state.ctx
    out = []
    for a in range(wn.N):
        terms = {1 << wn.gen_id(k, a): 1.0 for k in range(i)}
        out.append(AlgebraElement(ctx, terms))
    return out


def mild_base(wn, A, i):
    """Psi0(e^{A tau_i} v) + sum_{k<i} xi_k(e^{A(tau_i - s_k)} v) on the grid nodes."""
    ctx = wn.state.ctx
    g = wn.grid
    A = np.asarray(A, dtype=float)
    t = g.node(i)
    N = wn.N
    coef = np.zeros((wn.M, N))
    if wn.N0:
        coef[:wn.N0] = sla.expm(A * (t - g.t0))
    if i:
        mids = g.midpoints()[:i]
        ws = _weights_exp(A, t, mids)
        for k in range(i):
            coef[wn.gen_id(k, 0):wn.gen_id(k, 0) + N] = ws[k]
    return [ctx.linear(coef[:, a]) for a in range(N)]


def _semigroup_fun(A, h):
    A = np.asarray(A, dtype=float)
    cache = {}

    def efun(i, j):
        d = i - j
        if d not in cache:
            cache[d] = sla.expm(A * (d * h))
        return cache[d]

    return efun


# ---------------------------------------------------------------- order-by-order engine

class _SeriesEval:
    """Order-r coefficients of products of coupling series sum_r lam^r Z^(r)[a]."""

    def __init__(self, orders, ctx):
        # orders[a] is the list Z^(0)[a], Z^(1)[a], ...
        self.orders = orders
        self.ctx = ctx
        self.cache = {}

    def mono(self, mask, r):
        if mask == 0:
            return self.ctx.one() if r == 0 else self.ctx.zero()
        key = (mask, r)
        val = self.cache.get(key)
        if val is None:
            top = mask.bit_length() - 1
            rest = mask ^ (1 << top)
            val = self.ctx.zero()
            z = self.orders[top]
            for p in range(min(r, len(z) - 1) + 1):
                if z[p].is_zero():
                    continue
                left = self.mono(rest, r - p)
                if not left.is_zero():
                    val = val + wedge(left, z[p])
            self.cache[key] = val
        return val

    def eval(self, g, r):
        out = self.ctx.zero()
        for m in sorted(g.terms):
            out = out + self.mono(m, r) * g.terms[m]
        return out


def series_fixed_point(base, drift, W, efun, ctx, nu, max_order, stop=None):
    """Coefficients Z^(r) of psi = base + lam sum_j W_ij E_ij^T F(psi_j).

    Z^(0) = base and Z^(r)_i = sum_j W_ij E_ij^T [F(psi_j)]^(r-1).  ``stop(r,
    norm, norm0)`` may end the recursion early.  Returns ``(Z, order_norms)`` with
    ``Z[i][a][r]``.
    """
    n1 = len(base)
    N = len(base[0])
    Z = [[[base[i][a]] for a in range(N)] for i in range(n1)]
    evals = [_SeriesEval(Z[i], ctx) for i in range(n1)]
    norms = [max(_image_norm(base[i], nu) for i in range(n1))]
    for r in range(1, max_order + 1):
        Y = [[evals[j].eval(f, r - 1) for f in drift.images] for j in range(n1)]
        new = _mix(Y, W, efun, ctx)
        for i in range(n1):
            for a in range(N):
                Z[i][a].append(new[i][a])
        norms.append(max(_image_norm(new[i], nu) for i in range(n1)))
        if norms[-1] == 0.0 or (stop is not None and stop(r, norms[-1], norms[0])):
            break
    return Z, norms


def series_mul(a, b, order):
    """Coupling-series product truncated at ``order``."""
    ctx = a[0].ctx
    out = []
    for r in range(order + 1):
        acc = ctx.zero()
        for p in range(r + 1):
            if p < len(a) and r - p < len(b) and not a[p].is_zero() and not b[r - p].is_zero():
                acc = acc + wedge(a[p], b[r - p])
        out.append(acc)
    return out


def series_exp_coupled(x, sign, order):
    """Series of exp(sign * lam * X) where X is itself a coupling series."""
    ctx = x[0].ctx
    shifted = [ctx.zero()] + [c * sign for c in x[:order]]
    out = [ctx.one()] + [ctx.zero() for _ in range(order)]
    term = [ctx.one()] + [ctx.zero() for _ in range(order)]
    for p in range(1, order + 1):
        term = [c * (1.0 / p) for c in series_mul(term, shifted, order)]
        if all(c.is_zero() for c in term):
            break
        out = [u + v for u, v in zip(out, term)]
    return out


class StationaryConfig:
    """Parameters of a stationary solve.

    ``K`` defaults to 4 L; ``order`` fixes the coupling order (default: until
    ``lam^r ||Z^(r)|| <= tol ||Z^(0)||``, at most ``max_order``).  The cost of
    an order grows combinatorially with the ambient generator count, so the
    default cap is low; the size of the last order kept is reported in the
    error budget.  Linear drifts iterate to ``tol`` in at most ``max_iter``
    sweeps.
    """

    def __init__(self, T_trunc=3.0, h=0.1, K=None, tol=1e-10, order=None, max_order=3, check=True,
                 max_iter=500):
        if T_trunc <= 0:
            raise ValueError("T_trunc must be positive")
        if h <= 0:
            raise ValueError("h must be positive")
        self.T_trunc = float(T_trunc)
        self.h = float(h)
        self.K = K
        self.tol = tol
        self.order = order
        self.max_order = max_order
        self.check = check
        self.max_iter = max_iter

    @property
    def steps(self):
        return max(1, int(round(self.T_trunc / self.h)))

    def with_(self, **kw):
        d = dict(T_trunc=self.T_trunc, h=self.h, K=self.K, tol=self.tol, order=self.order,
                 max_order=self.max_order, check=self.check, max_iter=self.max_iter)
        d.update(kw)
        return StationaryConfig(**d)


def stationary_bounds(cfg, drift, A, C):
    """(K, L, lam0, lam_A) for the configuration."""
    spec = OUSpec(A)
    _, L = stationary_norm_bound(A, C)
    K = 4.0 * L if cfg.K is None else float(cfg.K)
    if K < 4.0 * L * (1 - 1e-12):
        raise AdmissibilityError(f"K = {K:.6g} below 4 L = {4 * L:.6g}")
    lam0 = admissible_lambda(K, L, drift.norm(), drift.degree(), spec.lam_A)
    return K, L, lam0, spec.lam_A


class StationaryTrajectory:
    """Coupling-series solution on the nodes of a family; evaluation at any lam."""

    def __init__(self, family, Z, order_norms, lam, info):
        self.family = family
        self.Z = Z
        self.order_norms = order_norms
        self.lam = lam
        self.info = info
        self.times = family.nodes
        self.N = family.N
        self.state = family.state
        self.nu = family.ambient_norms()
        self.order = len(Z[0][0]) - 1
        self._evals = {}

    def __len__(self):
        return len(self.times)

    def _idx(self, i):
        return i % len(self.times)

    def images(self, i=-1, lam=None):
        lam = self.lam if lam is None else lam
        i = self._idx(i)
        out = []
        for a in range(self.N):
            acc = self.state.ctx.zero()
            for r, z in enumerate(self.Z[i][a]):
                acc = acc + z * (lam ** r)
            out.append(acc)
        return out

    def rv(self, i=-1, lam=None):
        return GrassmannRV(self.images(i, lam), self.state, "symbolic", ambient_norms=self.nu)

    def _eval(self, i):
        i = self._idx(i)
        if i not in self._evals:
            self._evals[i] = _SeriesEval(self.Z[i], self.state.ctx)
        return self._evals[i]

    def series_of(self, G, i=-1, order=None):
        """Coupling-series coefficients of G(Psi_i) as ambient elements."""
        order = self.order if order is None else order
        ev = self._eval(i)
        return [ev.eval(G, r) for r in range(order + 1)]

    def moment_coeffs(self, G, i=-1, order=None):
        return [self.state.expect(c) for c in self.series_of(G, i, order)]

    def moment(self, G, i=-1, lam=None, order=None):
        lam = self.lam if lam is None else lam
        return complex(sum(c * lam ** r for r, c in enumerate(self.moment_coeffs(G, i, order))))

    def fixed_point_error(self, G, i=-1, lam=None):
        """Size of the last coupling order kept in omega(G(Psi_i))."""
        lam = self.lam if lam is None else lam
        c = self.moment_coeffs(G, i)
        return abs(c[-1] * lam ** (len(c) - 1)) if len(c) > 1 else 0.0

    def exp_moment_coeffs(self, U, sign, i=-1, order=None):
        """Coefficients of omega(exp(sign lam U(Psi_i))) as a polynomial in lam."""
        order = self.order if order is None else order
        x = self.series_of(U, i, order)
        u0 = [complex(c.scalar_part()) for c in x]
        if any(abs(c) > 0 for c in u0):
            raise ValueError("potential with a scalar part")
        return [self.state.expect(c) for c in series_exp_coupled(x, sign, order)]

    def exp_moment(self, U, sign, i=-1, lam=None):
        lam = self.lam if lam is None else lam
        return sum(c * lam ** r for r, c in enumerate(self.exp_moment_coeffs(U, sign, i)))

    def sup_norm(self, lam=None):
        """Certified bound: L + sup_i ||Psi_i - B_i|| through weighted norms."""
        lam = self.lam if lam is None else lam
        best = 0.0
        for i in range(len(self.times)):
            corr = []
            for a in range(self.N):
                acc = self.state.ctx.zero()
                for r, z in enumerate(self.Z[i][a][1:], start=1):
                    acc = acc + z * (lam ** r)
                corr.append(acc)
            best = max(best, _image_norm(corr, self.nu))
        base = self.info.get("base_bound", self.family.L)
        return base + best

    def contraction(self, lam=None):
        """Measured contraction ||K(B) - Psi|| / ||B - Psi|| of the fixed-point map."""
        lam = abs(self.lam if lam is None else lam)
        # leading ratio of the per-order sup bounds
        if len(self.order_norms) < 3 or self.order_norms[1] == 0:
            return 0.0
        return lam * self.order_norms[2] / self.order_norms[1]


def _order_stop(cfg, lam):
    if cfg.order is not None:
        return None, cfg.order
    lam = abs(lam)

    def stop(r, norm, norm0):
        return norm * lam ** r <= cfg.tol * (norm0 if norm0 > 0 else 1.0)

    return stop, cfg.max_order


class LinearStationaryTrajectory:
    """Stationary solution of a linear drift as coefficient matrices over node generators.

    ``coef[i]`` has shape (M, N): Psi_i(e_a) = sum_m coef[i, m, a] g_m.
    """

    def __init__(self, family, coef, prev, base, lam, info):
        self.family = family
        self.coef = coef
        self.prev = prev
        self.base = base
        self.lam = lam
        self.info = info
        self.times = family.nodes
        self.N = family.N
        self.nu = family.ambient_norms()

    def __len__(self):
        return len(self.times)

    def covariance(self, i=-1, coef=None):
        k = (self.coef if coef is None else coef)[i]
        return k.T @ self.family.sigma @ k

    def _check_lam(self, lam):
        if lam is not None and lam != self.lam:
            raise ValueError("a linear stationary solve is tied to its coupling")

    def moment(self, G, i=-1, lam=None, coef=None):
        self._check_lam(lam)
        st = WickState(self.covariance(i, coef), ctx=G.ctx, tol=1e-8)
        return st.expect(G)

    def fixed_point_error(self, G, i=-1, lam=None):
        return abs(self.moment(G, i, lam) - self.moment(G, i, lam, coef=self.prev))

    def exp_moment(self, U, sign, i=-1, lam=None):
        """omega(exp(sign lam U(Psi_i)))."""
        self._check_lam(lam)
        return self.moment(exp_even(U, sign * self.lam), i)

    def rv(self, i=-1, lam=None):
        self._check_lam(lam)
        st = self.family.state
        if st is None:
            raise ValueError("solve was done without symbolic generators")
        k = self.coef[i]
        return GrassmannRV([st.ctx.linear(k[:, a]) for a in range(self.N)], st, "symbolic", ambient_norms=self.nu)

    def sup_norm(self):
        corr = np.abs(self.coef - self.base)
        per = np.einsum("ima,m->ia", corr, self.nu)
        return self.family.L + float(np.max(np.sqrt(np.sum(per ** 2, axis=1))))


def _stationary_linear(cfg, drift, lam, A, C, t, info):
    steps = cfg.steps
    grid = TimeGrid(t - steps * cfg.h, t, steps)
    M_amb = (steps + 1) * np.asarray(A).shape[0]
    fam = NodeFamily(A, C, grid, symbolic=M_amb <= 128)
    N = fam.N
    n1 = steps + 1
    base = np.zeros((n1, fam.M, N))
    for i in range(n1):
        base[i, fam.gen_id(i, 0):fam.gen_id(i, 0) + N] = np.eye(N)
    W = node_weights(steps, cfg.h)
    efun = _semigroup_fun(A, cfg.h)
    E = np.zeros((n1, n1, N, N))
    for i in range(n1):
        for j in range(n1):
            if W[i, j] != 0:
                E[i, j] = efun(i, j)
    mf = drift.linear_matrix()
    coef = base.astype(np.result_type(mf, float))
    prev = coef
    diffs = []
    for _ in range(cfg.max_iter):
        y = coef @ mf
        new = base + lam * np.einsum("ij,jmb,ijba->ima", W, y, E, optimize=True)
        diffs.append(float(np.max(np.abs(new - coef))))
        prev, coef = coef, new
        if diffs[-1] <= cfg.tol:
            break
    else:
        raise ConvergenceError("linear stationary iteration did not converge", _contraction_diagnostics(diffs))
    info.update({"nodes": n1, "iterations": len(diffs), **_contraction_diagnostics(diffs)})
    ratios = info["ratios"]
    info["contraction"] = max(ratios[:3]) if ratios else 0.0
    traj = LinearStationaryTrajectory(fam, coef, prev, base, lam, info)
    info["sup_norm"] = traj.sup_norm()
    info["in_ball"] = info["sup_norm"] <= info["K"]
    return traj


def stationary_solve(cfg, drift, lam, A, C, t=0.0):
    """Stationary solution of Psi_t = lam int_{t-T}^t Psi_s(F(e^{A(t-s)} v)) ds + B^A_t.

    Nodes tau_i = t - T + i h; the window start carries Psi = B^A.  Raises
    ``AdmissibilityError`` when |lam| exceeds the computed lam0 (unless
    ``cfg.check`` is False).  Linear drifts are iterated on coefficient
    matrices (``LinearStationaryTrajectory``); others are solved order by
    order in the coupling (``StationaryTrajectory``).
    """
    K, L, lam0, lam_A = stationary_bounds(cfg, drift, A, C)
    if cfg.check and abs(lam) > lam0:
        raise AdmissibilityError(f"|lambda| = {abs(lam):.6g} exceeds lambda0 = {lam0:.6g} (K = {K:.6g}, L = {L:.6g})", lam0)
    if drift.is_linear():
        deg = drift.degree()
        info = {"K": K, "L": L, "lambda0": lam0, "lambda_A": lam_A, "F_norm": drift.norm(), "deg": deg,
                "T_trunc": cfg.steps * cfg.h, "h": cfg.h,
                "contraction_bound": (2 * lam0 / lam_A) * deg * drift.norm() if deg else 0.0,
                "lipschitz": (abs(lam) / lam_A) * deg * drift.norm() if deg else 0.0,
                "tail_bound": math.exp(-lam_A * cfg.steps * cfg.h) / lam_A}
        return _stationary_linear(cfg, drift, lam, A, C, t, info)
    steps = cfg.steps
    grid = TimeGrid(t - steps * cfg.h, t, steps)
    fam = NodeFamily(A, C, grid)
    eye = np.eye(fam.N)
    base = [[fam.node_element(i, eye[a]) for a in range(fam.N)] for i in range(steps + 1)]
    W = node_weights(steps, cfg.h)
    efun = _semigroup_fun(A, cfg.h)
    stop, R = _order_stop(cfg, lam)
    Z, norms = series_fixed_point(base, drift, W, efun, fam.state.ctx, fam.ambient_norms(), R, stop)
    deg = drift.degree()
    info = {"K": K, "L": L, "lambda0": lam0, "lambda_A": lam_A, "F_norm": drift.norm(), "deg": deg,
            "T_trunc": steps * cfg.h, "h": cfg.h, "nodes": steps + 1, "order": len(Z[0][0]) - 1,
            "contraction_bound": (2 * lam0 / lam_A) * deg * drift.norm() * (1 + K) ** (deg - 1) if deg else 0.0,
            "lipschitz": (abs(lam) / lam_A) * deg * drift.norm() * (1 + K) ** (deg - 1) if deg else 0.0,
            "tail_bound": math.exp(-lam_A * steps * cfg.h) / lam_A}
    traj = StationaryTrajectory(fam, Z, norms, lam, info)
    traj.info["sup_norm"] = traj.sup_norm()
    traj.info["in_ball"] = traj.info["sup_norm"] <= K
    traj.info["contraction"] = traj.contraction()
    return traj


def forward_from(X_sigma, T, cfg, drift, lam, A, C, t_end=0.0, X_norm=None):
    """Solution started from an independent X at -T, on the nodes of [-T, t_end].

    Psi_t(v) = X(e^{A(t+T)} v) + lam int_{-T}^t Psi_s(F(e^{A(t-s)} v)) ds
               + B^A_t(v) - B^A_{-T}(e^{A(t+T)} v).
    ``X_sigma`` is X's two-point matrix (None for X = 0) and ``X_norm`` its
    generator norm bound.
    """
    K, L, lam0, lam_A = stationary_bounds(cfg, drift, A, C)
    N = np.asarray(A).shape[0]
    if X_sigma is not None:
        X_sigma = np.asarray(X_sigma)
        xn = (1.0 + float(np.linalg.norm(X_sigma, 2))) if X_norm is None else float(X_norm)
        x_bound = xn * math.sqrt(N)
    else:
        x_bound = 0.0
    if x_bound > K / 8 * (1 + 1e-12):
        raise AdmissibilityError(f"||X|| bound {x_bound:.6g} exceeds K/8 = {K / 8:.6g}", lam0)
    if cfg.check and abs(lam) > lam0:
        raise AdmissibilityError(f"|lambda| = {abs(lam):.6g} exceeds lambda0 = {lam0:.6g}", lam0)
    steps = max(1, int(round((t_end + T) / cfg.h)))
    grid = TimeGrid(-T, t_end, steps)
    fam = NodeFamily(A, C, grid, initial=X_sigma, initial_norm=(X_norm if X_sigma is not None else None))
    ctx = fam.state.ctx
    eye = np.eye(N)
    base = []
    for i in range(steps + 1):
        e = fam.semigroup(i)
        row = []
        for a in range(N):
            col = e[:, a]
            el = fam.node_element(i, eye[a]) - fam.node_element(0, col)
            if X_sigma is not None:
                el = el + fam.initial_element(col)
            row.append(el)
        base.append(row)
    W = node_weights(steps, cfg.h)
    stop, R = _order_stop(cfg, lam)
    Z, norms = series_fixed_point(base, drift, W, _semigroup_fun(A, cfg.h), ctx, fam.ambient_norms(), R, stop)
    info = {"K": K, "L": L, "lambda0": lam0, "lambda_A": lam_A, "T": T, "X_bound": x_bound,
            "order": len(Z[0][0]) - 1}
    traj = StationaryTrajectory(fam, Z, norms, lam, info)
    # base images are general linear combinations: bound them directly
    traj.info["base_bound"] = max(_image_norm(b, traj.nu) for b in base)
    traj.info["sup_norm"] = traj.sup_norm()
    traj.info["in_ball"] = traj.info["sup_norm"] <= K
    return traj


# ---------------------------------------------------------------- Ito formula

def _joint_state(cov_t, cross, sigma0):
    """WickState of (Psi_t, Psi0) from the blocks of their joint covariance."""
    N = cov_t.shape[0]
    sig = np.zeros((2 * N, 2 * N), dtype=np.result_type(cov_t, cross, sigma0, complex))
    sig[:N, :N] = cov_t
    sig[:N, N:] = cross
    sig[N:, :N] = -cross.T
    sig[N:, N:] = sigma0
    return WickState(sig, tol=1e-9)


def _embed(a, ctx, offset):
    return AlgebraElement(ctx, {m << offset: c for m, c in a.terms.items()}, prune=False)


def ito_residual(G, H, traj, drift_total, C):
    """r(t) = w(Psi_t(G) Psi0(H)) - w(Psi0(G) Psi0(H)) - int_0^t w(Psi_s(L G) Psi0(H)) ds.

    ``drift_total`` is the full drift v -> A v + lam F(v) over the context of G
    and H.  The time integral uses the trapezoid rule on the trajectory nodes.
    Returns ``(max |r|, r)``.
    """
    LG = generator_apply(G, drift_total, C)
    n1 = len(traj.times)
    f = np.zeros(n1, dtype=complex)
    g = np.zeros(n1, dtype=complex)
    if isinstance(traj, LinearTrajectory):
        N = traj.N
        sigma0 = traj.noise.initial
        for i in range(n1):
            st = _joint_state(traj.covariance(i), traj.cross_initial(i), sigma0)
            h_el = _embed(H, st.ctx, N)
            f[i] = st.expect_product(_embed(G, st.ctx, 0), h_el)
            g[i] = st.expect_product(_embed(LG, st.ctx, 0), h_el)
    else:
        x0 = traj.initial_rv()
        h_img = hom_eval(x0, H)
        for i in range(n1):
            x = traj.rv(i)
            cache = {}
            f[i] = traj.state.expect_product(hom_eval(x, G, cache=cache), h_img)
            g[i] = traj.state.expect_product(hom_eval(x, LG, cache=cache), h_img)
    t = np.asarray(traj.times)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))])
    r = f - f[0] - integral
    return float(np.max(np.abs(r))), r


# ---------------------------------------------------------------- invariant measures

class InvariantReport:
    def __init__(self, residuals, condition, tol):
        self.residuals = residuals
        self.condition = condition
        self.condition_holds = condition <= tol
        self.max_residual = max((abs(v) for v in residuals.values()), default=0.0)


def invariant_residuals(U, A, C, lam=2.0, transpose=False, tol=1e-10):
    """rho(L v_A(Psi0)) for every basis monomial, rho(.) = omega(. e^{-lam U(Psi0)}).

    Psi0 is Gaussian with covariance C_A, the drift is A v - (lam/2) <C d_R U, v>
    and the weight multiplies on the right.  Also returns the commutation
    defect ||A^T C_A - C_A A||.
    """
    if U.parity() not in ("even", "zero"):
        raise ValueError("U must be even")
    ctx = U.ctx
    A = np.asarray(A, dtype=float)
    CA = lyapunov_CA(A, C)
    st = WickState(CA, ctx=ctx, tol=1e-9)
    drift = DriftSpec.from_matrix(A, ctx) + DriftSpec.from_potential(U, C, scale=-lam / 2.0, transpose=transpose)
    weight = exp_even(U, -lam)
    res = {}
    for m in all_monomials(ctx.n):
        mono = AlgebraElement(ctx, {m: 1.0})
        res[m] = st.expect(wedge(generator_apply(mono, drift, np.asarray(C)), weight))
    cond = float(np.max(np.abs(A.T @ CA - CA @ A)))
    return InvariantReport(res, cond, tol)


def moment_flow(U, A, C, masks, lam=2.0, transpose=False):
    """Matrix kappa with rho(L v_A) = sum_B kappa[A, B] rho(v_B) on the given monomials.

    The monomials must span a space closed under L; used for the linear moment
    ODE of the invariant-measure construction.
    """
    ctx = U.ctx
    A = np.asarray(A, dtype=float)
    drift = DriftSpec.from_matrix(A, ctx) + DriftSpec.from_potential(U, C, scale=-lam / 2.0, transpose=transpose)
    pos = {m: k for k, m in enumerate(masks)}
    kappa = np.zeros((len(masks), len(masks)), dtype=complex)
    for k, m in enumerate(masks):
        lg = generator_apply(AlgebraElement(ctx, {m: 1.0}), drift, np.asarray(C))
        for mm, c in lg.terms.items():
            if mm not in pos:
                raise ValueError("monomial set not closed under the generator")
            kappa[k, pos[mm]] += c
    return kappa


# ---------------------------------------------------------------- stochastic quantization

def berezin_expectation(G, U, lam, gaussian):
    """(omega(G(X) e^{-lam U(X)}), omega(e^{-lam U(X)})) by exact expansion.

    ``gaussian`` is a WickState whose generators are X(e_a) (then G and U live
    on its context) or a GrassmannRV X.
    """
    if isinstance(gaussian, WickState):
        if G.ctx is not gaussian.ctx or U.ctx is not gaussian.ctx:
            raise ValueError("G and U must live on the Gaussian's context")
        weight = exp_even(U, -lam)
        return gaussian.expect(wedge(G, weight)), gaussian.expect(weight)
    x = gaussian
    uimg = hom_eval(x, U)
    if x.backend == "symbolic":
        u0 = uimg.scalar_part()
        rest = uimg - uimg.ctx.scalar(u0) if u0 else uimg
        w = exp_nilpotent(rest, -lam) * complex(np.exp(-lam * u0))
        return x.state.expect(wedge(hom_eval(x, G), w)), x.state.expect(w)
    w = sla.expm(-lam * uimg.toarray())
    gimg = hom_eval(x, G).toarray()
    om = x.state.omega
    return complex(np.vdot(om, gimg @ w @ om)), complex(np.vdot(om, w @ om))


def potential_drift(U, C, transpose=False):
    """Coupling-free drift F(v) = -1/2 <C d_R U, v>."""
    return DriftSpec.from_potential(U, C, scale=-0.5, transpose=transpose)


def sq_verify(G, U, lam, cfg, A, C, node=-1, budget=True, transpose=False):
    """Compare omega(G(X) e^{-lam U(X)}) with omega(G(Psi^s_t)) omega(e^{-lam U(X)}).

    The error budget holds a truncation estimate (Aitken extrapolation over
    three windows), a grid estimate (node spacing doubled) and the size of
    the last coupling order kept.
    """
    ctx = U.ctx
    CA = lyapunov_CA(A, C)
    st = WickState(CA, ctx=ctx, tol=1e-9)
    num, Z = berezin_expectation(G, U, lam, st)
    drift = potential_drift(U, C, transpose)
    traj = stationary_solve(cfg, drift, lam, A, C)
    mom = traj.moment(G, node, lam)
    rhs = mom * Z
    out = {"lhs": complex(num), "partition": complex(Z), "rhs": complex(rhs),
           "abs_err": abs(num - rhs), "rel_err": abs(num - rhs) / abs(num) if num else abs(num - rhs),
           "lambda": lam, "lambda0": traj.info["lambda0"], "K": traj.info["K"], "L": traj.info["L"],
           "sup_norm": traj.info["sup_norm"], "in_ball": traj.info["in_ball"],
           "contraction": traj.info["contraction"], "contraction_bound": traj.info["contraction_bound"],
           "nodes": len(traj.times), "trajectory": traj}
    if isinstance(traj, StationaryTrajectory):
        out["order"] = traj.order
        out["moment_coeffs"] = [complex(c) for c in traj.moment_coeffs(G, node)]
    if budget:
        fixed = traj.fixed_point_error(G, node, lam) * abs(Z)
        coarse = stationary_solve(cfg.with_(h=2 * cfg.h), drift, lam, A, C)
        r_coarse = coarse.moment(G, node, lam) * Z
        grid = abs(rhs - r_coarse) / 3.0
        delta = cfg.T_trunc / 3.0
        r1 = stationary_solve(cfg.with_(T_trunc=cfg.T_trunc - 2 * delta), drift, lam, A, C).moment(G, node, lam) * Z
        r2 = stationary_solve(cfg.with_(T_trunc=cfg.T_trunc - delta), drift, lam, A, C).moment(G, node, lam) * Z
        d1, d2 = r2 - r1, rhs - r2
        if abs(d1) > 0 and 0 < abs(d2) < abs(d1):
            q = abs(d2) / abs(d1)
            trunc = abs(d2) * q / (1 - q)
            rate = -math.log(q) / delta
        else:
            trunc, rate = abs(d2), None
        out["budget"] = {"truncation": trunc, "grid": grid, "fixed_point": fixed}
        out["truncation_rate"] = rate
        out["windows"] = [(cfg.T_trunc - 2 * delta, abs(num - r1)), (cfg.T_trunc - delta, abs(num - r2)),
                          (cfg.T_trunc, abs(num - rhs))]
    return out


def reciprocal_product(U, lam, traj, st, node=-1):
    """omega(e^{lam U(Psi^s_t)}) * omega(e^{-lam U(X)}), equal to 1 in exact arithmetic."""
    first = traj.exp_moment(U, +1.0, node, lam)
    _, Z = berezin_expectation(U.ctx.one(), U, lam, st)
    return complex(first * Z)


def log_partition(U, lam_max, n_sigma, cfg, A, C, node=-1, transpose=False):
    """-log omega(e^{-lam U(X)}) against int_0^lam omega(U(Psi^{s,sigma}_t)) d sigma.

    The sigma integral uses Gauss-Legendre nodes; every sigma reuses one
    coupling-series solve.  Returns a dict with the curve on the nodes and the
    endpoint comparison.
    """
    ctx = U.ctx
    CA = lyapunov_CA(A, C)
    st = WickState(CA, ctx=ctx, tol=1e-9)
    drift = potential_drift(U, C, transpose)
    traj = stationary_solve(cfg, drift, lam_max, A, C)
    x, w = np.polynomial.legendre.leggauss(n_sigma)
    sig = 0.5 * lam_max * (x + 1)
    if isinstance(traj, StationaryTrajectory):
        # one coupling series serves every sigma
        coeffs = traj.moment_coeffs(U, node)
        vals = [sum(c * s ** r for r, c in enumerate(coeffs)) for s in sig]
        d0 = coeffs[0]
    else:
        vals = [stationary_solve(cfg, drift, s, A, C).moment(U, node) for s in sig]
        d0 = stationary_solve(cfg, drift, 0.0, A, C).moment(U, node)
    quad = 0.5 * lam_max * sum(wi * v for v, wi in zip(vals, w))
    _, Z = berezin_expectation(ctx.one(), U, lam_max, st)
    oracle = -np.log(complex(Z))
    # curve at the Gauss nodes: oracle -log Z(sigma) vs the integrand there
    curve = []
    for s, v in zip(sig, vals):
        _, z = berezin_expectation(ctx.one(), U, s, st)
        curve.append((float(s), complex(-np.log(complex(z))), complex(v)))
    return {"quadrature": complex(quad), "oracle": complex(oracle), "abs_err": abs(quad - oracle),
            "derivative_at_0": complex(d0), "omega_U": complex(st.expect(U)), "curve": curve,
            "trajectory": traj}
