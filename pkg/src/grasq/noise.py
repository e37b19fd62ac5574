"""Discretized Grassmann white noise, Brownian motion and Ornstein-Uhlenbeck processes.

The noise on a uniform grid is a family of ambient generators xi_{k,a}, one per
cell k and basis vector a, with Wick covariance

    omega(xi_{k,a} xi_{l,b}) = delta_{kl} h C[a, b].

An optional independent initial variable occupies the first block of
generators.  Linear functionals of the family are stored as coefficient
matrices (``GaussianLinear``) so that covariances stay cheap on fine grids;
they are turned into symbolic variables only when the ambient fits the
generator cap.
"""

import math

import numpy as np
import scipy.linalg as sla

from grasq.exterior import AlgebraElement, GeneratorContext, max_generators
from grasq.rv import GrassmannRV
from grasq.wick import CovarianceMatrix, WickState


class SpectralError(ValueError):
    """Raised when A is not stable or the Lyapunov system is singular."""


class GridError(ValueError):
    """Raised for times outside a grid or malformed grids."""


def _corr_matrix(c):
    if isinstance(c, CovarianceMatrix):
        return c.two_point_matrix()
    c = np.asarray(c)
    if np.iscomplexobj(c) and np.max(np.abs(c.imag), initial=0.0) == 0.0:
        c = c.real
    return c


class TimeGrid:
    """Uniform grid t0 < t0 + h < ... < t1 with ``steps`` cells."""

    def __init__(self, t0, t1, steps):
        steps = int(steps)
        if steps <= 0:
            raise GridError("steps must be positive")
        if not t1 > t0:
            raise GridError("t1 must exceed t0")
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.steps = steps
        self.h = (self.t1 - self.t0) / steps

    def __repr__(self):
        return f"TimeGrid({self.t0}, {self.t1}, {self.steps})"

    def nodes(self):
        return self.t0 + self.h * np.arange(self.steps + 1)

    def midpoints(self):
        return self.t0 + self.h * (np.arange(self.steps) + 0.5)

    def node(self, i):
        return self.t0 + self.h * i

    def cell_fractions(self, a, b):
        """Fraction of each cell covered by [a, b] (clipped to the grid)."""
        if a > b:
            raise GridError("interval endpoints out of order")
        eps = 1e-12 * max(1.0, abs(self.t1), abs(self.t0))
        if a < self.t0 - eps or b > self.t1 + eps:
            raise GridError(f"[{a}, {b}] outside the grid [{self.t0}, {self.t1}]")
        left = self.t0 + self.h * np.arange(self.steps)
        lo = np.clip(a, left, left + self.h)
        hi = np.clip(b, left, left + self.h)
        frac = (hi - lo) / self.h
        frac[np.abs(frac) < 1e-12] = 0.0
        frac[np.abs(frac - 1.0) < 1e-12] = 1.0
        return frac


class OUSpec:
    """Stable linear part A with decay rate lam_A = -max Re eig(A)."""

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        self.A = A
        self.lam_A = -float(np.max(np.linalg.eigvals(A).real))
        if self.lam_A <= 0:
            raise SpectralError(f"A is not stable (spectral abscissa {-self.lam_A:.3e})")


# ---------------------------------------------------------------- white noise

class WhiteNoise:
    """Cell generators of a white noise with correlation C on a grid.

    Parameters
    ----------
    corr : array_like or CovarianceMatrix
        Two-point matrix C of the noise, antisymmetric.
    grid : TimeGrid
    initial : array_like, optional
        Two-point matrix of an independent initial variable, placed in the
        first generators.
    initial_norm : float, optional
        Norm bound of the initial generators; default 1 + ||initial||.
    """

    def __init__(self, corr, grid, initial=None, initial_norm=None, label="xi"):
        self.C = _corr_matrix(corr)
        if self.C.ndim != 2 or self.C.shape[0] != self.C.shape[1]:
            raise ValueError("noise correlation must be square")
        if np.max(np.abs(self.C + self.C.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(self.C), initial=0.0)):
            raise ValueError("noise correlation must be antisymmetric")
        self.N = self.C.shape[0]
        self.grid = grid
        self.label = label
        self.initial = None if initial is None else _corr_matrix(initial)
        self.N0 = 0 if self.initial is None else self.initial.shape[0]
        self.offset = self.N0
        self.M = self.N0 + grid.steps * self.N
        cnorm = float(np.linalg.norm(self.C, 2)) if self.N else 0.0
        self.cell_norm = (1.0 + cnorm) * math.sqrt(grid.h)
        if self.initial is not None:
            self.initial_norm = (1.0 + float(np.linalg.norm(self.initial, 2))) if initial_norm is None else initial_norm
        else:
            self.initial_norm = None
        self._state = None

    def gen_id(self, k, a):
        return self.offset + k * self.N + a

    def ambient_norms(self):
        nu = np.full(self.M, self.cell_norm)
        if self.N0:
            nu[:self.N0] = self.initial_norm
        return nu

    def sigma(self):
        blocks = [] if self.initial is None else [self.initial]
        blocks += [self.grid.h * self.C] * self.grid.steps
        return sla.block_diag(*blocks)

    @property
    def state(self):
        """Joint WickState of the initial block and all cells (built lazily)."""
        if self._state is None:
            if self.M > max_generators():
                raise ValueError(f"{self.M} ambient generators exceed the cap; use covariance-level methods")
            ctx = GeneratorContext(self.M, label=self.label, cap=max(self.M, 1))
            self._state = WickState(self.sigma(), ctx)
        return self._state

    def initial_rv(self):
        if self.initial is None:
            raise ValueError("noise family has no initial block")
        st = self.state
        return GrassmannRV(st.ctx.gens()[:self.N0], st, "symbolic", ambient_norms=self.ambient_norms())

    def cell(self, k, vec):
        """xi_k(vec) = sum_a vec[a] xi_{k,a}."""
        coef = np.zeros(self.M, dtype=complex)
        coef[self.gen_id(k, 0):self.gen_id(k, 0) + self.N] = vec
        return self.state.ctx.linear(coef)


class GaussianLinear:
    """Linear functional X(v) = Psi0(init v) + sum_k xi_k(cells[k] v) of a noise family.

    ``init`` has shape (N0, n) and ``cells`` shape (steps, N, n); the variable
    lives over an n-dimensional V.
    """

    def __init__(self, noise, init, cells):
        self.noise = noise
        self.cells = np.asarray(cells)
        self.n = self.cells.shape[2]
        if init is None:
            init = np.zeros((noise.N0, self.n))
        self.init = np.asarray(init)
        if self.init.shape != (noise.N0, self.n):
            raise ValueError("initial coefficients have the wrong shape")

    def compose(self, mat):
        mat = np.asarray(mat)
        return GaussianLinear(self.noise, self.init @ mat, np.einsum("kbn,nm->kbm", self.cells, mat))

    def __add__(self, other):
        if other.noise is not self.noise:
            raise ValueError("variables live on different noise families")
        return GaussianLinear(self.noise, self.init + other.init, self.cells + other.cells)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, s):
        return GaussianLinear(self.noise, self.init * s, self.cells * s)

    def cross(self, other):
        """Matrix of omega(X(e_a) Y(e_b))."""
        wn = self.noise
        out = np.einsum("kai,ab,kbj->ij", self.cells, wn.grid.h * wn.C, other.cells)
        if wn.N0:
            out = out + self.init.T @ wn.initial @ other.init
        return out

    def covariance(self):
        return self.cross(self)

    def coefficients(self):
        """(M, n) matrix of ambient coefficients of X(e_a)."""
        wn = self.noise
        cells = self.cells.reshape(wn.grid.steps * wn.N, self.n)
        return np.vstack([self.init, cells]) if wn.N0 else cells

    def element(self, vec):
        return self.noise.state.ctx.linear(self.coefficients() @ np.asarray(vec))

    def to_rv(self):
        wn = self.noise
        st = wn.state
        coef = self.coefficients()
        images = [st.ctx.linear(coef[:, a]) for a in range(self.n)]
        return GrassmannRV(images, st, "symbolic", ambient_norms=wn.ambient_norms())


def brownian_linear(wn, t):
    """B_t as a GaussianLinear: cells inside [t0, t] with the last one weighted by its fraction."""
    frac = wn.grid.cell_fractions(wn.grid.t0, t)
    cells = frac[:, None, None] * np.eye(wn.N)[None, :, :]
    return GaussianLinear(wn, None, cells)


def brownian(wn, t, v):
    """Ambient element B_t(v) = sum over cells in [t0, t] of xi_k(v), B_{t0} = 0."""
    v = np.asarray(v)
    return brownian_linear(wn, t).element(v)


# ---------------------------------------------------------------- Lyapunov, Van Loan

def spectral_abscissa(A):
    return float(np.max(np.linalg.eigvals(np.asarray(A)).real))


def lyapunov_CA(A, C, tol=1e-10):
    """Solve A^T X + X A = -C by the Kronecker-vectorized linear system."""
    A = np.asarray(A, dtype=float)
    C = _corr_matrix(C)
    n = A.shape[0]
    if spectral_abscissa(A) >= 0:
        raise SpectralError("A must have spectrum in the open left half plane")
    eye = np.eye(n)
    # vec(A^T X + X A) = (I (x) A^T + A^T (x) I) vec(X) in column-major order
    kron = np.kron(eye, A.T) + np.kron(A.T, eye)
    if np.linalg.cond(kron) > 1e14:
        raise SpectralError("Lyapunov system is singular (eigenvalue sums vanish)")
    x = np.linalg.solve(kron, -C.reshape(-1, order="F")).reshape(n, n, order="F")
    res = A.T @ x + x @ A + C
    scale = max(1.0, float(np.max(np.abs(C), initial=0.0)))
    if np.max(np.abs(res)) > tol * scale * max(1.0, np.linalg.cond(kron)) * 1e2:
        raise SpectralError("Lyapunov residual too large")
    return x


def lyapunov_residual(A, C, X):
    A = np.asarray(A)
    return float(np.max(np.abs(A.T @ X + X @ A + _corr_matrix(C))))


def van_loan_integral(A, C, t):
    """int_0^t e^{A^T s} C e^{A s} ds via one block matrix exponential."""
    A = np.asarray(A, dtype=float)
    C = _corr_matrix(C)
    n = A.shape[0]
    # short pieces keep e^{-A^T s} bounded; compose with
    # I(a + b) = I(a) + e^{A^T a} I(b) e^{A a}
    pieces = max(1, int(math.ceil(t * max(float(np.linalg.norm(A, 2)), 1e-300))))
    dt = t / pieces
    big = np.zeros((2 * n, 2 * n), dtype=np.result_type(A, C))
    big[:n, :n] = -A.T
    big[:n, n:] = C
    big[n:, n:] = A
    f = sla.expm(big * dt)
    e = f[n:, n:]
    piece = e.T @ f[:n, n:]
    total = np.zeros_like(piece)
    prop = np.eye(n)
    for _ in range(pieces):
        total = total + prop.T @ piece @ prop
        prop = e @ prop
    return total


def ou_cross_closed(A, C, sigma0, s, t):
    """omega(Psi_s(e_i) Psi_t(e_j)) for the OU solution started from sigma0 at time 0."""
    A = np.asarray(A, dtype=float)
    es = sla.expm(A * s)
    et = sla.expm(A * t)
    out = es.T @ _corr_matrix(sigma0) @ et
    m = min(s, t)
    core = van_loan_integral(A, C, m)
    # int_0^m e^{A^T (s-r)} C e^{A (t-r)} dr = e^{A^T (s-m)} core e^{A (t-m)}
    return out + sla.expm(A.T * (s - m)) @ core @ sla.expm(A * (t - m))


# ---------------------------------------------------------------- OU processes

def _weights_exp(A, t, mids):
    """e^{A (t - s_k)} for each midpoint, shape (K, N, N)."""
    w, vec = np.linalg.eig(A)
    cond = np.linalg.cond(vec)
    if cond < 1e8:
        inv = np.linalg.inv(vec)
        lam = np.exp(np.outer(t - mids, w))
        out = np.einsum("ij,kj,jl->kil", vec, lam, inv)
        return out.real if np.isrealobj(A) else out
    return np.stack([sla.expm(A * (t - s)) for s in mids])


def ou_linear(wn, A, t, with_initial=True):
    """GaussianLinear form of Psi_t(v) = Psi0(e^{A t} v) + Xi(1_{[t0,t]} e^{A(t-.)} v).

    The noise integral uses the midpoint weight e^{A(t - s_k)} per cell; a
    partially covered last cell uses its own midpoint and its fraction.
    """
    A = np.asarray(A, dtype=float)
    g = wn.grid
    frac = g.cell_fractions(g.t0, t)
    left = g.t0 + g.h * np.arange(g.steps)
    mids = left + 0.5 * g.h * frac
    cells = _weights_exp(A, t, mids) * frac[:, None, None]
    init = None
    if wn.N0 and with_initial:
        init = sla.expm(A * (t - g.t0))
    return GaussianLinear(wn, init, cells)


def ou_exact(psi0, wn, A, t):
    """OU solution at time t as a symbolic GrassmannRV.

    ``psi0`` is None (use the initial block of ``wn``, or zero) or a
    GrassmannRV on ``wn.state``.
    """
    if psi0 is None:
        return ou_linear(wn, A, t).to_rv()
    if psi0.state is not wn.state:
        raise ValueError("initial variable must live on the noise family's state")
    noise = ou_linear(wn, A, t, with_initial=False).to_rv()
    shifted = psi0.compose(sla.expm(np.asarray(A, dtype=float) * (t - wn.grid.t0)))
    return GrassmannRV([a + b for a, b in zip(shifted.images, noise.images)], wn.state,
                       "symbolic", ambient_norms=wn.ambient_norms())


def ou_stationary(wn, A, t, T_trunc):
    """Stationary OU at t from the cells in [t - T_trunc, t] (GaussianLinear).

    The attribute ``tail_bound`` holds e^{-lam_A T}/lam_A, a bound for the
    discarded part of the integral.
    """
    if T_trunc <= 0:
        raise GridError("truncation window must be positive")
    spec = OUSpec(A)
    g = wn.grid
    frac_all = g.cell_fractions(g.t0, t)
    frac_lo = g.cell_fractions(g.t0, t - T_trunc) if t - T_trunc > g.t0 else np.zeros(g.steps)
    frac = frac_all - frac_lo
    left = g.t0 + g.h * np.arange(g.steps)
    lo = left + g.h * frac_lo
    mids = lo + 0.5 * g.h * frac
    cells = _weights_exp(spec.A, t, mids) * frac[:, None, None]
    out = GaussianLinear(wn, None, cells)
    out.tail_bound = math.exp(-spec.lam_A * T_trunc) / spec.lam_A
    return out


def truncation_window(A, tol):
    """Smallest T with e^{-lam_A T} <= 0.01 tol."""
    lam = OUSpec(A).lam_A
    return math.log(100.0 / tol) / lam


# ---------------------------------------------------------------- stationary node family

def stationary_norm_bound(A, C):
    """Per-basis norm bounds of B^A_t(e_a) and L = sup_|v|=1 of the bound.

    With P solving A^T P + P A = -I, ||B^A_t(v)|| <= (1 + ||C||) sqrt(v^T P v).
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    kron = np.kron(eye, A.T) + np.kron(A.T, eye)
    p = np.linalg.solve(kron, -eye.reshape(-1, order="F")).reshape(n, n, order="F")
    p = 0.5 * (p + p.T)
    cn = 1.0 + float(np.linalg.norm(_corr_matrix(C), 2))
    nu = cn * np.sqrt(np.clip(np.diag(p), 0.0, None))
    L = cn * math.sqrt(max(float(np.max(np.linalg.eigvalsh(p))), 0.0))
    return nu, L


def stationary_two_time(A, CA, s, t):
    """omega(B^A_s(e_i) B^A_t(e_j)) for the stationary OU."""
    A = np.asarray(A, dtype=float)
    if s >= t:
        return sla.expm(A.T * (s - t)) @ CA
    return CA @ sla.expm(A * (t - s))


class NodeFamily:
    """Joint Gaussian of the stationary OU at grid nodes, plus an optional initial block.

    Generator ``offset + i N + a`` is B^A_{tau_i}(e_a).  With ``initial`` the
    first block is an independent variable X with the given two-point matrix.
    ``symbolic=False`` keeps only the covariance matrix ``sigma`` and skips the
    generator cap, for solvers that work with coefficient matrices.
    """

    def __init__(self, A, C, grid, initial=None, initial_norm=None, label="B", cap=None, symbolic=True):
        self.A = np.asarray(A, dtype=float)
        self.C = _corr_matrix(C)
        self.N = self.A.shape[0]
        self.grid = grid
        self.spec = OUSpec(self.A)
        self.CA = lyapunov_CA(self.A, self.C)
        self.nodes = grid.nodes()
        n_nodes = len(self.nodes)
        self.initial = None if initial is None else _corr_matrix(initial)
        self.N0 = 0 if self.initial is None else self.initial.shape[0]
        self.offset = self.N0
        self.M = self.N0 + n_nodes * self.N
        limit = max_generators() if cap is None else cap
        if symbolic and self.M > limit:
            raise ValueError(f"{self.M} generators exceed the cap of {limit}")
        N = self.N
        dt = np.result_type(self.CA, self.C, float)
        sig = np.zeros((self.M, self.M), dtype=dt)
        if self.N0:
            sig[:self.N0, :self.N0] = self.initial
        # e^{A^T d} for node spacings d = m h
        h = grid.h
        step = sla.expm(self.A.T * h)
        powers = [np.eye(N)]
        for _ in range(1, n_nodes):
            powers.append(powers[-1] @ step)
        lower = np.array([p @ self.CA for p in powers])
        upper = np.array([self.CA @ p.T for p in powers])
        idx = np.arange(n_nodes)
        diff = idx[:, None] - idx[None, :]
        blocks = np.where((diff >= 0)[:, :, None, None], lower[np.abs(diff)], upper[np.abs(diff)])
        sig[self.offset:, self.offset:] = blocks.transpose(0, 2, 1, 3).reshape(n_nodes * N, n_nodes * N)
        self.powers = powers
        self.sigma = sig
        self.state = None
        if symbolic:
            ctx = GeneratorContext(self.M, label=label, cap=max(self.M, 1))
            self.state = WickState(sig, ctx, tol=1e-10)
        self.node_norms, self.L = stationary_norm_bound(self.A, self.C)
        if self.N0:
            self.initial_norm = (1.0 + float(np.linalg.norm(self.initial, 2))) if initial_norm is None else initial_norm

    def gen_id(self, i, a):
        return self.offset + i * self.N + a

    def ambient_norms(self):
        nu = np.tile(self.node_norms, len(self.nodes))
        if self.N0:
            nu = np.concatenate([np.full(self.N0, self.initial_norm), nu])
        return nu

    def semigroup(self, d_steps):
        """e^{A d h} for a non-negative number of node spacings."""
        return self.powers[d_steps].T

    def node_element(self, i, vec):
        vec = np.asarray(vec)
        terms = {}
        for a, c in enumerate(vec):
            if c != 0:
                terms[1 << self.gen_id(i, a)] = complex(c)
        return AlgebraElement(self.state.ctx, terms)

    def initial_element(self, vec):
        vec = np.asarray(vec)
        terms = {1 << a: complex(c) for a, c in enumerate(vec) if c != 0}
        return AlgebraElement(self.state.ctx, terms)

    def node_rv(self, i):
        images = [self.node_element(i, np.eye(self.N)[a]) for a in range(self.N)]
        return GrassmannRV(images, self.state, "symbolic", ambient_norms=self.ambient_norms())


# ---------------------------------------------------------------- quadrature

_GREGORY = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])


def _lagrange_weights(m, upto):
    """Weights on nodes 0..m (unit spacing) integrating the interpolant over [0, upto]."""
    x = np.arange(m + 1, dtype=float)
    vander = np.vander(x, m + 1, increasing=True).T
    moments = np.array([upto ** (p + 1) / (p + 1) for p in range(m + 1)])
    return np.linalg.solve(vander, moments)


def node_weights(n, h):
    """Cumulative quadrature matrix W with sum_j W[i, j] f(tau_j) ~ int_{tau_0}^{tau_i} f.

    Rows with at least six nodes use the trapezoid rule with third-order
    Gregory end corrections; shorter spans integrate the interpolant through
    nodes 0..min(n, max(i, 3)).  All rows are exact for cubics when n >= 3.
    """
    W = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        if i >= 5:
            w = np.ones(i + 1)
            w[:3] = _GREGORY
            w[-3:] = _GREGORY[::-1]
            W[i, :i + 1] = w
        else:
            m = min(n, max(i, 3))
            W[i, :m + 1] = _lagrange_weights(m, float(i))
    return W * h
