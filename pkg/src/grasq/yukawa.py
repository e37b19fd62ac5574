"""Galerkin Yukawa model on a periodic square: Fourier-mode Grassmann Gaussians.

Modes k in Lambda_N = {k in Z^2 : |k| <= N} carry four generators each,
theta_a(k), a = 0..3, with components 0, 1 the field psi and 2, 3 the field
psibar (independent, no conjugation relation).  The orthonormal basis is
e_k(x) = exp(i k.x / R) / (2 pi R) on the square of side 2 pi R.

Two-point matrix of the mode generators:

    omega(theta(k) theta(l)) = delta_{k+l=0} M(l),
    M(l) = [[0, D(l)^{-1}], [-D(-l)^{-T}, 0]],   D(l) = i (l1 g1 + l2 g2) / R + m_f.

The UV multiplier a(eps k) scales each mode; the Gaussian used for the
stochastic-quantization identity is the regularized one.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from grasq.exterior import GeneratorContext, wedge
from grasq.sde import (StationaryConfig, berezin_expectation, potential_drift, sq_verify,
                       stationary_bounds)
from grasq.wick import WickState

GAMMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
GAMMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)


# ---------------------------------------------------------------- data

def profile_function(name):
    """UV multiplier a(xi) with a(0) = 1."""
    if name == "gaussian":
        return lambda xi: math.exp(-0.5 * xi * xi)
    if name == "bump":
        return lambda xi: math.exp(1.0 - 1.0 / (1.0 - xi * xi)) if abs(xi) < 1 else 0.0
    if name == "none":
        return lambda xi: 1.0
    raise ValueError(f"unknown profile {name!r}")


@dataclass
class TorusSpec:
    """Torus of side 2 pi R, mode cutoff |k| <= cutoff, masses and UV regularization.

    ``h`` is None (h = 1, exact mode-space potential) or a callable h(x1, x2)
    sampled on a ``quad_points`` x ``quad_points`` grid.
    """

    R: float = 1.0
    cutoff: float = 0.0
    m_f: float = 1.0
    m_b: float = 1.0
    eps: float = 0.0
    profile: str = "gaussian"
    h: object = None
    quad_points: int = 0
    green_cutoff: int = 0

    def __post_init__(self):
        if not self.m_f > 0 or not self.m_b > 0:
            raise ValueError("masses m_f and m_b must be positive")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.cutoff < 0:
            raise ValueError("cutoff must be non-negative")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        a = profile_function(self.profile)
        if abs(a(0.0) - 1.0) > 1e-15:
            raise ValueError("profile must satisfy a(0) = 1")
        self.multiplier = a

    def modes(self):
        """Lambda_N in canonical order: by |k|^2, then lexicographic."""
        n = int(math.floor(self.cutoff))
        ks = [(k1, k2) for k1 in range(-n, n + 1) for k2 in range(-n, n + 1)
              if k1 * k1 + k2 * k2 <= self.cutoff ** 2 + 1e-12]
        return sorted(ks, key=lambda k: (k[0] ** 2 + k[1] ** 2, k))

    def mode_factor(self, k):
        return self.multiplier(self.eps * math.hypot(*k) / self.R)

    def volume(self):
        return (2 * math.pi * self.R) ** 2


@dataclass
class DiracData:
    gamma1: np.ndarray = field(default_factory=lambda: GAMMA1.copy())
    gamma2: np.ndarray = field(default_factory=lambda: GAMMA2.copy())

    def anticommutators(self):
        g = [self.gamma1, self.gamma2]
        return np.array([[g[a] @ g[b] + g[b] @ g[a] for b in range(2)] for a in range(2)])

    def clifford_residual(self):
        ac = self.anticommutators()
        target = np.array([[2 * np.eye(2) * (a == b) for b in range(2)] for a in range(2)])
        herm = max(np.max(np.abs(g - g.conj().T)) for g in (self.gamma1, self.gamma2))
        return float(max(np.max(np.abs(ac - target)), herm))

    def slash(self, k, R):
        return (k[0] * self.gamma1 + k[1] * self.gamma2) / R

    def dirac_symbol(self, k, R, m_f):
        """D(k) = i kslash / R + m_f."""
        return 1j * self.slash(k, R) + m_f * np.eye(2)


J4 = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])


class ModeGaussian:
    """Mode generators, the raw two-point matrix and its regularization."""

    def __init__(self, spec, dirac=None, label="theta", cap=None):
        self.spec = spec
        self.dirac = DiracData() if dirac is None else dirac
        self.modes = spec.modes()
        self.index = {k: i for i, k in enumerate(self.modes)}
        n = 4 * len(self.modes)
        self.n = n
        self.ctx = GeneratorContext(n, label=label, cap=cap)
        self.sigma_raw = np.zeros((n, n), dtype=complex)
        for k in self.modes:
            l = (-k[0], -k[1])
            if l not in self.index:
                raise ValueError("mode set must be symmetric under k -> -k")
            blk = self.block(l)
            i, j = 4 * self.index[k], 4 * self.index[l]
            self.sigma_raw[i:i + 4, j:j + 4] = blk
        mult = np.repeat([spec.mode_factor(k) for k in self.modes], 4)
        self.multipliers = mult
        self.sigma = self.sigma_raw * np.outer(mult, mult)

    def block(self, l):
        """M(l) = [[0, D(l)^{-1}], [-D(-l)^{-T}, 0]]."""
        R, m = self.spec.R, self.spec.m_f
        d = np.linalg.inv(self.dirac.dirac_symbol(l, R, m))
        dm = np.linalg.inv(self.dirac.dirac_symbol((-l[0], -l[1]), R, m))
        z = np.zeros((2, 2))
        return np.block([[z, d], [-dm.T, z]])

    def gen_id(self, k, a):
        return 4 * self.index[tuple(k)] + a

    def antisymmetry_residual(self):
        return float(np.max(np.abs(self.sigma + self.sigma.T)))

    def inversion_residual(self):
        """max_k ||D(k) D(k)^{-1} - I|| over the modes."""
        R, m = self.spec.R, self.spec.m_f
        worst = 0.0
        for k in self.modes:
            d = self.dirac.dirac_symbol(k, R, m)
            worst = max(worst, float(np.max(np.abs(d @ np.linalg.inv(d) - np.eye(2)))))
        return worst

    def support_violation(self):
        """Largest |omega(theta(k) theta(l))| with k + l != 0."""
        worst = 0.0
        for k in self.modes:
            for l in self.modes:
                if k[0] + l[0] == 0 and k[1] + l[1] == 0:
                    continue
                i, j = 4 * self.index[k], 4 * self.index[l]
                worst = max(worst, float(np.max(np.abs(self.sigma[i:i + 4, j:j + 4]))))
        return worst

    def state(self, regularized=True):
        return WickState(self.sigma if regularized else self.sigma_raw, ctx=self.ctx, tol=1e-12)

    def drift_matrix(self):
        """A = -diag(m_f^2 + |k / R|^2) on each mode block."""
        d = [-(self.spec.m_f ** 2 + (k[0] ** 2 + k[1] ** 2) / self.spec.R ** 2) for k in self.modes]
        return np.diag(np.repeat(d, 4))

    def noise_matrix(self):
        """C = -(A^T Sigma + Sigma A), so that the stationary covariance is Sigma."""
        A = self.drift_matrix()
        return -(A.T @ self.sigma + self.sigma @ A)


def build_mode_gaussian(spec, dirac=None, cap=None):
    g = ModeGaussian(spec, dirac, cap=cap)
    if g.antisymmetry_residual() > 1e-12:
        raise ValueError("mode covariance is not antisymmetric")
    return g, g.state()


# ---------------------------------------------------------------- fields and potential

def basis_value(spec, k, x):
    return complex(np.exp(1j * (k[0] * x[0] + k[1] * x[1]) / spec.R)) / (2 * math.pi * spec.R)


def field_eval(g, x):
    """psi(x) = sum_k e_k(x) theta(k) as four linear elements."""
    out = []
    for a in range(4):
        vec = np.zeros(g.n, dtype=complex)
        for k in g.modes:
            vec[g.gen_id(k, a)] = basis_value(g.spec, k, x)
        out.append(g.ctx.linear(vec))
    return out


def two_point_modes(g, x, y, regularized=True):
    """omega(psi_a(x) psi_b(y)) from the mode sum of the block kernels."""
    sig = g.sigma if regularized else g.sigma_raw
    out = np.zeros((4, 4), dtype=complex)
    for k in g.modes:
        l = (-k[0], -k[1])
        i, j = 4 * g.index[k], 4 * g.index[l]
        out += basis_value(g.spec, k, x) * basis_value(g.spec, l, y) * sig[i:i + 4, j:j + 4]
    return out


def density_modes(g):
    """rho_{kl} = sum_a theta_a(k) thetabar_a(l) (psi psibar ordering)."""
    rho = {}
    for k in g.modes:
        for l in g.modes:
            rho[(k, l)] = (g.ctx.monomial([g.gen_id(k, 0), g.gen_id(l, 2)])
                           + g.ctx.monomial([g.gen_id(k, 1), g.gen_id(l, 3)]))
    return rho


def green_symbol(spec, q):
    return 1.0 / (spec.m_b ** 2 + (q[0] ** 2 + q[1] ** 2) / spec.R ** 2)


def potential_V(g):
    """Quartic non-local potential int int h h (psi psibar)(x) G(x - y) (psi psibar)(y).

    With h = 1 the integrand is a trigonometric polynomial and the integral is
    done exactly in mode space:

        V = (2 pi R)^{-2} sum_{k+l+k'+l'=0} Ghat(k+l) rho_{kl} rho_{k'l'}.

    Otherwise ``potential_quadrature`` is used.
    """
    if g.spec.h is not None:
        return potential_quadrature(g)
    spec = g.spec
    rho = density_modes(g)
    pairs = {}
    for (k, l), r in rho.items():
        q = (k[0] + l[0], k[1] + l[1])
        pairs.setdefault(q, []).append(r)
    out = g.ctx.zero()
    for q, left in pairs.items():
        qm = (-q[0], -q[1])
        if qm not in pairs:
            continue
        a = g.ctx.zero()
        for r in left:
            a = a + r
        b = g.ctx.zero()
        for r in pairs[qm]:
            b = b + r
        out = out + wedge(a, b) * green_symbol(spec, q)
    return out * (1.0 / spec.volume())


def potential_quadrature(g, points=None, green_cutoff=None):
    """Tensor-grid quadrature of the potential with a sampled spatial cutoff h.

    The trapezoid rule on ``points`` x ``points`` nodes is exact for the
    trigonometric integrand when h = 1 and points > 4 N; the Green's function
    is the mode sum truncated at |q| <= ``green_cutoff`` (default 2 N, exact
    for h = 1).
    """
    spec = g.spec
    n = int(math.floor(spec.cutoff))
    points = (spec.quad_points or 4 * n + 1) if points is None else points
    qmax = (spec.green_cutoff or 2 * n) if green_cutoff is None else green_cutoff
    L = 2 * math.pi * spec.R
    xs = [(-math.pi * spec.R + L * (i + 0.5) / points) for i in range(points)]
    grid = [(a, b) for a in xs for b in xs]
    w = (L / points) ** 2
    hfun = spec.h if spec.h is not None else (lambda x1, x2: 1.0)
    qs = [(q1, q2) for q1 in range(-qmax, qmax + 1) for q2 in range(-qmax, qmax + 1)]

    def green(dx):
        return sum(green_symbol(spec, q) * np.cos((q[0] * dx[0] + q[1] * dx[1]) / spec.R) for q in qs) / L ** 2

    dens = []
    for x in grid:
        psi = field_eval(g, x)
        dens.append((wedge(psi[0], psi[2]) + wedge(psi[1], psi[3])) * hfun(*x))
    out = g.ctx.zero()
    for i, x in enumerate(grid):
        acc = g.ctx.zero()
        for j, y in enumerate(grid):
            acc = acc + dens[j] * green((x[0] - y[0], x[1] - y[1]))
        out = out + wedge(dens[i], acc) * (w * w)
    return out


def zero_mode_potential(spec):
    """Hand computation for Lambda = {0}: V = (2 pi R)^{-2} m_b^{-2} (t0 t2 + t1 t3)^2 = 2 c t0 t2 t1 t3."""
    ctx = GeneratorContext(4, label="theta0")
    c = 1.0 / (spec.volume() * spec.m_b ** 2)
    return ctx, ctx.monomial([0, 2, 1, 3], 2 * c)


# ---------------------------------------------------------------- stochastic quantization

class YukawaModel:
    """Gaussian, potential and the Galerkin equation data for one TorusSpec."""

    def __init__(self, spec, cap=None):
        self.spec = spec
        self.gauss = ModeGaussian(spec, cap=cap)
        self.ctx = self.gauss.ctx
        self.V = potential_V(self.gauss)
        # e^{lam V} = e^{-lam U}
        self.U = self.V * -1.0
        self.A = self.gauss.drift_matrix()
        self.C = self.gauss.noise_matrix()
        self.drift = potential_drift(self.U, self.C)
        self.lambda_A = float(min(-np.diag(self.A)))

    def bounds(self, cfg):
        return stationary_bounds(cfg, self.drift, self.A, self.C)

    def lambda0(self, cfg=None):
        return self.bounds(cfg or StationaryConfig())[2]

    def test_vector(self, k, a):
        v = np.zeros(self.gauss.n, dtype=complex)
        v[self.gauss.gen_id(k, a)] = 1.0
        return v

    def schwinger_element(self, vecs):
        """psi(f_1) ... psi(f_k) with psi(f) = sum_i f_i theta_i."""
        out = self.ctx.one()
        for v in vecs:
            out = wedge(out, self.ctx.linear(v))
        return out

    def gibbs(self, G, lam, order=None):
        """(omega(G e^{lam V}), omega(e^{lam V})) by exact finite expansion.

        With ``order`` the exponential is cut after lam^order / order!; this is
        what keeps 36 generators tractable (V^2 already has ~6e5 terms).
        """
        st = self.gauss.state()
        if order is None:
            return berezin_expectation(G, self.U, lam, st)
        num, Z = st.expect(G), 1.0 + 0j
        power, fact = self.ctx.one(), 1.0
        for n in range(1, order + 1):
            power = wedge(power, self.V)
            fact *= n
            num += lam ** n / fact * st.expect(wedge(G, power))
            Z += lam ** n / fact * st.expect(power)
        return complex(num), complex(Z)


def sqe_galerkin(model, lam, cfg):
    """Stationary Galerkin solution through the generic stationary solver."""
    from grasq.sde import stationary_solve

    return stationary_solve(cfg, model.drift, lam, model.A, model.C)


def schwinger_compare(model, lam, vecs, cfg, node=-1, budget=True):
    """omega(psi(f_1)...psi(f_k) e^{lam V}) against omega(Psi(f_1)...Psi(f_k)) omega(e^{lam V})."""
    G = model.schwinger_element(vecs)
    res = sq_verify(G, model.U, lam, cfg, model.A, model.C, node=node, budget=budget)
    if abs(res["partition"]) < 1e-300:
        raise ZeroDivisionError("partition function vanishes")
    return res


def two_time_state(A, CA, u, ctx=None):
    """WickState of (B_{t-u}, B_t): generators 0..N-1 at t - u, N..2N-1 at t."""
    from scipy.linalg import expm

    X = CA @ expm(np.asarray(A, dtype=float) * u)
    sig = np.block([[CA, X], [-X.T, CA]])
    return WickState(sig, ctx=ctx, tol=1e-9)


def first_order_schwinger(model, vecs, panels=None, panel_nodes=10, horizon=20.0):
    """Order-lam expansion of omega(Psi_t(f_1) ... Psi_t(f_k)) for the stationary solution.

    Psi_t(v) = B_t(v) + lam int_0^inf B_{t-u}(F(e^{A u} v)) du + O(lam^2): the
    first-order term only needs the joint law of (B_{t-u}, B_t), i.e. 2N
    generators, so it stays below the generator cap at any mode count.  The
    u-integral uses composite Gauss-Legendre panels on [0, horizon / lambda_A].

    Returns (zeroth, first): the moment is zeroth + lam * first + O(lam^2).
    """
    N = model.gauss.n
    A = model.A
    CA = model.gauss.sigma
    lamA = model.lambda_A
    top = horizon / lamA
    panels = panels or int(math.ceil(top * lamA * 4))
    x, w = np.polynomial.legendre.leggauss(panel_nodes)
    edges = np.linspace(0.0, top, panels + 1)
    big = GeneratorContext(2 * N, label="BB", cap=2 * N)
    st0 = WickState(CA, ctx=model.ctx, tol=1e-9)
    zeroth = st0.expect(model.schwinger_element(vecs))
    fimages = model.drift.images
    diag = np.diag(A)

    def lin(v, off):
        vec = np.zeros(2 * N, dtype=complex)
        vec[off:off + N] = v
        return big.linear(vec)

    def shifted(a):
        # element on the t - u block (generators 0..N-1)
        from grasq.exterior import AlgebraElement
        return AlgebraElement(big, dict(a.terms), prune=False)

    first = 0.0
    for p in range(panels):
        a, b = edges[p], edges[p + 1]
        for xi, wi in zip(x, w):
            u = 0.5 * (b - a) * xi + 0.5 * (a + b)
            st = two_time_state(A, CA, u, big)
            decay = np.exp(diag * u)
            val = 0.0
            for j in range(len(vecs)):
                ev = decay * vecs[j]
                fv = model.ctx.zero()
                for c_idx, c in enumerate(ev):
                    if c != 0:
                        fv = fv + fimages[c_idx] * c
                term = big.one()
                for i, v in enumerate(vecs):
                    term = wedge(term, shifted(fv) if i == j else lin(v, N))
                val += st.expect(term)
            first += 0.5 * (b - a) * wi * val
    return complex(zeroth), complex(first)


def first_order_compare(model, lam, vecs, **quad):
    """Gibbs-side Schwinger function against its first-order stationary expansion.

    Compares omega(G e^{lam V}) / omega(e^{lam V}) with zeroth + lam * first and
    repeats at lam / 2; a remainder ratio near 4 shows the discrepancy is
    the O(lam^2) term.
    """
    G = model.schwinger_element(vecs)
    zeroth, first = first_order_schwinger(model, vecs, **quad)

    def disc(l):
        num, Z = model.gibbs(G, l)
        exact = num / Z
        return exact, abs(exact - (zeroth + l * first))

    exact, d1 = disc(lam)
    _, d2 = disc(0.5 * lam)
    return {"exact": complex(exact), "first_order": complex(zeroth + lam * first), "zeroth": zeroth,
            "first": first, "abs_err": d1, "rel_err": d1 / abs(exact) if exact else d1,
            "abs_err_half": d2, "remainder_ratio": d1 / d2 if d2 else math.inf, "lambda": lam}


def remainder_bound(model, lam, cfg):
    """Certified (worst-case) bound on the O(lam^2) remainder of a unit 2-point function."""
    K, L, lam0, lamA = model.bounds(cfg)
    deg = model.drift.degree()
    fn = model.drift.norm()
    m = fn * (1 + K) ** deg / lamA
    ell = deg * fn * (1 + K) ** (deg - 1) / lamA
    return lam * lam * (ell * m * 2 * K + m * m)


def n_sweep(specs, vecs_for, lam, order=None):
    """Schwinger functions of a fixed test set across mode cutoffs.

    ``vecs_for(model)`` builds the test vectors in each mode basis.  The
    Gibbs side is the exact finite expansion; returns values and the
    discrepancies between consecutive cutoffs.  ``order`` truncates the
    coupling series uniformly across cutoffs (needed at 36 generators).
    """
    rows = []
    for spec in specs:
        model = YukawaModel(spec)
        G = model.schwinger_element(vecs_for(model))
        num, Z = model.gibbs(G, lam, order=order)
        rows.append({"modes": len(model.gauss.modes), "generators": model.gauss.n, "value": complex(num / Z)})
    for a, b in zip(rows, rows[1:]):
        b["discrepancy"] = abs(b["value"] - a["value"])
    return rows
