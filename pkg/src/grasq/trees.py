"""Planar ternary tree expansion of cubic-drift equations and the scalar majorant method.

With A = -I and a cubic drift F(v_a) = sum c[a, b, c, d] v_b v_c v_d the mild
equation

    Psi_t(v) = Phi_t(v) + lam int_0^t e^{-(t-s)} Psi_s(F(v)) ds

is expanded by iterating the right-hand side: Psi = sum_tau lam^{|I(tau)|} J_tau,
one term per planar tree with ternary branching.  All time integrals use the
node quadrature of the Picard engine, so every partial sum is the exact
lam-expansion of the discrete fixed point.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from grasq.exterior import weighted_norm, wedge
from grasq.fock import DENSE_CAP, _grading, _vacuum, creation_operators, DenseRep
from grasq.noise import TimeGrid, WhiteNoise, lyapunov_CA, node_weights
from grasq.rv import op_norm
from grasq.rng import SplitMix64
from grasq.sde import DriftSpec, SDEProblem, mild_base, picard_solve, series_fixed_point, _semigroup_fun


# ---------------------------------------------------------------- trees

@dataclass(frozen=True)
class Tree:
    """Leaf (no children) or an internal node with exactly three ordered children."""

    children: tuple = ()

    def __post_init__(self):
        if len(self.children) not in (0, 3):
            raise ValueError("internal nodes have exactly three children")

    @property
    def is_leaf(self):
        return not self.children

    def internal(self):
        return 0 if self.is_leaf else 1 + sum(c.internal() for c in self.children)

    def leaves(self):
        return 1 if self.is_leaf else sum(c.leaves() for c in self.children)

    def size(self):
        return 1 if self.is_leaf else 1 + sum(c.size() for c in self.children)

    def depth(self):
        return 0 if self.is_leaf else 1 + max(c.depth() for c in self.children)

    def __str__(self):
        if self.is_leaf:
            return "•"
        return "[" + "".join(str(c) for c in self.children) + "]"

    @classmethod
    def parse(cls, text):
        """Inverse of ``str``; accepts ``•`` or ``.`` for leaves."""
        pos = 0

        def walk():
            nonlocal pos
            ch = text[pos]
            if ch in "•.":
                pos += 1
                return LEAF
            if ch != "[":
                raise ValueError(f"unexpected {ch!r} at {pos}")
            pos += 1
            kids = tuple(walk() for _ in range(3))
            if text[pos] != "]":
                raise ValueError(f"expected ']' at {pos}")
            pos += 1
            return cls(kids)

        out = walk()
        if pos != len(text):
            raise ValueError("trailing characters")
        return out


LEAF = Tree()


def trees_with(m, _memo={}):
    """All planar ternary trees with exactly m internal nodes, canonical order."""
    if m in _memo:
        return _memo[m]
    if m == 0:
        out = [LEAF]
    else:
        out = []
        for a in range(m):
            for b in range(m - a):
                c = m - 1 - a - b
                for t1 in trees_with(a):
                    for t2 in trees_with(b):
                        for t3 in trees_with(c):
                            out.append(Tree((t1, t2, t3)))
    _memo[m] = out
    return out


def enumerate_trees(max_internal):
    """Trees with at most ``max_internal`` internal nodes, grouped by that count."""
    if max_internal < 0:
        raise ValueError("max_internal must be non-negative")
    out = []
    for m in range(max_internal + 1):
        out.extend(trees_with(m))
    return out


def ternary_count(m):
    """Number of ternary trees with m internal nodes, binom(3m, m) / (2m + 1)."""
    return math.comb(3 * m, m) // (2 * m + 1)


# ---------------------------------------------------------------- base path

class MildPath:
    """Phi_t(v) = Psi0(e^{-t} v) + int_0^t e^{-(t-s)} dB_s(v) on grid nodes (A = -I).

    ``images[i][a]`` is Phi_{tau_i}(e_a) on the symbolic noise generators.
    """

    def __init__(self, C, T, steps, initial="stationary", label="W"):
        C = np.asarray(C, dtype=float)
        self.N = C.shape[0]
        self.A = -np.eye(self.N)
        self.C = C
        self.grid = TimeGrid(0.0, T, steps)
        if isinstance(initial, str):
            if initial != "stationary":
                raise ValueError(f"unknown initial law {initial!r}")
            initial = lyapunov_CA(self.A, C)
        self.noise = WhiteNoise(C, self.grid, initial=initial, label=label)
        self.state = self.noise.state
        self.ctx = self.state.ctx
        self.nu = self.noise.ambient_norms()
        self.times = self.grid.nodes()
        self.images = [mild_base(self.noise, self.A, i) for i in range(steps + 1)]

    def norms(self):
        """(sup, Holder-1/2 seminorm, sum) of the surrogate norms over grid pairs."""
        per = [[weighted_norm(x, self.nu) for x in row] for row in self.images]
        sup = max(max(r) for r in per)
        hold = 0.0
        for i in range(len(self.times)):
            for j in range(i):
                dt = self.times[i] - self.times[j]
                for a in range(self.N):
                    d = self.images[i][a] - self.images[j][a]
                    hold = max(hold, weighted_norm(d, self.nu) / math.sqrt(dt))
        return sup, hold, sup + hold


# ---------------------------------------------------------------- tree evaluation

def cubic_coefficients(coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 4 or len(set(coeffs.shape)) != 1:
        raise ValueError("cubic coefficients need shape (N, N, N, N)")
    return coeffs


def drift_vanishes(coeffs):
    """True when every F(v_a), as an element of Lambda V, is zero.

    Then each leaf-level node multiplies three fields at equal time whose
    antisymmetric combination is zero, so every tree with an internal node
    vanishes (at N < 3 this always happens).
    """
    coeffs = cubic_coefficients(coeffs)
    from grasq.exterior import GeneratorContext

    ctx = GeneratorContext(coeffs.shape[0], label="V")
    return DriftSpec.cubic(coeffs, ctx).is_zero()


class TreeExpansion:
    """Memoized J_tau(Phi) on the grid nodes, without the coupling factor."""

    def __init__(self, coeffs, path, shortcut=True):
        self.coeffs = cubic_coefficients(coeffs)
        if self.coeffs.shape[0] != path.N:
            raise ValueError("drift and path dimensions differ")
        self.path = path
        self.ctx = path.ctx
        self.n1 = len(path.times)
        self.W = node_weights(self.n1 - 1, path.grid.h)
        self.efun = _semigroup_fun(path.A, path.grid.h)
        self.entries = [list(zip(*np.nonzero(self.coeffs[a]))) for a in range(path.N)]
        self.shortcut = shortcut
        self.vanishing = drift_vanishes(self.coeffs)
        self.cache = {}

    def zero_images(self):
        return [[self.ctx.zero() for _ in range(self.path.N)] for _ in range(self.n1)]

    def eval(self, tree):
        """J_tau(Phi)(tau_i)^a as ``out[i][a]``."""
        if tree in self.cache:
            return self.cache[tree]
        if tree.is_leaf:
            out = self.path.images
        elif self.shortcut and self.vanishing:
            out = self.zero_images()
        else:
            kids = [self.eval(c) for c in tree.children]
            N = self.path.N
            local = []
            for j in range(self.n1):
                row = []
                for a in range(N):
                    acc = self.ctx.zero()
                    for b, c, d in self.entries[a]:
                        left = wedge(kids[0][j][b], kids[1][j][c])
                        if left.is_zero():
                            continue
                        acc = acc + wedge(left, kids[2][j][d]) * self.coeffs[a, b, c, d]
                    row.append(acc)
                local.append(row)
            out = self.zero_images()
            for i in range(self.n1):
                for j in range(self.n1):
                    w = self.W[i, j]
                    if w == 0:
                        continue
                    # A = -I: the semigroup is a scalar multiple of the identity
                    e = self.efun(i, j)[0, 0]
                    for a in range(N):
                        if not local[j][a].is_zero():
                            out[i][a] = out[i][a] + local[j][a] * (w * e)
        self.cache[tree] = out
        return out

    def norm(self, tree, node=None):
        """Surrogate norm sqrt(sum_a ||J^a||^2), at one node or the sup over nodes."""
        imgs = self.eval(tree)
        nodes = range(self.n1) if node is None else [node]
        return max(math.sqrt(sum(weighted_norm(x, self.path.nu) ** 2 for x in imgs[i])) for i in nodes)


def eval_tree(tree, path, coeffs, node=-1):
    """J_tau(Phi)(tau_node) as a list of ambient elements, one per component."""
    return TreeExpansion(coeffs, path).eval(tree)[node]


def series_sum(order, coeffs, lam, path, node=-1, expansion=None, fit_max=None):
    """Partial sums of sum_tau lam^{|I|} J_tau(Phi) through |I(tau)| <= order.

    Returns a dict with ``sum`` (images at the node), ``partial`` (one per
    order), ``order_norms`` (sup-norm of the order-m block including lam^m),
    ``table`` (one row per tree) and the envelope fit

        ||lam^{|I|} J_tau|| <= (||Phi|| C)^{|tau|} |lam|^{(2/3)(|tau| - 1)}

    with C fitted on trees with |I| <= ``fit_max`` (default order // 2) and
    checked on the rest.  ``diverging`` flags non-decreasing order norms.
    """
    exp = TreeExpansion(coeffs, path) if expansion is None else expansion
    N = path.N
    phi_norm = path.norms()[2]
    fit_max = max(order // 2, 1) if fit_max is None else fit_max
    rows = []
    partial = []
    order_norms = []
    acc = [x for x in path.images[node]]
    for m in range(order + 1):
        block = exp.zero_images()
        for tr in trees_with(m):
            imgs = exp.eval(tr)
            scale = lam ** m
            nrm = exp.norm(tr) * abs(scale)
            size = tr.size()
            env = (phi_norm ** size) * abs(lam) ** ((2.0 / 3.0) * (size - 1)) if lam else 0.0
            rows.append({"tree": str(tr), "internal": m, "leaves": tr.leaves(), "size": size,
                         "norm": nrm, "envelope_base": env})
            if m:
                for i in range(exp.n1):
                    for a in range(N):
                        block[i][a] = block[i][a] + imgs[i][a] * scale
        if m:
            acc = [x + y for x, y in zip(acc, block[node])]
            order_norms.append(max(math.sqrt(sum(weighted_norm(x, path.nu) ** 2 for x in block[i]))
                                   for i in range(exp.n1)))
        else:
            order_norms.append(exp.norm(LEAF))
        partial.append(list(acc))
    fit_rows = [r for r in rows if r["internal"] <= fit_max and r["norm"] > 0 and r["envelope_base"] > 0]
    const = max(((r["norm"] / r["envelope_base"]) ** (1.0 / r["size"]) for r in fit_rows), default=0.0)
    for r in rows:
        r["bound"] = r["envelope_base"] * const ** r["size"]
        r["within"] = bool(r["norm"] <= r["bound"] * (1 + 1e-12))
    tail = [n for n in order_norms[1:] if n > 0]
    diverging = any(b >= a for a, b in zip(tail, tail[1:]))
    return {"sum": acc, "partial": partial, "order_norms": order_norms, "table": rows,
            "envelope_constant": const, "fit_max": fit_max, "phi_norm": phi_norm,
            "envelope_holds": all(r["within"] for r in rows if r["internal"] > fit_max),
            "diverging": diverging, "lambda": lam}


def picard_reference(coeffs, lam, path, tol=1e-13, max_iter=200):
    """Fixed point of the same discrete mild equation by Picard iteration."""
    from grasq.exterior import GeneratorContext

    vctx = GeneratorContext(path.N, label="V")
    drift = DriftSpec.cubic(cubic_coefficients(coeffs), vctx)
    prob = SDEProblem(path.A, drift, lam, path.noise)
    return picard_solve(prob, tol=tol, max_iter=max_iter, form="mild")


def order_coefficients(coeffs, path, max_order):
    """lam-coefficients Z^(r) of the discrete fixed point, ``Z[i][a][r]``."""
    from grasq.exterior import GeneratorContext

    vctx = GeneratorContext(path.N, label="V")
    drift = DriftSpec.cubic(cubic_coefficients(coeffs), vctx)
    n1 = len(path.times)
    W = node_weights(n1 - 1, path.grid.h)
    efun = _semigroup_fun(path.A, path.grid.h)
    Z, _ = series_fixed_point(path.images, drift, W, efun, path.ctx, path.nu, max_order)
    return Z


# ---------------------------------------------------------------- exclusion-principle decay

class DenseMildPath:
    """Dense Fock realization of Phi on the grid nodes (A = -I, stationary start).

    Each noise cell is realized as sqrt(h) times a unit Gaussian block, so
    ||xi_k|| <= sqrt(h) (1 + ||C||) and increments scale like |t - s|^{1/2}.
    """

    def __init__(self, C, T, steps, cap=None):
        C = np.asarray(C, dtype=float)
        N = C.shape[0]
        M = N * (steps + 1)
        limit = DENSE_CAP if cap is None else cap
        if M > limit:
            from grasq.exterior import CapacityError
            raise CapacityError(f"dense path needs {M} generators, limit {limit}")
        self.N = N
        self.grid = TimeGrid(0.0, T, steps)
        self.times = self.grid.nodes()
        h = self.grid.h
        CA = lyapunov_CA(-np.eye(N), C)
        cr = creation_operators(M)
        an = [op.T.tocsr() for op in cr]

        def block(off, corr, scale):
            out = []
            for a in range(N):
                x = an[off + a].copy()
                for i in range(N):
                    if corr[i, a] != 0:
                        x = x + corr[i, a] * cr[off + i]
                out.append((x * scale).tocsr())
            return out

        init = block(0, CA, 1.0)
        cells = [block(N * (k + 1), C, math.sqrt(h)) for k in range(steps)]
        self.rep = DenseRep(init + [m for c in cells for m in c], _vacuum(M), _grading(M))
        mids = self.grid.midpoints()
        self.fields = []
        for t in self.times:
            row = []
            for a in range(N):
                x = init[a] * math.exp(-t)
                for k, tm in enumerate(mids):
                    if tm < t:
                        x = x + cells[k][a] * math.exp(-(t - tm))
                row.append(x.tocsr())
            self.fields.append(row)

    def norm(self):
        """(sup, Holder-1/2 seminorm, sum) with exact operator norms over grid pairs."""
        sup = max(op_norm(x) for row in self.fields for x in row)
        hold = 0.0
        for i in range(len(self.times)):
            for j in range(i):
                dt = self.times[i] - self.times[j]
                for a in range(self.N):
                    hold = max(hold, op_norm(self.fields[i][a] - self.fields[j][a]) / math.sqrt(dt))
        return sup, hold, sup + hold


def product_norm_decay(path, n_values, samples=24, seed=0):
    """Operator norms of products Phi^{a1}_{t1} ... Phi^{an}_{tn} against ||Phi||^n.

    For each n, ``samples`` distinct field choices are drawn with a fixed
    seed (products with a repeated field vanish); all orderings of one choice
    agree up to sign, so the field set determines the norm.  Rows report the
    largest measured norm, the naive bound ||Phi||^n, their ratio, and the
    ratio to T^{n/8} ||Phi||^n / (n!)^{1/8} whose n-th root is the fitted
    constant of the envelope C^{n+1} T^{n/8} ||Phi||^n / (n!)^{1/8}.
    """
    fields = [x for row in path.fields for x in row]
    labels = [(i, a) for i in range(len(path.fields)) for a in range(path.N)]
    phi = path.norm()[2]
    T = path.grid.t1
    rng = SplitMix64(seed)
    rows = []
    for n in n_values:
        if n > len(fields):
            rows.append({"n": n, "measured": 0.0, "naive": phi ** n, "naive_ratio": 0.0,
                         "envelope_ratio": 0.0, "sets": 0})
            continue
        seen = set()
        total = math.comb(len(fields), n)
        want = min(samples, total)
        while len(seen) < want:
            seen.add(tuple(sorted(rng.sample(len(fields), n))))
        best = 0.0
        for choice in sorted(seen):
            prod = path.rep.identity
            for k in choice:
                prod = (prod @ fields[k]).tocsr()
            best = max(best, op_norm(prod))
        env = T ** (n / 8.0) * phi ** n / math.factorial(n) ** 0.125
        rows.append({"n": n, "measured": best, "naive": phi ** n, "naive_ratio": best / phi ** n,
                     "envelope_ratio": best / env, "sets": len(seen)})
    # fit log ||prod|| + (1/8) log n! ~ c1 n + c0 over the nonzero rows
    pts = [(r["n"], math.log(r["measured"]) + math.lgamma(r["n"] + 1) / 8.0) for r in rows if r["measured"] > 0]
    fit = None
    if len(pts) >= 2:
        ns, ys = np.array(pts).T
        c1, c0 = np.polyfit(ns, ys, 1)
        c0 = float(np.max(ys - c1 * ns))
        fit = {"slope": float(c1), "offset": c0}
    return {"phi_norm": phi, "rows": rows, "log_fit": fit}


def repeated_field_product(path, i, a, times=2):
    """Product of the same field ``times`` times; zero by the exclusion principle."""
    prod = path.rep.identity
    for _ in range(times):
        prod = (prod @ path.fields[i][a]).tocsr()
    return op_norm(prod)


# ---------------------------------------------------------------- majorant method

class BranchError(ValueError):
    """Raised when the real solution branch K(lam) does not exist."""

    def __init__(self, msg, lam_star=None):
        super().__init__(msg)
        self.lam_star = lam_star


class MajorantSpec:
    """g(a) = sum_k coeffs[k] a^k with coeffs >= 0, and c >= 0."""

    def __init__(self, coeffs, c):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 1 or np.any(coeffs < 0) or c < 0:
            raise ValueError("majorant data must be nonnegative")
        self.coeffs = coeffs
        self.c = float(c)

    def g(self, a):
        return float(np.polynomial.polynomial.polyval(a, self.coeffs))

    def dg(self, a):
        return float(np.polynomial.polynomial.polyval(a, np.polynomial.polynomial.polyder(self.coeffs)))

    def coefficients(self, n_max):
        """Taylor coefficients K^(0..n_max) of K = lam g(K) + c.

        K^(0) = c and K^(n) = [lam^{n-1}] g(K(lam)), evaluated with truncated
        power-series arithmetic (the same numbers as the multi-index sum).
        """
        K = np.zeros(n_max + 1)
        K[0] = self.c
        for n in range(1, n_max + 1):
            # g(K) through order n-1 only needs K^(0..n-1)
            trunc = K[:n]
            acc = np.zeros(n)
            power = np.zeros(n)
            power[0] = 1.0
            for gk in self.coeffs:
                acc += gk * power
                power = np.convolve(power, trunc)[:n]
            K[n] = acc[n - 1]
        return K

    def critical_lambda(self):
        """End of the real branch: K = lam g(K) + c with 1 = lam g'(K).

        Eliminating lam gives g(K) - (K - c) g'(K) = 0 at the first K > c.
        Returns ``inf`` when g is affine (no turning point).
        """
        if np.all(self.coeffs[2:] == 0):
            return math.inf
        f = lambda k: self.g(k) - (k - self.c) * self.dg(k)
        lo = self.c
        if f(lo) <= 0:
            # g(c) = 0 and g'(c) = 0: the branch starts at a turning point
            return 0.0 if self.g(lo) == 0 and self.dg(lo) == 0 else math.inf
        hi = max(2 * lo, 1.0)
        while f(hi) > 0:
            hi *= 2
            if hi > 1e300:
                return math.inf
        kstar = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        return 1.0 / self.dg(kstar)


def newton_branch(spec, lam, tol=1e-14, max_iter=500):
    """Newton from K = c on K - lam g(K) - c = 0; returns (K, iterations) or raises BranchError."""
    k = spec.c
    scale = max(1.0, spec.c)
    for it in range(max_iter):
        f = k - lam * spec.g(k) - spec.c
        if abs(f) <= tol * scale:
            return k, it
        d = 1.0 - lam * spec.dg(k)
        if d <= 0 or not math.isfinite(d):
            raise BranchError(f"Newton left the branch at lambda = {lam:.12g}")
        k = k - f / d
    raise BranchError(f"Newton did not converge at lambda = {lam:.12g}")


def majorant_solve(spec, lam, n_max=10, check=True):
    """K(lam), its Taylor coefficients and the critical coupling lam*."""
    lam_star = spec.critical_lambda()
    if check and lam > lam_star:
        raise BranchError(f"lambda = {lam:.12g} beyond the branch end {lam_star:.12g}", lam_star)
    k, it = newton_branch(spec, lam)
    return {"K": k, "iterations": it, "coefficients": spec.coefficients(n_max), "lambda_star": lam_star}


def newton_onset(spec, lo, hi, iters=80):
    """Bisection for the smallest lam at which Newton fails."""
    ok = lambda lam: _newton_ok(spec, lam)
    if not ok(lo) or ok(hi):
        raise ValueError("bracket must have Newton success at lo and failure at hi")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _newton_ok(spec, lam):
    try:
        newton_branch(spec, lam)
        return True
    except BranchError:
        return False


def cubic_operator_norm(coeffs, W, efun):
    """Bound on ||P_3|| for P_3(X, Y, Z)_i = sum_j W_ij E_ij F(X_j, Y_j, Z_j).

    Uses the norm sqrt(sum_a ||X^a||^2) on each node, sup over nodes, and the
    submultiplicativity of the weighted generator norm.
    """
    coeffs = cubic_coefficients(coeffs)
    per = np.sum(np.abs(coeffs.reshape(coeffs.shape[0], -1)), axis=1)
    fnorm = float(np.sqrt(np.sum(per ** 2)))
    n1 = W.shape[0]
    q = 0.0
    for i in range(n1):
        q = max(q, sum(abs(W[i, j]) * np.linalg.norm(efun(i, j), 2) for j in range(n1) if W[i, j] != 0))
    return q * fnorm


def domination_check(coeffs, path, n_max=10):
    """Compare ||Z^(n)|| of the discrete fixed point with the majorant K^(n).

    The majorant is K = lam p K^3 + ||Phi|| with p the cubic operator bound.
    Returns rows with both sides and the ratio, plus ``dominated``.
    """
    Z = order_coefficients(coeffs, path, n_max)
    n1 = len(path.times)
    W = node_weights(n1 - 1, path.grid.h)
    efun = _semigroup_fun(path.A, path.grid.h)
    p = cubic_operator_norm(coeffs, W, efun)
    norms = []
    for r in range(n_max + 1):
        best = 0.0
        for i in range(n1):
            imgs = [Z[i][a][r] if r < len(Z[i][a]) else path.ctx.zero() for a in range(path.N)]
            best = max(best, math.sqrt(sum(weighted_norm(x, path.nu) ** 2 for x in imgs)))
        norms.append(best)
    spec = MajorantSpec([0.0, 0.0, 0.0, p], norms[0])
    K = spec.coefficients(n_max)
    rows = [{"n": r, "Z_norm": norms[r], "K": float(K[r]), "ratio": float(norms[r] / K[r]) if K[r] else 0.0,
             "dominated": bool(norms[r] <= K[r] * (1 + 1e-12))} for r in range(n_max + 1)]
    return {"rows": rows, "dominated": all(r["dominated"] for r in rows), "p": p, "c": norms[0],
            "lambda_star": spec.critical_lambda()}
