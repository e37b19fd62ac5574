"""Sparse arithmetic in finite-dimensional Grassmann algebras.

An element is a map from monomial bitmasks to complex coefficients: bit i of
a mask stands for generator ``v<i>`` and a mask lists its generators in
ascending order.  Products reorder into ascending order and pick up the sign
of the merge permutation.

Elements are immutable.  All operations return new elements.
"""

import os
from itertools import combinations
from types import MappingProxyType

import numpy as np

from grasq import kernels

DEFAULT_MAX_GENERATORS = 128


class ContextError(ValueError):
    """Raised when elements from different generator contexts are mixed."""


class CapacityError(ValueError):
    """Raised when a context would exceed the configured generator cap."""


def max_generators():
    """Generator cap: ``GRASQ_MAX_GENERATORS`` if set, else 128."""
    raw = os.environ.get("GRASQ_MAX_GENERATORS")
    if raw is None or raw == "":
        return DEFAULT_MAX_GENERATORS
    try:
        value = int(raw)
    except ValueError as exc:
        raise CapacityError(f"GRASQ_MAX_GENERATORS must be an integer, got {raw!r}") from exc
    if value <= 0:
        raise CapacityError("GRASQ_MAX_GENERATORS must be positive")
    return value


class GeneratorContext:
    """A set of ``n`` generators with dense ids ``0 .. n-1``.

    ``cap`` overrides the environment cap for solvers that build large
    time-discretized ambient algebras on purpose.
    """

    def __init__(self, n, label="", cap=None):
        n = int(n)
        if n < 0:
            raise ValueError("generator count must be non-negative")
        limit = max_generators() if cap is None else int(cap)
        if n > limit:
            raise CapacityError(f"{n} generators exceed the cap of {limit}")
        self.n = n
        self.label = label

    def __repr__(self):
        name = f" {self.label!r}" if self.label else ""
        return f"<GeneratorContext{name} n={self.n}>"

    def zero(self):
        return AlgebraElement(self, {})

    def one(self):
        return AlgebraElement(self, {0: 1.0})

    def scalar(self, c):
        return AlgebraElement(self, {0: complex(c)} if c != 0 else {})

    def gen(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"generator {i} outside 0..{self.n - 1}")
        return AlgebraElement(self, {1 << i: 1.0})

    def gens(self):
        return [self.gen(i) for i in range(self.n)]

    def monomial(self, ids, coeff=1.0):
        """Ordered product coeff * v<ids[0]> ^ v<ids[1]> ^ ..."""
        sign = 1
        mask = 0
        for i in ids:
            if not 0 <= i < self.n:
                raise IndexError(f"generator {i} outside 0..{self.n - 1}")
            bit = 1 << i
            if mask & bit:
                return self.zero()
            if (mask >> (i + 1)).bit_count() & 1:
                sign = -sign
            mask |= bit
        return AlgebraElement(self, {mask: sign * complex(coeff)})

    def linear(self, vec):
        """Degree-one element sum_i vec[i] v<i>."""
        vec = np.asarray(vec)
        if vec.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}")
        return AlgebraElement(self, {1 << i: complex(c) for i, c in enumerate(vec) if c != 0})


class AlgebraElement:
    """Immutable sparse element of the Grassmann algebra of a context."""

    __slots__ = ("ctx", "_terms")

    def __init__(self, ctx, terms, prune=True):
        self.ctx = ctx
        if prune:
            terms = {m: c for m, c in terms.items() if c != 0}
        self._terms = terms

    @property
    def terms(self):
        return MappingProxyType(self._terms)

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def __repr__(self):
        return f"AlgebraElement({self.dump() or '0'})"

    def _check(self, other):
        if self.ctx is not other.ctx:
            raise ContextError("elements belong to different generator contexts")

    def _coerce(self, other):
        if isinstance(other, AlgebraElement):
            self._check(other)
            return other
        if np.isscalar(other):
            return self.ctx.scalar(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return AlgebraElement(self.ctx, out)

    __radd__ = __add__

    def __neg__(self):
        return AlgebraElement(self.ctx, {m: -c for m, c in self._terms.items()}, prune=False)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return wedge(self, other)
        if np.isscalar(other):
            if other == 0:
                return self.ctx.zero()
            return AlgebraElement(self.ctx, {m: c * other for m, c in self._terms.items()})
        return NotImplemented

    def __rmul__(self, other):
        if np.isscalar(other):
            return self * other
        return NotImplemented

    def __truediv__(self, other):
        if np.isscalar(other):
            return self * (1.0 / other)
        return NotImplemented

    def __eq__(self, other):
        if isinstance(other, AlgebraElement):
            return self.ctx is other.ctx and self._terms == other._terms
        if np.isscalar(other):
            return self == self.ctx.scalar(other)
        return NotImplemented

    def __hash__(self):
        return hash((id(self.ctx), frozenset(self._terms.items())))

    def is_zero(self):
        return not self._terms

    def coefficient(self, mask):
        return self._terms.get(mask, 0.0)

    def scalar_part(self):
        return complex(self._terms.get(0, 0.0))

    def degree(self):
        """Largest degree carrying a nonzero coefficient (-1 for zero)."""
        return max((m.bit_count() for m in self._terms), default=-1)

    def min_degree(self):
        return min((m.bit_count() for m in self._terms), default=-1)

    def parity(self):
        """'even', 'odd', 'mixed' or 'zero'."""
        kinds = {m.bit_count() & 1 for m in self._terms}
        if not kinds:
            return "zero"
        if kinds == {0}:
            return "even"
        if kinds == {1}:
            return "odd"
        return "mixed"

    def grade(self, k):
        return AlgebraElement(self.ctx, {m: c for m, c in self._terms.items() if m.bit_count() == k}, prune=False)

    def even_part(self):
        return AlgebraElement(self.ctx, {m: c for m, c in self._terms.items() if not m.bit_count() & 1}, prune=False)

    def odd_part(self):
        return AlgebraElement(self.ctx, {m: c for m, c in self._terms.items() if m.bit_count() & 1}, prune=False)

    def truncate(self, max_degree):
        return AlgebraElement(self.ctx, {m: c for m, c in self._terms.items() if m.bit_count() <= max_degree}, prune=False)

    def pruned(self, rel_tol=1e-15, abs_tol=0.0):
        """Drop coefficients below ``max(abs_tol, rel_tol * maxabs)``."""
        if not self._terms:
            return self
        cut = max(abs_tol, rel_tol * max(abs(c) for c in self._terms.values()))
        return AlgebraElement(self.ctx, {m: c for m, c in self._terms.items() if abs(c) > cut}, prune=False)

    def conj(self):
        return AlgebraElement(self.ctx, {m: np.conj(c) for m, c in self._terms.items()}, prune=False)

    def max_abs(self):
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def dump(self):
        """One line per term, ``+coeff * v<i>^v<j>...``, ascending masks."""
        lines = []
        for m in sorted(self._terms):
            c = self._terms[m]
            mono = "^".join(f"v{i}" for i in kernels.bit_indices(m)) or "1"
            lines.append(f"{format_coeff(c)} * {mono}")
        return "\n".join(lines)


def format_coeff(c):
    c = complex(c)
    if c.imag == 0:
        sign = "-" if c.real < 0 or (c.real == 0 and np.signbit(c.real)) else "+"
        return f"{sign}{abs(c.real)!r}"
    return f"+({c.real!r}{c.imag:+}j)"


def wedge(a, b, max_degree=None):
    """Graded product a ^ b, optionally dropping terms above ``max_degree``."""
    a._check(b)
    md = -1 if max_degree is None else int(max_degree)
    return AlgebraElement(a.ctx, kernels.wedge(a._terms, b._terms, md), prune=False)


def wedge_all(factors, ctx=None, max_degree=None):
    """Ordered product of a sequence of elements."""
    factors = list(factors)
    if not factors:
        if ctx is None:
            raise ValueError("empty product needs a context")
        return ctx.one()
    out = factors[0]
    for f in factors[1:]:
        out = wedge(out, f, max_degree)
    return out


def power(a, p, max_degree=None):
    out = a.ctx.one()
    for _ in range(p):
        out = wedge(out, a, max_degree)
    return out


def exp_nilpotent(a, scale=1.0, max_order=None):
    """exp(scale * a) for an even element with no scalar part.

    The series terminates because such elements are nilpotent.
    """
    if a.scalar_part() != 0:
        raise ValueError("exp_nilpotent needs an element without scalar part")
    out = a.ctx.one()
    term = a.ctx.one()
    k = 0
    limit = a.ctx.n // 2 + 1 if max_order is None else max_order
    while k < limit:
        k += 1
        term = wedge(term, a) * (scale / k)
        if term.is_zero():
            break
        out = out + term
    return out


# ---------------------------------------------------------------- coproduct

def _submasks(mask):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def coproduct(a):
    """Delta(a) as a dict {(left_mask, right_mask): coeff}.

    For a basis monomial v_N this is sum_{I subset N} sgn v_{N\\I} (x) v_I,
    where sgn is the sign of v_{N\\I} ^ v_I relative to v_N.
    """
    out = {}
    for m, c in a._terms.items():
        for right in _submasks(m):
            left = m ^ right
            s = kernels.merge_sign(left, right)
            key = (left, right)
            out[key] = out.get(key, 0.0) + s * c
    return {k: v for k, v in out.items() if v != 0}


def tensor_product_graded(d1, d2):
    """Product of two elements of the graded tensor square (dict form).

    (f (x) g)(h (x) k) = (-1)^{|g||h|} fh (x) gk.
    """
    out = {}
    for (f, g), c1 in d1.items():
        dg = g.bit_count()
        for (h, k), c2 in d2.items():
            s1 = kernels.merge_sign(f, h)
            s2 = kernels.merge_sign(g, k)
            if s1 == 0 or s2 == 0:
                continue
            s = s1 * s2
            if dg & 1 and h.bit_count() & 1:
                s = -s
            key = (f | h, g | k)
            out[key] = out.get(key, 0.0) + s * c1 * c2
    return {k: v for k, v in out.items() if v != 0}


def counit(a):
    return a.scalar_part()


# ---------------------------------------------------------------- tensors

class TensorElement:
    """Element of Lambda V (x) V^{(x)k}.

    Terms map ``(mask, i1, ..., ik)`` to coefficients, where ``mask`` is the
    Grassmann factor and ``i1..ik`` index generators in the vector slots.
    """

    __slots__ = ("ctx", "slots", "_terms", "left")

    def __init__(self, ctx, slots, terms, left=False):
        self.ctx = ctx
        self.slots = slots
        self.left = left
        self._terms = {k: v for k, v in terms.items() if v != 0}

    @property
    def terms(self):
        return MappingProxyType(self._terms)

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if not isinstance(other, TensorElement):
            return NotImplemented
        return (self.ctx is other.ctx and self.slots == other.slots
                and self.left == other.left and self._terms == other._terms)

    def __add__(self, other):
        if self.ctx is not other.ctx or self.slots != other.slots or self.left != other.left:
            raise ContextError("incompatible tensor elements")
        out = dict(self._terms)
        for k, v in other._terms.items():
            out[k] = out.get(k, 0.0) + v
        return TensorElement(self.ctx, self.slots, out, self.left)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, s):
        return TensorElement(self.ctx, self.slots, {k: v * s for k, v in self._terms.items()}, self.left)

    __rmul__ = __mul__

    def is_zero(self):
        return not self._terms

    def dump(self):
        lines = []
        for key in sorted(self._terms):
            mask, ids = key[0], key[1:]
            mono = "^".join(f"v{i}" for i in kernels.bit_indices(mask)) or "1"
            vecs = " (x) ".join(f"v{i}" for i in ids)
            body = f"{vecs} (x) {mono}" if self.left else f"{mono} (x) {vecs}"
            lines.append(f"{format_coeff(self._terms[key])} * {body}")
        return "\n".join(lines)


def right_derive(a, k=1):
    """k-th right derivative: Lambda V -> Lambda V (x) V^{(x)k}.

    Extracts generators from the right; the newest extraction occupies the
    first vector slot, i.e. d^{k+1} = (d (x) 1^{(x)k}) d^k.
    """
    if k < 1:
        raise ValueError("k must be positive")
    cur = {(m,): c for m, c in a._terms.items()}
    for _ in range(k):
        nxt = {}
        for key, c in cur.items():
            mask, rest = key[0], key[1:]
            mm = mask
            while mm:
                low = mm & -mm
                j = low.bit_length() - 1
                # moving v<j> to the far right passes every generator above it
                s = -1 if (mask >> (j + 1)).bit_count() & 1 else 1
                nk = (mask ^ low, j) + rest
                nxt[nk] = nxt.get(nk, 0.0) + s * c
                mm ^= low
        cur = nxt
    return TensorElement(a.ctx, k, cur)


def left_derive(a):
    """Left derivative: Lambda V -> V (x) Lambda V, stored as (mask, i)."""
    out = {}
    for m, c in a._terms.items():
        mm = m
        while mm:
            low = mm & -mm
            j = low.bit_length() - 1
            s = -1 if (m & (low - 1)).bit_count() & 1 else 1
            key = (m ^ low, j)
            out[key] = out.get(key, 0.0) + s * c
            mm ^= low
    return TensorElement(a.ctx, 1, out, left=True)


def pair_contract(t, w, m=None):
    """<(1 (x) M) T, w> = sum f <M e_i, w> for T = sum f (x) e_i.

    ``w`` is a coefficient vector over the generators and ``M`` an optional
    matrix acting on the vector slot (identity by default).
    """
    if t.slots != 1:
        raise ValueError("pair_contract needs a single vector slot")
    w = np.asarray(w, dtype=complex)
    if w.shape != (t.ctx.n,):
        raise ValueError(f"vector of length {t.ctx.n} expected")
    if m is not None:
        m = np.asarray(m)
        if m.shape != (t.ctx.n, t.ctx.n):
            raise ValueError("operator shape does not match the generator count")
        w = m.T @ w
    out = {}
    for (mask, i), c in t._terms.items():
        if w[i] != 0:
            out[mask] = out.get(mask, 0.0) + c * w[i]
    return AlgebraElement(t.ctx, out)


def q_contract(t, c):
    """Q_C(f (x) v (x) w) = <v, C w> f, extended linearly."""
    if t.slots != 2:
        raise ValueError("q_contract needs two vector slots")
    c = np.asarray(c)
    if c.shape != (t.ctx.n, t.ctx.n):
        raise ValueError("matrix shape does not match the generator count")
    out = {}
    for (mask, i, j), coef in t._terms.items():
        if c[i, j] != 0:
            out[mask] = out.get(mask, 0.0) + coef * c[i, j]
    return AlgebraElement(t.ctx, out)


def contract_slots(t, images):
    """sum f * images[i] for T = sum f (x) e_i, product taken in Lambda V.

    Implements (f (x) v) . F = f F(v) with ``images[i] = F(e_i)``.
    """
    if t.slots != 1:
        raise ValueError("contract_slots needs a single vector slot")
    out = t.ctx.zero()
    by_slot = {}
    for (mask, i), c in t._terms.items():
        by_slot.setdefault(i, {})[mask] = c
    for i in sorted(by_slot):
        f = AlgebraElement(t.ctx, by_slot[i])
        out = out + wedge(f, images[i])
    return out


def multiply_slots(t):
    """(1 (x) m^k) T: multiply the vector slots back into the algebra.

    Each term f (x) e_i1 (x) ... (x) e_ik maps to f (x) (e_i1 ^ ... ^ e_ik),
    returned as a coproduct-style dict {(f_mask, g_mask): coeff}.
    """
    out = {}
    for key, c in t._terms.items():
        mask, ids = key[0], key[1:]
        g = t.ctx.monomial(ids)
        for gm, gc in g._terms.items():
            k = (mask, gm)
            out[k] = out.get(k, 0.0) + c * gc
    return {k: v for k, v in out.items() if v != 0}


# ---------------------------------------------------------------- norms

def pi_norm(a):
    """Sum of absolute coefficients: an upper bound for the projective norm."""
    return float(sum(abs(c) for c in a._terms.values()))


def weighted_norm(a, gen_norms):
    """Sum_A |a_A| prod_{i in A} gen_norms[i].

    A submultiplicative upper bound for the C*-norm of a when generator i is
    realized by an operator of norm at most ``gen_norms[i]``.
    """
    nu = np.asarray(gen_norms, dtype=float)
    total = 0.0
    for m, c in a._terms.items():
        w = 1.0
        mm = m
        while mm:
            low = mm & -mm
            w *= nu[low.bit_length() - 1]
            mm ^= low
        total += abs(c) * w
    return float(total)


def all_monomials(n, degrees=None):
    """Masks of all monomials over n generators, by degree then ids."""
    degs = range(n + 1) if degrees is None else degrees
    out = []
    for d in degs:
        for ids in combinations(range(n), d):
            m = 0
            for i in ids:
                m |= 1 << i
            out.append(m)
    return out
