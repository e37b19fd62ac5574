"""Experiment kinds: parameter schemas, precondition checks and runners.

Each runner returns a result dict with ``checks`` (one per pass/fail
criterion, each naming the property it tests), ``values``, ``budget``,
``tables`` (for CSV) and ``charts`` (for SVG).  Runners are deterministic:
the only randomness is the splitmix64 test-matrix generator with the seed
given in the descriptor.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from grasq.exterior import GeneratorContext, max_generators, weighted_norm
from grasq.rng import DEFAULT_SEED, SplitMix64


# ---------------------------------------------------------------- parameter schema

class ParamError(ValueError):
    """Precondition violation tied to one descriptor parameter."""

    def __init__(self, msg, param=None):
        super().__init__(msg)
        self.param = param


@dataclass
class Param:
    kind: str
    default: object = None
    required: bool = False
    doc: str = ""

    def coerce(self, v):
        k = self.kind
        if k == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise TypeError("expected a number")
            return float(v)
        if k == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                raise TypeError("expected an integer")
            return int(v)
        if k == "bool":
            if not isinstance(v, bool):
                raise TypeError("expected true or false")
            return v
        if k == "str":
            if not isinstance(v, str):
                raise TypeError("expected a string")
            return v
        if k == "floats":
            if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise TypeError("expected a list of numbers")
            return [float(x) for x in v]
        if k == "ints":
            if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
                raise TypeError("expected a list of integers")
            return [int(x) for x in v]
        if k == "matrix":
            if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
                raise TypeError("expected a nested list (matrix)")
            m = np.array(v, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("matrix must be square")
            return m.tolist()
        if k == "terms":
            return _coerce_terms(v)
        if k == "list3":
            return _coerce_list3(v)
        if k == "number":
            if isinstance(v, bool) or not isinstance(v, (int, float, str)):
                raise TypeError("expected a number or a file path")
            return float(v) if not isinstance(v, str) else v
        raise AssertionError(k)


def _coerce_terms(v):
    """Algebra elements as a list of {c = coefficient, ids = [generator ids]}."""
    if not isinstance(v, list):
        raise TypeError("expected a list of {c, ids} tables")
    out = []
    for t in v:
        if not isinstance(t, dict) or set(t) - {"c", "ids"} or "ids" not in t:
            raise TypeError("each term is a table {c = number, ids = [int, ...]}")
        ids = t["ids"]
        if not isinstance(ids, list) or not all(isinstance(i, int) and not isinstance(i, bool) and i >= 0 for i in ids):
            raise TypeError("ids must be non-negative integers")
        c = t.get("c", 1.0)
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise TypeError("coefficient c must be a number")
        out.append({"c": float(c), "ids": list(ids)})
    return out


def _coerce_list3(v):
    if not isinstance(v, list) or not all(isinstance(t, list) and all(isinstance(x, int) and not isinstance(x, bool)
                                                                     for x in t) for t in v):
        raise TypeError("expected a list of [k1, k2, component] integer triples")
    return [list(t) for t in v]


def _element(ctx, terms, param):
    out = ctx.zero()
    for t in terms:
        if any(i >= ctx.n for i in t["ids"]):
            raise ParamError(f"{param}: generator id beyond N - 1 = {ctx.n - 1}", param)
        if len(set(t["ids"])) == len(t["ids"]):
            out = out + ctx.monomial(t["ids"], t["c"])
    return out


def _mat(x):
    return np.array(x, dtype=float)


def _J(n):
    """Canonical symplectic form on R^n (n even)."""
    j = np.zeros((n, n))
    for a in range(0, n - 1, 2):
        j[a, a + 1] = 1.0
        j[a + 1, a] = -1.0
    return j


def _check_A_C(p, A_key="A", C_key="C"):
    from grasq.noise import OUSpec, SpectralError

    A = _mat(p[A_key])
    C = _mat(p[C_key])
    if A.shape != C.shape:
        raise ParamError(f"{A_key} and {C_key} must have the same size", A_key)
    if np.max(np.abs(C + C.T)) > 1e-12 * max(1.0, np.max(np.abs(C))):
        raise ParamError(f"{C_key} must be antisymmetric", C_key)
    try:
        OUSpec(A)
    except SpectralError as exc:
        raise ParamError(f"{A_key}: {exc}", A_key) from None
    if A.shape[0] > max_generators():
        raise ParamError(f"dimension {A.shape[0]} exceeds the generator cap", A_key)
    return A, C


# ---------------------------------------------------------------- results

def check(name, value, bound, invariant, relation="<="):
    """One pass/fail line; ``invariant`` names the property being tested."""
    value = _num(value)
    bound = _num(bound)
    if relation == "<=":
        ok = value <= bound
    elif relation == ">=":
        ok = value >= bound
    elif relation == "==":
        ok = value == bound
    else:
        raise ValueError(relation)
    return {"name": name, "value": value, "bound": bound, "relation": relation,
            "passed": bool(ok), "invariant": invariant}


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if x is None:
        return None
    if isinstance(x, complex):
        return float(abs(x))
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(x)


def table(columns, rows):
    return {"columns": list(columns), "rows": [[_num(v) if not isinstance(v, str) else v for v in r] for r in rows]}


def chart(name, title, xlabel, ylabel, series):
    """``series`` is a list of (label, xs, ys)."""
    return {"name": name, "title": title, "xlabel": xlabel, "ylabel": ylabel,
            "series": [{"label": s[0], "x": [float(v) for v in s[1]], "y": [float(v) for v in s[2]]}
                       for s in series]}


def _result():
    return {"checks": [], "values": {}, "budget": {}, "tables": {}, "charts": []}


@dataclass
class Kind:
    name: str
    summary: str
    params: dict
    tolerances: dict
    validate: object
    run: object
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- gaussian-moments

def _v_gaussian(exp):
    p = exp.params
    if not 2 <= p["N"] <= 12:
        raise ParamError("N must be in 2..12", "N")
    if p["dense_N"] > 8:
        raise ParamError("dense_N is limited to 8 (dense Fock dimension 2^N)", "dense_N")
    if p["samples"] < 1:
        raise ParamError("samples must be positive", "samples")
    if p["max_order"] < 0:
        raise ParamError("max_order must be non-negative", "max_order")
    return {}


def _rel(a, b):
    d = abs(a - b)
    s = max(abs(a), abs(b))
    return d / s if s > 1e-300 else d


def _r_gaussian(exp):
    from grasq.fock import build_complex_gaussian, build_fock
    from grasq.wick import CovarianceMatrix, WickState

    p, tol = exp.params, exp.tolerances
    rng = SplitMix64(p["seed"])
    res = _result()
    worst, count = 0.0, 0
    rows = []
    for s in range(p["samples"]):
        n = 2 + s % (p["N"] - 1)
        st = WickState(rng.antisymmetric(n, 0.5))
        err = 0.0
        for k in range(2, min(p["max_order"], n) + 1, 2):
            for ids in itertools.combinations(range(n), k):
                a = st.moment(ids)
                b = st.moment_pairings(ids)
                err = max(err, _rel(a, b))
                count += 1
        rows.append([s, n, err])
        worst = max(worst, err)
    res["tables"]["pfaffian_vs_pairings"] = table(["sample", "N", "max_rel_err"], rows)
    res["checks"].append(check("pfaffian_vs_pairings", worst, tol["wick"],
                               "Pfaffian moment equals the exhaustive pairing sum"))
    res["values"]["moments_compared"] = count
    # dense Fock against symbolic Wick
    dense_err = 0.0
    drows = []
    for s in range(p["dense_samples"]):
        n = 2 + s % (p["dense_N"] - 1)
        cov = rng.antisymmetric(n, 0.5)
        rep, X = build_fock(cov)
        st = WickState(cov)
        err = 0.0
        for k in range(0, min(p["dense_order"], n) + 1):
            for ids in itertools.combinations(range(n), k):
                a = X.expect(X.vctx.monomial(list(ids)))
                b = st.expect(st.ctx.monomial(list(ids)))
                err = max(err, abs(a - b))
        drows.append([s, n, err, rep.anticommutator_residual()])
        dense_err = max(dense_err, err)
    res["tables"]["dense_vs_wick"] = table(["sample", "N", "max_abs_err", "car_residual"], drows)
    res["checks"].append(check("dense_vs_symbolic", dense_err, tol["dense"],
                               "dense Fock moments equal symbolic Wick moments"))
    # complex Gaussian two-point function
    cerr = 0.0
    for s in range(p["complex_samples"]):
        n = 2
        K = np.array([[0, 1], [1, 0]], dtype=complex)
        z = complex(rng.normal(), rng.normal())
        S = np.array([[0, z], [-z, 0]])
        cov = CovarianceMatrix(K @ S, flavor="kappa", kappa=K)
        rep, X = build_complex_gaussian(cov)
        v = np.array([complex(rng.normal(), rng.normal()) for _ in range(n)])
        w = np.array([complex(rng.normal(), rng.normal()) for _ in range(n)])
        lhs = rep.expect(X.apply(v) @ X.apply(w))
        cerr = max(cerr, abs(lhs - cov.pairing(v, w)))
    res["checks"].append(check("complex_two_point", cerr, tol["complex"],
                               "complex Gaussian two-point function equals (kappa v, C w)"))
    return res


# ---------------------------------------------------------------- ou

def _v_ou(exp):
    _check_A_C(exp.params)
    if exp.params["steps"] < 1:
        raise ParamError("steps must be positive", "steps")
    if exp.params["T"] <= 0:
        raise ParamError("T must be positive", "T")
    return {}


def _r_ou(exp):
    import scipy.linalg as sla

    from grasq.noise import (TimeGrid, WhiteNoise, lyapunov_CA, lyapunov_residual, OUSpec, ou_cross_closed,
                             van_loan_integral)
    from grasq.sde import SDEProblem, picard_solve

    p, tol = exp.params, exp.tolerances
    A, C = _mat(p["A"]), _mat(p["C"])
    res = _result()
    CA = lyapunov_CA(A, C)
    S0 = p["initial_scale"] * CA
    wn = WhiteNoise(C, TimeGrid(0.0, p["T"], p["steps"]), initial=S0)
    tr = picard_solve(SDEProblem(A, None, 0.0, wn))
    prop = float(np.max(np.abs(tr.P[-1] - sla.expm(A * p["T"]))))
    cov = float(np.max(np.abs(tr.covariance(p["steps"]) - ou_cross_closed(A, C, S0, p["T"], p["T"]))))
    res["checks"].append(check("propagator_closed_form", prop, tol["closed_form"],
                               "linear Picard propagator equals exp(A t)"))
    res["checks"].append(check("covariance_closed_form", cov, tol["closed_form"],
                               "OU covariance equals the closed form"))
    lam_A = OUSpec(A).lam_A
    vl = float(np.max(np.abs(van_loan_integral(A, C, 40.0 / lam_A) - CA)))
    res["checks"].append(check("stationary_covariance", vl, tol["stationary"],
                               "stationary covariance equals the Lyapunov solution"))
    res["checks"].append(check("lyapunov_residual", lyapunov_residual(A, C, CA), tol["lyapunov"],
                               "Lyapunov equation residual"))
    res["values"]["lambda_A"] = lam_A
    return res


# ---------------------------------------------------------------- sde

def _terms_default_quartic(n):
    return [{"c": 1.0, "ids": list(range(min(n, 4)))}]


def _v_sde(exp):
    from grasq.sde import potential_drift, stationary_bounds, StationaryConfig

    p = exp.params
    A, C = _check_A_C(p)
    N = A.shape[0]
    ctx = GeneratorContext(N, "V")
    U = _element(ctx, p["U"] or _terms_default_quartic(N), "U")
    if U.parity() not in ("even", "zero"):
        raise ParamError("U must be even", "U")
    if N * p["steps"] + N > max_generators():
        raise ParamError(f"{N * (p['steps'] + 1)} ambient generators exceed the cap {max_generators()}; "
                         "reduce steps", "steps")
    drift = potential_drift(U, C)
    cfg = StationaryConfig(T_trunc=p["T_trunc"], h=p["h"], order=p["order"])
    if (cfg.steps + 1) * N > max_generators() and not drift.is_linear():
        raise ParamError("stationary nodes times N exceed the generator cap; raise h or lower T_trunc", "h")
    K, L, lam0, lam_A = stationary_bounds(cfg, drift, A, C)
    lam = p["lam"] if p["lam"] is not None else p["lam_factor"] * lam0
    if abs(lam) > lam0:
        raise ParamError(_lam_msg(lam, K, L, drift, lam_A, lam0), "lam")
    return {"lambda": lam, "lambda0": lam0, "K": K, "L": L}


def _lam_msg(lam, K, L, drift, lam_A, lam0):
    return (f"|lambda| = {abs(lam):.6g} exceeds lambda0 = {lam0:.6g} "
            f"(K = {K:.6g}, L = {L:.6g}, ||F|| = {drift.norm():.6g}, deg F = {drift.degree()}, "
            f"lambda_A = {lam_A:.6g}: need 2 lambda ||F|| (1+K)^deg / lambda_A + 2 L <= K and "
            f"2 lambda deg ||F|| (1+K)^(deg-1) / lambda_A < 1)")


def _r_sde(exp):
    from grasq.noise import TimeGrid, WhiteNoise, lyapunov_CA
    from grasq.sde import SDEProblem, StationaryConfig, picard_solve, potential_drift, stationary_solve

    p, tol, d = exp.params, exp.tolerances, exp.derived
    A, C = _mat(p["A"]), _mat(p["C"])
    N = A.shape[0]
    ctx = GeneratorContext(N, "V")
    U = _element(ctx, p["U"] or _terms_default_quartic(N), "U")
    drift = potential_drift(U, C)
    lam = d["lambda"]
    res = _result()
    wn = WhiteNoise(C, TimeGrid(0.0, p["T"], p["steps"]), initial=p["initial_scale"] * lyapunov_CA(A, C))
    tr = picard_solve(SDEProblem(A, drift, lam, wn), tol=tol["picard"], max_degree=p["max_degree"])
    res["checks"].append(check("picard_converged", tr.info["max_ratio"], 1.0,
                               "Picard iteration contracts on the grid"))
    odd = all(x.parity() in ("odd", "zero") for row in tr.images for x in row)
    res["checks"].append(check("images_odd", odd, True, "solution images are odd elements", "=="))
    cfg = StationaryConfig(T_trunc=p["T_trunc"], h=p["h"], order=p["order"])
    st = stationary_solve(cfg, drift, lam, A, C)
    res["checks"].append(check("stationary_in_ball", st.info["sup_norm"], st.info["K"],
                               "stationary solution stays in the K-ball"))
    res["checks"].append(check("contraction_bound", st.info["contraction"], st.info["contraction_bound"],
                               "measured contraction below the admissibility bound"))
    res["values"].update({"lambda": lam, "lambda0": d["lambda0"], "K": d["K"], "L": d["L"],
                          "picard_iterations": tr.info["iterations"], "sup_norm": st.info["sup_norm"]})
    return res


# ---------------------------------------------------------------- ito

def _v_ito(exp):
    p = exp.params
    A, C = _check_A_C(p)
    N = A.shape[0]
    if N > 6:
        raise ParamError("ito kind evaluates joint Wick states of dimension 2N; N <= 6", "A")
    ctx = GeneratorContext(N, "V")
    _element(ctx, p["G"], "G")
    _element(ctx, p["H"], "H")
    if len(p["steps"]) < 2 or min(p["steps"]) < 1:
        raise ParamError("steps needs at least two positive grid sizes", "steps")
    return {}


def _r_ito(exp):
    from grasq.noise import TimeGrid, WhiteNoise, lyapunov_CA
    from grasq.sde import DriftSpec, SDEProblem, ito_residual, picard_solve

    p, tol = exp.params, exp.tolerances
    A, C = _mat(p["A"]), _mat(p["C"])
    N = A.shape[0]
    ctx = GeneratorContext(N, "V")
    G = _element(ctx, p["G"], "G")
    H = _element(ctx, p["H"], "H")
    dr = DriftSpec.from_matrix(A, ctx)
    S0 = p["initial_scale"] * lyapunov_CA(A, C)
    hs, rs = [], []
    for steps in sorted(p["steps"]):
        wn = WhiteNoise(C, TimeGrid(0.0, p["T"], steps), initial=S0)
        tr = picard_solve(SDEProblem(A, None, 0.0, wn))
        r, _ = ito_residual(G, H, tr, dr, C)
        hs.append(p["T"] / steps)
        rs.append(r)
    res = _result()
    res["tables"]["residual_vs_h"] = table(["h", "max_residual"], list(zip(hs, rs)))
    res["charts"].append(chart("residual_vs_h", "Ito residual against grid step", "h", "max residual",
                               [("max residual", hs, rs)]))
    pos = [(h, r) for h, r in zip(hs, rs) if r > 0]
    slope = float(np.polyfit(np.log([x[0] for x in pos]), np.log([x[1] for x in pos]), 1)[0]) if len(pos) >= 2 else math.inf
    res["values"]["slope"] = slope
    res["checks"].append(check("residual_slope", slope, tol["slope"],
                               "Ito formula residual decays with the grid step", ">="))
    return res


# ---------------------------------------------------------------- invariant

_NONNORMAL = [[-1.0, 2.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.5], [0.0, 0.0, 0.0, -2.0]]


def _v_invariant(exp):
    p = exp.params
    A, C = _check_A_C(p)
    N = A.shape[0]
    if N > 8:
        raise ParamError("invariant kind enumerates all 2^N monomials; N <= 8", "A")
    ctx = GeneratorContext(N, "V")
    if _element(ctx, p["U"] or _terms_default_quartic(N), "U").parity() not in ("even", "zero"):
        raise ParamError("U must be even", "U")
    if p["violation"]:
        Av = _mat(p["violation_A"])
        if Av.shape != A.shape:
            raise ParamError("violation_A must have the size of A", "violation_A")
        if _element(ctx, p["violation_U"], "violation_U").parity() not in ("even", "zero"):
            raise ParamError("violation_U must be even", "violation_U")
    return {}


def _r_invariant(exp):
    from grasq.sde import invariant_residuals

    p, tol = exp.params, exp.tolerances
    A, C = _mat(p["A"]), _mat(p["C"])
    N = A.shape[0]
    ctx = GeneratorContext(N, "V")
    U = _element(ctx, p["U"] or _terms_default_quartic(N), "U")
    rep = invariant_residuals(U, A, C, lam=p["lam"])
    res = _result()
    rows = [[f"{m:0{N}b}"[::-1], abs(v)] for m, v in sorted(rep.residuals.items())]
    res["tables"]["residuals"] = table(["monomial_bits", "abs_residual"], rows)
    res["checks"].append(check("basis_residuals", rep.max_residual, tol["residual"],
                               "Gaussian-times-weight state is invariant (all basis residuals vanish)"))
    res["values"]["commutation_defect"] = rep.condition
    if p["violation"]:
        Uv = _element(ctx, p["violation_U"], "violation_U")
        bad = invariant_residuals(Uv, _mat(p["violation_A"]), C, lam=p["lam"])
        res["checks"].append(check("violation_detected", bad.max_residual, tol["violation"],
                                   "broken commutation condition is detected", ">="))
        res["values"]["violation_defect"] = bad.condition
    return res


# ---------------------------------------------------------------- sq

def _sq_problem(p):
    from grasq.sde import potential_drift

    if p["A"] is not None:
        A, C = _mat(p["A"]), _mat(p["C"])
        N = A.shape[0]
    else:
        N = p["N"]
        A, C = -np.eye(N), _J(N)
    ctx = GeneratorContext(N, "V")
    U = _element(ctx, p["U"] or [{"c": 1.0, "ids": list(range(N))}], "U")
    G = _element(ctx, p["G"] or [{"c": 1.0, "ids": [0, 1]}], "G")
    return A, C, ctx, U, G, potential_drift(U, C)


def _v_sq(exp):
    from grasq.sde import StationaryConfig, stationary_bounds

    p = exp.params
    if p["A"] is not None or p["C"] is not None:
        if p["A"] is None or p["C"] is None:
            raise ParamError("give both A and C or neither", "A")
        _check_A_C(p)
    elif p["N"] < 2 or p["N"] % 2:
        raise ParamError("N must be even and at least 2", "N")
    A, C, ctx, U, G, drift = _sq_problem(p)
    if U.parity() not in ("even", "zero"):
        raise ParamError("U must be even", "U")
    cfg = StationaryConfig(T_trunc=p["T_trunc"], h=p["h"], order=p["order"])
    if not drift.is_linear() and (cfg.steps + 1) * ctx.n > max_generators():
        raise ParamError(f"{(cfg.steps + 1) * ctx.n} node generators exceed the cap {max_generators()}; "
                         "raise h or lower T_trunc", "h")
    K, L, lam0, lam_A = stationary_bounds(cfg, drift, A, C)
    lam = p["lam"] if p["lam"] is not None else p["lam_factor"] * lam0
    if abs(lam) > lam0:
        raise ParamError(_lam_msg(lam, K, L, drift, lam_A, lam0), "lam" if p["lam"] is not None else "lam_factor")
    return {"lambda": lam, "lambda0": lam0, "K": K, "L": L, "lambda_A": lam_A}


def _r_sq(exp):
    from grasq.noise import lyapunov_CA
    from grasq.sde import StationaryConfig, log_partition, reciprocal_product, sq_verify
    from grasq.wick import WickState

    p, tol, d = exp.params, exp.tolerances, exp.derived
    A, C, ctx, U, G, drift = _sq_problem(p)
    lam = d["lambda"]
    cfg = StationaryConfig(T_trunc=p["T_trunc"], h=p["h"], order=p["order"])
    r = sq_verify(G, U, lam, cfg, A, C, budget=lam != 0)
    res = _result()
    res["checks"].append(check("sq_identity", r["rel_err"], tol["rel"],
                               "stochastic quantization identity omega(G e^{-lam U}) = omega(G(Psi)) Z"))
    res["checks"].append(check("in_ball", r["sup_norm"], r["K"], "stationary solution stays in the K-ball"))
    res["values"].update({"lhs": [r["lhs"].real, r["lhs"].imag], "rhs": [r["rhs"].real, r["rhs"].imag],
                          "partition": [r["partition"].real, r["partition"].imag], "lambda": lam,
                          "lambda0": d["lambda0"], "K": d["K"], "L": d["L"], "nodes": r["nodes"]})
    if lam != 0:
        b = r["budget"]
        res["budget"] = {"grid": b["grid"], "truncation": b["truncation"], "fixed_point": b["fixed_point"]}
        deg = drift.degree()
        alpha = abs(lam) * drift.norm() * deg * (1 + d["K"]) ** (deg - 1)
        target = 0.9 * (d["lambda_A"] - alpha)
        rate = r["truncation_rate"] if r["truncation_rate"] is not None else 0.0
        res["values"]["truncation_rate"] = rate
        res["values"]["rate_target"] = target
        if p["check_budget"]:
            res["checks"].append(check("truncation_rate", rate, target,
                                       "exponential decay of the error in T_trunc", ">="))
            dom = b["truncation"] >= max(b["grid"], b["fixed_point"])
            res["checks"].append(check("budget_dominated_by_truncation", dom, True,
                                       "error budget is dominated by the window truncation", "=="))
        ts = [w[0] for w in r["windows"]]
        ds = [w[1] for w in r["windows"]]
        res["tables"]["discrepancy_vs_T"] = table(["T_trunc", "abs_discrepancy"], list(zip(ts, ds)))
        res["charts"].append(chart("discrepancy_vs_T", "Identity discrepancy against window length",
                                   "T_trunc", "|LHS - RHS|", [("discrepancy", ts, ds)]))
    if p["reciprocal_product"]:
        st = WickState(lyapunov_CA(A, C), ctx=ctx, tol=1e-9)
        prod = reciprocal_product(U, lam, r["trajectory"], st)
        res["checks"].append(check("reciprocal_product", abs(prod - 1.0), tol["product"],
                                   "omega(e^{lam U(Psi)}) omega(e^{-lam U}) = 1"))
    if p["log_partition"] and lam != 0:
        lp = log_partition(U, lam, p["n_sigma"], cfg, A, C)
        res["checks"].append(check("log_partition", lp["abs_err"], tol["log_partition"],
                                   "-log Z equals the coupling integral of omega(U(Psi))"))
        res["values"]["log_partition"] = {"quadrature": lp["quadrature"].real, "oracle": lp["oracle"].real}
        res["tables"]["log_partition_curve"] = table(["sigma", "minus_log_z", "integrand"],
                                                     [[a, float(np.real(b)), float(np.real(c))]
                                                      for a, b, c in lp["curve"]])
    return res


# ---------------------------------------------------------------- tree

_TREE_C = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.5], [0.0, -0.5, 0.0]]
_TREE_COEFFS = [{"c": 1.0, "ids": [0, 0, 1, 2]}, {"c": -0.5, "ids": [1, 0, 1, 2]},
                {"c": 0.7, "ids": [2, 0, 1, 2]}, {"c": 0.3, "ids": [2, 1, 0, 2]}]


def _tree_coeffs(p, N):
    co = np.zeros((N, N, N, N))
    for t in p["coefficients"]:
        if len(t["ids"]) != 4 or any(i >= N for i in t["ids"]):
            raise ParamError("each cubic coefficient needs ids = [out, i, j, k] below N", "coefficients")
        co[tuple(t["ids"])] += t["c"]
    return co


def _v_tree(exp):
    p = exp.params
    C = _mat(p["C"])
    N = C.shape[0]
    if np.max(np.abs(C + C.T)) > 1e-12:
        raise ParamError("C must be antisymmetric", "C")
    _tree_coeffs(p, N)
    if N * (p["steps"] + 1) > max_generators():
        raise ParamError("N (steps + 1) exceeds the generator cap", "steps")
    if p["order"] < 0 or p["order"] > 6:
        raise ParamError("order must be in 0..6", "order")
    if p["dense"] and (p["dense_steps"] + 1) * _mat(p["dense_C"]).shape[0] > 12:
        raise ParamError("dense exclusion checks are limited to 12 dense generators", "dense_steps")
    return {}


def _r_tree(exp):
    from grasq.trees import (DenseMildPath, MildPath, TreeExpansion, order_coefficients, picard_reference,
                             product_norm_decay, repeated_field_product, series_sum, ternary_count, trees_with)

    p, tol = exp.params, exp.tolerances
    C = _mat(p["C"])
    N = C.shape[0]
    co = _tree_coeffs(p, N)
    lam = p["lam"]
    res = _result()
    counts = [len(trees_with(m)) for m in range(7)]
    res["checks"].append(check("tree_counts", counts == [ternary_count(m) for m in range(7)], True,
                               "planar ternary tree counts follow the recurrence", "=="))
    path = MildPath(C, p["T"], p["steps"])
    ex = TreeExpansion(co, path)
    ss = series_sum(p["order"], co, lam, path, expansion=ex)
    ref = picard_reference(co, lam, path)
    rem = [max(weighted_norm(x - y, path.nu) for x, y in zip(part, ref.images[-1])) for part in ss["partial"]]
    res["tables"]["remainder_by_order"] = table(["order", "remainder"], list(enumerate(rem)))
    res["tables"]["trees"] = table(["tree", "internal", "norm", "bound", "within"],
                                   [[r["tree"], r["internal"], r["norm"], r["bound"], r["within"]] for r in ss["table"]])
    res["charts"].append(chart("tree_norms", "Per-tree norms against order", "internal nodes", "norm",
                               [("tree norm", [r["internal"] for r in ss["table"]], [r["norm"] for r in ss["table"]]),
                                ("order block", list(range(len(ss["order_norms"]))), ss["order_norms"])]))
    ratios = [b / a for a, b in zip(rem, rem[1:]) if a > 0]
    res["values"].update({"remainder": rem, "ratios": ratios, "envelope_constant": ss["envelope_constant"],
                          "phi_norm": ss["phi_norm"], "order_norms": ss["order_norms"]})
    res["checks"].append(check("partial_sums_converge", rem[-1], tol["picard"],
                               "tree partial sums converge to the Picard solution"))
    res["checks"].append(check("geometric_remainder", max(ratios) if ratios else 0.0, tol["ratio"],
                               "remainder decreases geometrically with the order"))
    res["checks"].append(check("envelope", ss["envelope_holds"], True,
                               "per-tree norms respect the fitted stretched envelope", "=="))
    Z = order_coefficients(co, path, p["order"])
    ident = 0.0
    for m in range(p["order"] + 1):
        for i in range(len(path.times)):
            for a in range(N):
                s = path.ctx.zero()
                for tr in trees_with(m):
                    s = s + ex.eval(tr)[i][a]
                z = Z[i][a][m] if m < len(Z[i][a]) else path.ctx.zero()
                ident = max(ident, (s - z).max_abs())
    res["checks"].append(check("tree_picard_identity", ident, tol["identity"],
                               "sum of trees of order m equals the order-m coefficient"))
    if p["dense"]:
        dp = DenseMildPath(_mat(p["dense_C"]), p["dense_T"], p["dense_steps"])
        pn = product_norm_decay(dp, range(1, p["dense_n"] + 1), samples=p["dense_samples"])
        rows = pn["rows"]
        last = rows[-1]
        res["tables"]["product_norms"] = table(["n", "measured", "naive", "naive_ratio", "envelope_ratio"],
                                               [[r["n"], r["measured"], r["naive"], r["naive_ratio"],
                                                 r["envelope_ratio"]] for r in rows])
        res["checks"].append(check("exclusion_decay", last["naive_ratio"], tol["exclusion"],
                                   "product norms fall below the naive bound (exclusion principle)"))
        res["checks"].append(check("repeated_field", repeated_field_product(dp, 1, 0), 0.0,
                                   "a repeated field squares to zero", "<="))
    return res


# ---------------------------------------------------------------- majorant

def _v_majorant(exp):
    p = exp.params
    if p["p"] < 0 or p["c"] < 0:
        raise ParamError("majorant data must be nonnegative", "p")
    if p["n_max"] < 1:
        raise ParamError("n_max must be positive", "n_max")
    return {}


def _r_majorant(exp):
    from grasq.trees import MajorantSpec, MildPath, domination_check, majorant_solve, newton_onset, ternary_count

    p, tol = exp.params, exp.tolerances
    spec = MajorantSpec([0.0, 0.0, 0.0, p["p"]], p["c"])
    res = _result()
    lam_star = spec.critical_lambda()
    exact = 4.0 / (27.0 * p["p"] * p["c"] ** 2) if p["p"] > 0 and p["c"] > 0 else math.inf
    K = spec.coefficients(p["n_max"])
    res["checks"].append(check("K0_equals_c", abs(K[0] - p["c"]), 0.0, "K(0) = c"))
    res["checks"].append(check("K1_equals_g_c", abs(K[1] - spec.g(p["c"])), 0.0, "K^(1) = g(c)"))
    closed = [ternary_count(n) * p["p"] ** n * p["c"] ** (2 * n + 1) for n in range(p["n_max"] + 1)]
    cerr = max(_rel(a, b) for a, b in zip(K, closed))
    res["checks"].append(check("coefficients_closed_form", cerr, tol["coefficients"],
                               "K^(n) equals the ternary-count closed form"))
    if math.isfinite(exact):
        res["checks"].append(check("critical_lambda", _rel(lam_star, exact), tol["critical"],
                                   "critical coupling matches the cubic turning point"))
        onset = newton_onset(spec, 0.5 * exact, 2.0 * exact)
        res["checks"].append(check("newton_onset", _rel(onset, exact), tol["onset"],
                                   "Newton failure onset at the critical coupling"))
        sol = majorant_solve(spec, 0.5 * exact, p["n_max"])
        res["values"]["K_half_critical"] = sol["K"]
    res["values"].update({"lambda_star": lam_star, "analytic": exact})
    res["tables"]["coefficients"] = table(["n", "K_n", "closed_form"],
                                          [[n, K[n], closed[n]] for n in range(p["n_max"] + 1)])
    if p["domination"]:
        C = _mat(_TREE_C)
        co = np.zeros((3, 3, 3, 3))
        for t in _TREE_COEFFS:
            co[tuple(t["ids"])] += t["c"]
        d = domination_check(co, MildPath(C, 1.0, 4), p["n_max"])
        worst = max(r["ratio"] for r in d["rows"])
        res["tables"]["domination"] = table(["n", "Z_norm", "K", "ratio", "dominated"],
                                            [[r["n"], r["Z_norm"], r["K"], r["ratio"], r["dominated"]] for r in d["rows"]])
        res["checks"].append(check("coefficient_domination", worst, 1.0 + 1e-12,
                                   "||Z^(n)|| <= K^(n) for the cubic model"))
    return res


# ---------------------------------------------------------------- yukawa

def _yukawa_spec(p, cutoff=None):
    from grasq.yukawa import TorusSpec

    kwargs = dict(R=p["R"], cutoff=p["cutoff"] if cutoff is None else cutoff, m_f=p["m_f"], m_b=p["m_b"],
                  eps=p["eps"], profile=p["profile"])
    h = p["h"]
    if isinstance(h, str):
        grid = np.loadtxt(h, delimiter=",", ndmin=2)
        if grid.shape[0] != grid.shape[1]:
            raise ParamError("h file must hold a square grid of samples", "h")
        n = grid.shape[0]
        L = 2 * math.pi * p["R"]

        def hfun(x1, x2):
            i = int(math.floor((x1 + math.pi * p["R"]) / L * n)) % n
            j = int(math.floor((x2 + math.pi * p["R"]) / L * n)) % n
            return float(grid[i, j])

        kwargs.update(h=hfun, quad_points=n)
    elif h != 1.0:
        kwargs.update(h=lambda x1, x2, c=float(h): c)
    return TorusSpec(**kwargs)


def _v_yukawa(exp):
    from grasq.sde import StationaryConfig
    from grasq.yukawa import YukawaModel

    p = exp.params
    for key in ("m_f", "m_b"):
        if p[key] is None:
            raise ParamError(f"yukawa kind needs the mass {key}", key)
        if p[key] <= 0:
            raise ParamError(f"{key} must be positive", key)
    if p["profile"] not in ("gaussian", "bump", "none"):
        raise ParamError("profile must be gaussian, bump or none", "profile")
    if isinstance(p["h"], str):
        try:
            np.loadtxt(p["h"], delimiter=",", ndmin=2)
        except OSError as exc:
            raise ParamError(f"cannot read h file: {exc}", "h") from None
    try:
        spec = _yukawa_spec(p)
    except ValueError as exc:
        raise ParamError(str(exc), "cutoff") from None
    modes = len(spec.modes())
    cfg = StationaryConfig(T_trunc=p["T_trunc"], h=p["grid_h"], order=p["order"])
    if 4 * modes > max_generators():
        raise ParamError(f"4 |Lambda| = {4 * modes} exceeds the generator cap", "cutoff")
    if (cfg.steps + 1) * 4 * modes > max_generators():
        raise ParamError(f"{(cfg.steps + 1) * 4 * modes} node generators exceed the cap {max_generators()}; "
                         "raise grid_h or lower T_trunc", "grid_h")
    model = YukawaModel(spec)
    K, L, lam0, lam_A = model.bounds(cfg)
    lam = p["lam"] if p["lam"] is not None else p["lam_factor"] * lam0
    if abs(lam) > lam0:
        raise ParamError(_lam_msg(lam, K, L, model.drift, lam_A, lam0), "lam" if p["lam"] is not None else "lam_factor")
    for t in p["test"]:
        if len(t) != 3 or tuple(t[:2]) not in set(spec.modes()) or not 0 <= t[2] < 4:
            raise ParamError(f"test entry {t} must be [k1, k2, component] with k in the mode set", "test")
    return {"lambda": lam, "lambda0": lam0, "K": K, "L": L, "modes": modes}


def _r_yukawa(exp):
    from grasq.sde import StationaryConfig
    from grasq.yukawa import YukawaModel, n_sweep, schwinger_compare

    p, tol, d = exp.params, exp.tolerances, exp.derived
    spec = _yukawa_spec(p)
    model = YukawaModel(spec)
    vecs = [model.test_vector(tuple(t[:2]), t[2]) for t in p["test"]]
    cfg = StationaryConfig(T_trunc=p["T_trunc"], h=p["grid_h"], order=p["order"])
    lam = d["lambda"]
    r = schwinger_compare(model, lam, vecs, cfg, budget=lam != 0)
    res = _result()
    res["checks"].append(check("schwinger_identity", r["rel_err"], tol["rel"],
                               "Galerkin Schwinger function identity"))
    free = model.gauss.state().expect(model.schwinger_element(vecs))
    res["values"].update({"lhs": [r["lhs"].real, r["lhs"].imag], "rhs": [r["rhs"].real, r["rhs"].imag],
                          "partition": [r["partition"].real, r["partition"].imag], "lambda": lam,
                          "lambda0": d["lambda0"], "modes": d["modes"], "generators": model.gauss.n,
                          "nodes": r["nodes"], "interaction_shift": abs(r["lhs"] / r["partition"] - free)})
    if lam != 0:
        res["budget"] = dict(r["budget"])
    vreal = model.gauss.state().expect(model.V)
    res["checks"].append(check("potential_even", model.V.odd_part().max_abs(), 0.0, "V has no odd part"))
    res["checks"].append(check("potential_mean_real", abs(vreal.imag), tol["reality"], "omega(V) is real"))
    if p["sweep"]:
        specs = [_yukawa_spec(p, c) for c in p["sweep"]]
        sweep_lam = p["sweep_lam"] if p["sweep_lam"] is not None else lam

        def vecs_for(m):
            return [m.test_vector(tuple(t[:2]), t[2]) for t in p["test"]]

        rows = n_sweep(specs, vecs_for, sweep_lam, order=p["sweep_order"])
        disc = [row["discrepancy"] for row in rows[1:]]
        res["tables"]["n_sweep"] = table(["modes", "generators", "value_re", "value_im", "discrepancy"],
                                         [[row["modes"], row["generators"], row["value"].real, row["value"].imag,
                                           row.get("discrepancy", float("nan"))] for row in rows])
        res["charts"].append(chart("n_sweep", "Schwinger discrepancy between consecutive cutoffs", "modes",
                                   "discrepancy", [("discrepancy", [row["modes"] for row in rows[1:]], disc)]))
        res["values"]["sweep_discrepancies"] = disc
        if len(disc) >= 2:  # monotonicity needs at least two consecutive gaps
            mono = all(b < a for a, b in zip(disc, disc[1:]))
            res["checks"].append(check("sweep_decreasing", mono, True,
                                       "discrepancies between consecutive cutoffs decrease", "=="))
    return res


# ---------------------------------------------------------------- registry

def _P(kind, default=None, required=False, doc=""):
    return Param(kind, default, required, doc)


_J2 = [[0.0, 1.0], [-1.0, 0.0]]
_J4 = _J(4).tolist()
_I2 = (-np.eye(2)).tolist()
_I4 = (-np.eye(4)).tolist()

KINDS = {
    "gaussian-moments": Kind(
        "gaussian-moments", "Pfaffian and pairing-sum moments, dense Fock against symbolic Wick",
        {"N": _P("int", 8), "samples": _P("int", 50), "max_order": _P("int", 8), "seed": _P("int", DEFAULT_SEED),
         "dense_N": _P("int", 6), "dense_order": _P("int", 6), "dense_samples": _P("int", 10),
         "complex_samples": _P("int", 10)},
        {"wick": 1e-10, "dense": 1e-10, "complex": 1e-12}, _v_gaussian, _r_gaussian),
    "ou": Kind(
        "ou", "Linear SDE against its closed form; stationary covariance and Lyapunov residual",
        {"A": _P("matrix", _I2), "C": _P("matrix", _J2), "T": _P("float", 1.0), "steps": _P("int", 10000),
         "initial_scale": _P("float", 0.5)},
        {"closed_form": 1e-8, "stationary": 1e-8, "lyapunov": 1e-10}, _v_ou, _r_ou),
    "sde": Kind(
        "sde", "Nonlinear Picard solve and stationary solve: convergence, K-ball, contraction",
        {"A": _P("matrix", _I4), "C": _P("matrix", _J4), "U": _P("terms", []), "lam": _P("float"),
         "lam_factor": _P("float", 0.5), "T": _P("float", 1.0), "steps": _P("int", 4),
         "max_degree": _P("int", 5), "initial_scale": _P("float", 1.0), "T_trunc": _P("float", 3.0), "h": _P("float", 0.25),
         "order": _P("int", 2)},
        {"picard": 1e-12}, _v_sde, _r_sde),
    "ito": Kind(
        "ito", "Ito formula residual under grid refinement (linear drift)",
        {"A": _P("matrix", [[-1.0, 0.4, 0.0], [0.0, -0.8, 0.3], [0.2, 0.0, -1.2]]),
         "C": _P("matrix", [[0.0, 1.0, 0.3], [-1.0, 0.0, 0.5], [-0.3, -0.5, 0.0]]),
         "G": _P("terms", [{"c": 1.0, "ids": [0, 1, 2]}, {"c": 0.5, "ids": [0, 1]}, {"c": 1.0, "ids": [2]}]),
         "H": _P("terms", [{"c": 1.0, "ids": [0, 2]}, {"c": 1.0, "ids": [1]}]),
         "T": _P("float", 1.0), "steps": _P("ints", [10, 30, 100, 300, 1000]), "initial_scale": _P("float", 0.5)},
        {"slope": 0.45}, _v_ito, _r_ito),
    "invariant": Kind(
        "invariant", "Invariance residuals of the Gaussian-times-weight state; violation detection",
        {"A": _P("matrix", _I4), "C": _P("matrix", _J4), "U": _P("terms", []), "lam": _P("float", 2.0),
         "violation": _P("bool", True), "violation_A": _P("matrix", _NONNORMAL),
         "violation_U": _P("terms", [{"c": 1.0, "ids": [1, 2]}, {"c": 0.5, "ids": [0, 3]},
                                     {"c": 1.0, "ids": [0, 1, 2, 3]}])},
        {"residual": 1e-10, "violation": 1e-4}, _v_invariant, _r_invariant),
    "sq": Kind(
        "sq", "Stochastic quantization identity with error budget, reciprocal product, log-partition",
        {"N": _P("int", 2), "A": _P("matrix"), "C": _P("matrix"), "U": _P("terms", []), "G": _P("terms", []),
         "lam": _P("float"), "lam_factor": _P("float", 0.5), "T_trunc": _P("float", 6.0), "h": _P("float", 0.02),
         "order": _P("int"), "reciprocal_product": _P("bool", True), "log_partition": _P("bool", True),
         "n_sigma": _P("int", 6), "check_budget": _P("bool", True)},
        {"rel": 1e-5, "product": 1e-6, "log_partition": 1e-7}, _v_sq, _r_sq),
    "tree": Kind(
        "tree", "Tree expansion of a cubic drift: partial sums, envelope, exclusion-principle decay",
        {"C": _P("matrix", _TREE_C), "coefficients": _P("terms", _TREE_COEFFS), "lam": _P("float", 0.3),
         "T": _P("float", 1.0), "steps": _P("int", 4), "order": _P("int", 4), "dense": _P("bool", False),
         "dense_C": _P("matrix", _J2), "dense_T": _P("float", 1.0), "dense_steps": _P("int", 5),
         "dense_n": _P("int", 10), "dense_samples": _P("int", 12)},
        {"picard": 1e-4, "ratio": 0.5, "identity": 1e-12, "exclusion": 0.1}, _v_tree, _r_tree),
    "majorant": Kind(
        "majorant", "Scalar majorant equation: coefficients, critical coupling, domination",
        {"p": _P("float", 2.0), "c": _P("float", 0.7), "n_max": _P("int", 10), "domination": _P("bool", True)},
        {"coefficients": 1e-12, "critical": 1e-8, "onset": 1e-8}, _v_majorant, _r_majorant),
    "yukawa": Kind(
        "yukawa", "Galerkin Yukawa model: Schwinger identity and cutoff sweep",
        {"R": _P("float", 1.0), "cutoff": _P("float", 0.0), "m_f": _P("float", required=False),
         "m_b": _P("float", required=False), "eps": _P("float", 0.1), "profile": _P("str", "gaussian"),
         "h": _P("number", 1.0), "lam": _P("float"), "lam_factor": _P("float", 0.5),
         "T_trunc": _P("float", 3.0), "grid_h": _P("float", 0.125), "order": _P("int", 3),
         "test": _P("list3", [[0, 0, 0], [0, 0, 2]]), "sweep": _P("floats", []), "sweep_lam": _P("float"),
         "sweep_order": _P("int", 2)},
        {"rel": 1e-6, "reality": 1e-12}, _v_yukawa, _r_yukawa),
}


def run(exp):
    """Run one validated experiment and return its result dict."""
    return KINDS[exp.kind].run(exp)
