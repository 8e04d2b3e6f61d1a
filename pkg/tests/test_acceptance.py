"""Acceptance criteria, one test each.

Every test appends a ``CRITERION n: PASS|FAIL ...`` line to ``RESULTS``;
``conftest.py`` prints them after the run, and running this file directly
prints them as they complete.  Thresholds are fixed here and never adapted
to the observed numbers.
"""

import itertools
import math
import sys
import time
from collections import defaultdict

import numpy as np
from scipy.integrate import solve_ivp

from frozenflow import experiments as ex
from frozenflow.algebra import (
    TensorLinComb,
    deshuffle,
    grossman_larson,
    mkw_coproduct,
)
from frozenflow.forests import UNIT, enumerate_forests, forests_up_to, order, parse
from frozenflow.geometry import SO3, Cauchy, Sphere2, orthogonality_defect
from frozenflow.order_theory import (
    CoeffMap,
    euler_ff_tableau,
    exact_coeff,
    exact_coeff_by_counting,
    numerical_coeff,
    order_conditions,
    sff2_tableau,
    shuffle_character_check,
)

RESULTS = []

# tolerances and windows
ENUM_TIME = 1.0
ORDER_TOL = 1e-12
ORDER3_MIN = 1e-3
HOPF_TOL = 1e-12
HOPF_TIME = 60.0
ORACLE_TOL = 1e-8
ORTHO_TOL = 1e-10
EULER_SLOPE = (0.8, 1.3)
SFF2_SLOPE = (1.7, 2.4)
BASELINE_SLOPE = (0.8, 1.3)
RUN_TIME = 600.0
SPHERE_TARGET = 3.0 - 2.0 / math.tanh(1.0)
DECAY = {"cauchy_phi1": -8.0, "cauchy_phi2": -6.0}
DECAY_REL = 0.15
RESAMPLE_MAX = 0.01
M_DESK = 100_000


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    if __name__ == "__main__":
        print(line, flush=True)
    return ok


def _in(x, lo_hi):
    return x is not None and lo_hi[0] <= x <= lo_hi[1]


def _fmt_slope(s):
    return "none (no point above the MC floor)" if s is None else f"{s:.3f}"


# ------------------------------------------------------------------- 1

def test_criterion_1_enumeration():
    from frozenflow import forests

    forests._enumerate.cache_clear()
    forests._shapes.cache_clear()
    forests._tree_shapes.cache_clear()
    t0 = time.perf_counter()
    counts = [len(enumerate_forests(p)) for p in (1, 2, 3)]
    dt = time.perf_counter() - t0
    ok = counts == [2, 11, 95] and dt < ENUM_TIME
    assert report(1, ok, f"counts {counts}, {dt:.3f} s")


# ------------------------------------------------------------------- 2

E_TABLE = {
    "b": 1, "1,1": 1, "b[b]": "1/2", "b[1,1]": "1/2", "b,b": "1/2", "b[1],1": 0, "1,b[1]": 1,
    "b,1,1": "1/2", "1,b,1": 0, "1,1,b": "1/2", "2,2,1,1": "1/2", "2,1,2,1": 0, "1,2,2,1": 0,
}


def test_criterion_2_exact_coefficients():
    from fractions import Fraction

    bad = [s for s, v in E_TABLE.items() if exact_coeff(parse(s)) != Fraction(v)]
    disagree = [str(f) for f in forests_up_to(2) if exact_coeff(f) != exact_coeff_by_counting(f)]
    ok = not bad and not disagree
    assert report(2, ok, f"{13 - len(bad)}/13 table values exact, "
                         f"{len(forests_up_to(2)) - len(disagree)}/{len(forests_up_to(2))} oracle agreements")


# ------------------------------------------------------------------- 3

def test_criterion_3_euler_coefficients():
    import sympy

    want = {"b": 1, "1,1": 1, "b,b": "1/2", "b,1,1": "1/3", "1,b,1": "1/3", "1,1,b": "1/3",
            "2,2,1,1": "1/6", "2,1,2,1": "1/6", "1,2,2,1": "1/6"}
    t = euler_ff_tableau()
    bad = [s for s, v in want.items() if sympy.simplify(numerical_coeff(parse(s), t) - sympy.Rational(v)) != 0]
    assert report(3, not bad, f"{9 - len(bad)}/9 worked values exact" + (f", mismatches {bad}" if bad else ""))


# ------------------------------------------------------------------- 4

def test_criterion_4_sff2_order():
    rows = order_conditions(3, sff2_tableau())
    low = max(r.residual_float() for r in rows if r.order <= 2)
    high = max(r.residual_float() for r in rows if r.order == 3)
    ok = low < ORDER_TOL and high > ORDER3_MIN
    assert report(4, ok, f"max order<=2 residual {low:.1e}, max order-3 residual {high:.3f}")


# ------------------------------------------------------------------- 5

MKW_DISPLAYED = [
    ("1,1", [("1,1", "", 1), ("", "1,1", 1)]),
    ("b[1,1]", [("b[1,1]", "", 1), ("1,1", "b", 1), ("", "b[1,1]", 1)]),
    ("b[1],b[b[1]]", [
        ("b[1],b[b[1]]", "", 1), ("1,1", "b,b[b]", 2),
        ("1,b[1]", "b,b", 1), ("b[1],1", "b,b", 1),
        ("1,b[1]", "b[b]", 1), ("b[1],1", "b[b]", 1),
        ("1,b[b[1]]", "b", 1), ("b[b[1]],1", "b", 1),
        ("b[1],b[1]", "b", 2), ("", "b[1],b[b[1]]", 1),
    ]),
]


def _tensor(triples):
    out = defaultdict(int)
    for a, b, c in triples:
        out[(parse(a), parse(b))] += c
    return TensorLinComb(dict(out))


def _coassociative(delta, f):
    left, right = defaultdict(int), defaultdict(int)
    for (a, b), c in delta(f):
        for (a1, a2), c2 in delta(a):
            left[(a1, a2, b)] += c * c2
        for (b1, b2), c2 in delta(b):
            right[(a, b1, b2)] += c * c2
    return dict(left) == dict(right)


def _gl_tensor(x, y):
    out = defaultdict(int)
    for (a1, a2), c1 in x:
        for (b1, b2), c2 in y:
            for l, cl in grossman_larson(a1, b1):
                for r, cr in grossman_larson(a2, b2):
                    out[(l, r)] += c1 * c2 * cl * cr
    return TensorLinComb(dict(out))


def test_criterion_5_hopf_suite():
    t0 = time.perf_counter()
    basis = forests_up_to(3)
    with_unit = [UNIT] + basis
    notes, ok = [], True

    dev = max(shuffle_character_check(c, 3).max_deviation
              for c in (exact_coeff, CoeffMap(sff2_tableau()), CoeffMap(euler_ff_tableau())))
    ok &= dev <= HOPF_TOL
    notes.append(f"shuffle-character dev {dev:.1e}")

    assoc = all(grossman_larson(grossman_larson(a, b), c) == grossman_larson(a, grossman_larson(b, c))
                for a, b, c in itertools.product(basis, repeat=3) if order(a) + order(b) + order(c) <= 3)
    coassoc = all(_coassociative(deshuffle, f) for f in basis)
    bialg = all(deshuffle(grossman_larson(a, b)) == _gl_tensor(deshuffle(a), deshuffle(b))
                for a in basis for b in basis if order(a) + order(b) <= 3)
    gl, mk = defaultdict(int), defaultdict(int)
    for a in with_unit:
        for b in with_unit:
            if order(a) + order(b) <= 3:
                for s, c in grossman_larson(a, b):
                    gl[(s, a, b)] += c
    for s in with_unit:
        for (a, b), c in mkw_coproduct(s):
            mk[(s, a, b)] += c
    dual = dict(gl) == dict(mk)
    ok &= assoc and coassoc and bialg and dual
    notes.append(f"GL assoc {assoc}, deshuffle coassoc {coassoc}, bialgebra {bialg}, GL/MKW duality {dual}")

    matched = []
    for s, triples in MKW_DISPLAYED:
        matched.append(mkw_coproduct(s) == _tensor(triples))
    ok &= all(matched)
    notes.append(f"MKW worked examples term-for-term {sum(matched)}/{len(matched)}")
    if not matched[2]:
        # the one displayed example that differs: check which side the product agrees with
        target = parse("b[1],b[b[1]]")
        extra = [(parse("1,b[b[1]]"), parse("b")), (parse("b[b[1]],1"), parse("b"))]
        gl_extra = [grossman_larson(a, b).coeff(target) for a, b in extra]
        notes.append(f"(third display lists 2 terms whose GL coefficients are {gl_extra}, "
                     f"so it contradicts duality)")
    dt = time.perf_counter() - t0
    ok &= dt < HOPF_TIME
    notes.append(f"{dt:.1f} s")
    assert report(5, ok, "; ".join(notes))


# ------------------------------------------------------------------- 6

def test_criterion_6_geometry_oracles():
    n = 1000
    rng = np.random.default_rng(20)
    m = Sphere2()
    x = np.stack([np.zeros(n), rng.uniform(-0.7, 0.7, n), rng.uniform(-math.pi, math.pi, n)], axis=1)
    c = np.stack([rng.uniform(-0.5, 0.5, n), rng.uniform(-1.0, 1.0, n)], axis=1)

    def sphere_rhs(_, flat):
        y = flat.reshape(n, 3)
        rho = np.hypot(y[:, 0], y[:, 1])
        e1 = np.stack([-y[:, 2] * y[:, 0] / rho, -y[:, 2] * y[:, 1] / rho, rho], axis=1)
        e2 = np.stack([-y[:, 1] / rho, y[:, 0] / rho, np.zeros(n)], axis=1)
        return (c[:, :1] * e1 + c[:, 1:] * e2).ravel()

    sol = solve_ivp(sphere_rhs, (0, 1), m.to_ambient(x).ravel(), method="DOP853", rtol=1e-13, atol=1e-14)
    err_s = float(np.max(np.abs(m.to_ambient(m.flow(x, c)) - sol.y[:, -1].reshape(n, 3))))

    r0 = rng.uniform(0.3, 3.0, n)
    th0 = rng.uniform(-math.pi, math.pi, n)
    cc = np.stack([rng.uniform(-0.25, 1.0, n), rng.uniform(-1.0, 1.0, n)], axis=1)

    def cauchy_rhs(_, flat):
        y = flat.reshape(n, 2)
        return np.stack([cc[:, 0], cc[:, 1] / np.tanh(y[:, 0])], axis=1).ravel()

    sol = solve_ivp(cauchy_rhs, (0, 1), np.stack([r0, th0], axis=1).ravel(), method="DOP853",
                    rtol=1e-13, atol=1e-14)
    err_c = float(np.max(np.abs(Cauchy().flow(np.stack([r0, th0], axis=1), cc) - sol.y[:, -1].reshape(n, 2))))

    X = np.broadcast_to(np.eye(3), (8, 3, 3)).copy()
    so3 = SO3()
    for _ in range(10_000):
        X = so3.flow(X, rng.normal(scale=0.3, size=(8, 3)))
    drift = float(orthogonality_defect(X).max())
    ok = err_s < ORACLE_TOL and err_c < ORACLE_TOL and drift < ORTHO_TOL
    assert report(6, ok, f"S2 max err {err_s:.1e}, Cauchy max err {err_c:.1e}, "
                         f"SO(3) orthogonality drift {drift:.1e} after 1e4 steps")


# ------------------------------------------------------------------- 7

def test_criterion_7_so3_convergence():
    t0 = time.perf_counter()
    hs = tuple(2.0 ** -k for k in range(2, 7))
    base = ex.ExperimentConfig.for_experiment("so3_brownian", M=M_DESK, h_list=hs, reference="sff2",
                                              h_ref=2.0 ** -10)
    euler = ex.run_weak_error(base.with_updates(scheme="euler_ff"))
    sff2 = ex.run_weak_error(base.with_updates(scheme="sff2"))
    dt = time.perf_counter() - t0
    ref = euler.rows[0].reference
    exact = ex.so3_gauss_trace_exact(1.0)
    ok = _in(euler.slope, EULER_SLOPE) and _in(sff2.slope, SFF2_SLOPE) and dt <= RUN_TIME
    detail = (f"Euler-FF slope {_fmt_slope(euler.slope)}, SFF2 slope {_fmt_slope(sff2.slope)}; "
              f"Euler |err| {[f'{r.abs_error:.1e}' for r in euler.rows]}, "
              f"SFF2 |err| {[f'{r.abs_error:.1e}' for r in sff2.rows]}, "
              f"3x combined stderr {3 * euler.rows[0].combined_stderr:.1e}; "
              f"reference {ref:.5f} vs closed form {exact:.5f}; {dt:.0f} s")
    assert report(7, ok, detail)


# ------------------------------------------------------------------- 8

def test_criterion_8_sphere_stationarity():
    t0 = time.perf_counter()
    base = ex.ExperimentConfig.for_experiment("sphere_langevin", M=M_DESK, T=10.0, burn_in=5.0,
                                              h_list=(0.2, 0.1, 0.05))
    sff2 = ex.run_sphere_ergodic(base.with_updates(scheme="sff2"))
    # C from the two coarser steps, check at the finest one
    fit = ex.ErrorTable(rows=sff2.rows[:2])
    C = ex.fit_quadratic_bias(fit)
    fine = sff2.rows[-1]
    bound = 3 * fine.mc_stderr + abs(C) * fine.h ** 2
    sff2_ok = fine.abs_error <= bound and abs(fine.reference - SPHERE_TARGET) < 1e-15
    parts = [f"SFF2 h={fine.h}: |err| {fine.abs_error:.1e} <= {bound:.1e} (C={C:.3f}) {sff2_ok}"]
    ok = sff2_ok
    for scheme in ("geodesic_langevin", "projection_euler"):
        t = ex.run_sphere_ergodic(base.with_updates(scheme=scheme))
        good = _in(t.slope, BASELINE_SLOPE)
        ok &= good
        parts.append(f"{scheme} slope {_fmt_slope(t.slope)} "
                     f"(signed err {[f'{r.estimate - r.reference:+.2e}' for r in t.rows]}) {good}")
    dt = time.perf_counter() - t0
    ok &= dt <= RUN_TIME
    parts.append(f"stderr {fine.mc_stderr:.1e}; {dt:.0f} s")
    assert report(8, ok, "; ".join(parts))


# ------------------------------------------------------------------- 9

def test_criterion_9_cauchy_decay():
    cfg = ex.ExperimentConfig.for_experiment("cauchy", M=M_DESK, beta=4.0, T=1.5, h_list=(0.005,),
                                             scheme="euler_ff", noise="rademacher")
    res = ex.run_cauchy_ergodic(cfg)
    ok = res.resample_rate < RESAMPLE_MAX
    parts = []
    for name, target in DECAY.items():
        s = res.series[name]
        good = s.rate is not None and abs(s.rate - target) <= DECAY_REL * abs(target)
        ok &= good
        parts.append(f"{name} rate {s.rate:.3f} over t in {s.window} (target {target})")
    parts.append(f"resample rate {res.resample_rate:.2e}")
    assert report(9, ok, "; ".join(parts))


# ------------------------------------------------------------------ 10

def test_criterion_10_determinism():
    configs = [
        ex.ExperimentConfig.for_experiment("so3_brownian", M=2500, block_size=400, h_list=(0.25, 0.125),
                                           h_ref=2.0 ** -5),
        ex.ExperimentConfig.for_experiment("sphere_langevin", M=1500, block_size=400, T=1.0, burn_in=0.5,
                                           h_list=(0.1,)),
    ]
    same = []
    for cfg in configs:
        runner = ex.run_sphere_ergodic if cfg.manifold == "sphere2" else ex.run_weak_error
        same.append(runner(cfg).to_csv() == runner(cfg.with_updates(workers=3)).to_csv())
    cau = ex.ExperimentConfig.for_experiment("cauchy", M=1200, block_size=400, T=0.2)
    one = ex.run_cauchy_ergodic(cau).series["cauchy_phi1"].to_csv()
    many = ex.run_cauchy_ergodic(cau.with_updates(workers=3)).series["cauchy_phi1"].to_csv()
    same.append(one == many)
    assert report(10, all(same), f"byte-identical CSV for 1 vs 3 workers: {same}")


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
