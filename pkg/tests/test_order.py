import inspect
import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest
import sympy

from frozenflow.forests import enumerate_forests, forests_up_to, parse
from frozenflow.order_theory import (
    CoeffMap,
    Tableau,
    TableauError,
    brownian2_tableau,
    euler_ff_tableau,
    exact_coeff,
    exact_coeff_by_counting,
    format_tableau,
    labellings,
    numerical_coeff,
    order_conditions,
    parse_tableau,
    report_csv,
    sff2_tableau,
    shuffle_character_check,
    stochastic_covariance,
    weak_order,
)

R2 = sympy.sqrt(2)

E_TABLE = {
    "b": 1, "1,1": 1,
    "b[b]": Fraction(1, 2), "b[1,1]": Fraction(1, 2), "b,b": Fraction(1, 2),
    "b[1],1": 0, "1,b[1]": 1, "b,1,1": Fraction(1, 2), "1,b,1": 0, "1,1,b": Fraction(1, 2),
    "2,2,1,1": Fraction(1, 2), "2,1,2,1": 0, "1,2,2,1": 0,
}


# --- independent oracle: the order-two sums written out index by index ----

def _fact_weight(ks):
    w = 1
    for k in set(ks):
        w *= math.factorial(ks.count(k))
    return sympy.Rational(1, w)


def _nondecreasing(n, K):
    """Label tuples (left to right) that are nondecreasing, with factorial weights."""
    for ks in itertools.combinations_with_replacement(range(K), n):
        yield ks, _fact_weight(list(ks))


def table_oracle(text, t: Tableau):
    t = t.noise_normalized()
    s, K = t.s, t.K
    z0, Z0, zh, Zh = t.z0, t.Z0, t.zhat, t.Zhat

    def ez(k1, k2):  # covariance of two final-update noise coefficients
        return sum(zh[k1, l] * zh[k2, l] for l in range(t.L))

    def eZz(i, k3, k1):
        return sum(Zh[i, k3, l] * zh[k1, l] for l in range(t.L))

    def eZZ(i, k3, k2):
        return sum(Zh[i, k3, l] * Zh[i, k2, l] for l in range(t.L))

    S, Ks = range(s), range(K)
    tot = 0
    if text == "b":
        tot = sum(z0[i, k] for i in S for k in Ks)
    elif text == "1,1":
        tot = sum(w * ez(a, b) for (a, b), w in _nondecreasing(2, K))
    elif text == "b[b]":
        tot = sum(z0[i, k2] * Z0[i, j, k1] for i in S for j in S for k1 in Ks for k2 in Ks)
    elif text == "b[1,1]":
        tot = sum(w * eZZ(i, a, b) * z0[i, k1] for i in S for k1 in Ks for (a, b), w in _nondecreasing(2, K))
    elif text == "b,b":
        tot = sum(w * z0[j, a] * z0[i, b] for i in S for j in S for (a, b), w in _nondecreasing(2, K))
    elif text == "b[1],1":   # b left (k2), liana root right (k1), k1 >= k2
        tot = sum(w * z0[i, a] * eZz(i, k3, b) for i in S for k3 in Ks for (a, b), w in _nondecreasing(2, K))
    elif text == "1,b[1]":   # liana root left (k1), b right (k2), k2 >= k1
        tot = sum(w * z0[i, b] * eZz(i, k3, a) for i in S for k3 in Ks for (a, b), w in _nondecreasing(2, K))
    elif text in ("b,1,1", "1,b,1", "1,1,b"):
        pos = text.split(",").index("b")
        for ks, w in _nondecreasing(3, K):
            rest = [k for p, k in enumerate(ks) if p != pos]
            tot += w * sum(z0[i, ks[pos]] for i in S) * ez(*rest)
    elif text in ("2,2,1,1", "2,1,2,1", "1,2,2,1"):
        labels = text.split(",")
        for ks, w in _nondecreasing(4, K):
            pair = {}
            for lab, k in zip(labels, ks):
                pair.setdefault(lab, []).append(k)
            tot += w * ez(*pair["1"]) * ez(*pair["2"])
    else:
        raise KeyError(text)
    return sympy.nsimplify(sympy.expand(tot))


def random_tableau(seed, s=2, K=3, L=2):
    rnd = random.Random(seed)

    def q():
        return sympy.Rational(rnd.randint(-6, 6), rnd.randint(1, 5))

    Z0 = np.zeros((s, s, K), dtype=object)
    for i in range(s):
        for j in range(i):
            for k in range(K):
                Z0[i, j, k] = q()
    z0 = [[q() for _ in range(K)] for _ in range(s)]
    Zhat = [[[q() for _ in range(L)] for _ in range(K)] for _ in range(s)]
    zhat = [[q() for _ in range(L)] for _ in range(K)]
    return Tableau(Z0, z0, Zhat, zhat, name=f"rand{seed}")


# ----------------------------------------------------------------- e

@pytest.mark.parametrize("text,value", list(E_TABLE.items()))
def test_exact_coeff_table(text, value):
    assert exact_coeff(parse(text)) == value


def test_exact_coeff_two_routes_agree():
    for f in forests_up_to(3):
        assert exact_coeff(f) == exact_coeff_by_counting(f), str(f)


def test_e_is_shuffle_character():
    rep = shuffle_character_check(exact_coeff, 3)
    assert rep.max_deviation == 0
    assert rep.n_pairs > 0


# ----------------------------------------------------------------- a

EULER_A = {
    "b": 1, "1,1": 1, "b,b": Fraction(1, 2),
    "b,1,1": Fraction(1, 3), "1,b,1": Fraction(1, 3), "1,1,b": Fraction(1, 3),
    "2,2,1,1": Fraction(1, 6), "2,1,2,1": Fraction(1, 6), "1,2,2,1": Fraction(1, 6),
    "b[b]": 0, "b[1,1]": 0, "1,b[1]": 0,
}


@pytest.mark.parametrize("text,value", list(EULER_A.items()))
def test_euler_coefficients(text, value):
    got = numerical_coeff(parse(text), euler_ff_tableau())
    assert sympy.simplify(got - sympy.Rational(str(value))) == 0


def test_sff2_worked_values():
    t = sff2_tableau()
    assert sympy.simplify(numerical_coeff(parse("1,b[1]"), t) - 1) == 0
    assert sympy.simplify(numerical_coeff(parse("b[1],1"), t)) == 0
    assert sympy.simplify(numerical_coeff(parse("b"), t) - 1) == 0
    assert sympy.simplify(sum(t.z0.flat) - 1) == 0
    assert sympy.simplify(numerical_coeff(parse("1,1"), t) - 1) == 0


@pytest.mark.parametrize("maker", [euler_ff_tableau, sff2_tableau, brownian2_tableau])
@pytest.mark.parametrize("text", list(E_TABLE))
def test_general_formula_matches_table_sums(maker, text):
    t = maker()
    assert sympy.simplify(numerical_coeff(parse(text), t) - table_oracle(text, t)) == 0


@pytest.mark.parametrize("seed", range(4))
def test_general_formula_matches_table_sums_random(seed):
    t = random_tableau(seed)
    for text in E_TABLE:
        got = numerical_coeff(parse(text), t)
        assert sympy.simplify(got - table_oracle(text, t)) == 0, text


def test_float_tableau_matches_exact():
    t = sff2_tableau()
    tf = Tableau(t.numeric()["Z0"], t.numeric()["z0"], t.numeric()["Zhat"], t.numeric()["zhat"],
                 diffusion=math.sqrt(2.0))
    for f in forests_up_to(2):
        assert abs(numerical_coeff(f, tf) - float(numerical_coeff(f, t))) < 1e-12


def test_no_dimension_argument():
    params = inspect.signature(numerical_coeff).parameters
    assert list(params) == ["forest", "t"]


def test_rejects_implicit():
    Z0 = np.zeros((2, 2, 1), dtype=object)
    Z0[0, 1, 0] = 1
    t = Tableau(Z0, [[1], [0]], np.zeros((2, 1, 1), dtype=object), [[1]])
    with pytest.raises(TableauError):
        numerical_coeff(parse("b"), t)


def test_noise_channel_permutation_invariance():
    t = random_tableau(11, L=3)
    tp = t.permute_noise([2, 0, 1])
    for f in forests_up_to(2):
        assert sympy.simplify(numerical_coeff(f, t) - numerical_coeff(f, tp)) == 0


# ------------------------------------------------------ order conditions

def test_euler_order_one():
    rows = order_conditions(1, euler_ff_tableau())
    assert [r.residual for r in rows] == [0, 0]
    assert weak_order(euler_ff_tableau()) == 1


def test_sff2_order_two_exactly():
    rows = order_conditions(3, sff2_tableau())
    assert all(r.residual_float() < 1e-12 for r in rows if r.order <= 2)
    assert max(r.residual_float() for r in rows if r.order == 3) > 1e-3
    assert weak_order(sff2_tableau()) == 2
    assert len(rows) == 2 + 11 + 95


def test_brownian2_drift_free_conditions():
    # without drift only the pure-liana conditions can hold
    rows = {str(r.forest): r for r in order_conditions(2, brownian2_tableau())}
    for text in ("1,1", "2,2,1,1", "2,1,2,1", "1,2,2,1"):
        assert rows[str(parse(text))].residual_float() < 1e-12, text


@pytest.mark.parametrize("maker", [euler_ff_tableau, sff2_tableau, brownian2_tableau])
def test_a_is_shuffle_character(maker):
    rep = shuffle_character_check(CoeffMap(maker()), 3)
    assert rep.ok(1e-12), rep.worst


def test_shuffle_relations_listed():
    for maker in (euler_ff_tableau, sff2_tableau, lambda: random_tableau(3)):
        a = CoeffMap(maker())
        P = lambda s: a(parse(s))  # noqa: E731
        assert sympy.simplify(P("b") ** 2 - 2 * P("b,b")) == 0
        assert sympy.simplify(P("b") * P("1,1") - P("b,1,1") - P("1,1,b") - P("1,b,1")) == 0
        assert sympy.simplify(P("1,1") ** 2 - 2 * (P("2,2,1,1") + P("2,1,2,1") + P("1,2,2,1"))) == 0


def test_report_csv_columns():
    text = report_csv(order_conditions(1, sff2_tableau()))
    lines = text.splitlines()
    assert lines[0] == "forest_encoding,order,a_value,e_value,residual"
    assert lines[1] == "b,1,1,1,0"
    assert lines[2] == '"1,1",1,1,1,0'


# ------------------------------------------------------------ labellings

def test_labellings_pair():
    got = {(lab.labels, lab.weight) for lab in labellings(parse("1,1"), 2)}
    # labels are listed left to right, so the right root carries k1
    assert got == {((1, 1), Fraction(1, 2)), ((1, 2), Fraction(1)), ((2, 2), Fraction(1, 2))}


def test_labellings_single_and_nested():
    assert [(lab.labels, lab.weight) for lab in labellings(parse("b"), 1)] == [((1,), 1)]
    nested = labellings(parse("b[b]"), 2)
    assert len(nested) == 4 and all(lab.weight == 1 for lab in nested)


def test_labellings_deterministic():
    f = parse("b[1,1],b")
    assert labellings(f, 3) == labellings(f, 3)
    with pytest.raises(ValueError):
        labellings(f, 0)


# ------------------------------------------------------------ covariance

def test_covariances():
    assert stochastic_covariance(euler_ff_tableau(), ("final", 0), ("final", 0)) == 2
    t = sff2_tableau()
    assert sympy.simplify(stochastic_covariance(t, ("final", 1), ("final", 0)) - (R2 - 2)) == 0
    assert stochastic_covariance(t, ("stage", 0, 0), ("final", 0)) == 0
    with pytest.raises(ValueError):
        stochastic_covariance(t, ("bogus", 0), ("final", 0))


# ------------------------------------------------------------ tableau I/O

@pytest.mark.parametrize("maker", [euler_ff_tableau, sff2_tableau, brownian2_tableau])
def test_tableau_round_trip(maker):
    t = maker()
    back = parse_tableau(format_tableau(t))
    assert back.name == t.name and (back.s, back.K, back.L) == (t.s, t.K, t.L)
    for x, y in zip(t.entries() + [t.diffusion], back.entries() + [back.diffusion]):
        assert sympy.simplify(sympy.sympify(x) - y) == 0
    assert [r.residual_float() for r in order_conditions(2, back)] == \
        [r.residual_float() for r in order_conditions(2, t)]


def test_tableau_file_float_values():
    text = """
    name half
    s 1
    K 1
    L 1
    Z0 0
    z0 1.0
    Zhat 0
    zhat 1.4142135623730951
    """
    t = parse_tableau(text)
    assert not t.is_exact
    rows = order_conditions(1, t)
    assert all(r.residual_float() < 1e-12 for r in rows)


@pytest.mark.parametrize("text", [
    "s 1\nK 1\nL 1\nZ0 0\nz0 1\nZhat 0\n",                 # missing zhat
    "s 1\nK 1\nL 1\nZ0 0\nz0 1 2\nZhat 0\nzhat 1\n",       # wrong count
    "s x\nK 1\nL 1\nZ0 0\nz0 1\nZhat 0\nzhat 1\n",         # bad integer
    "foo 1\n",                                              # unknown key
    "s 1\nK 1\nL 1\nZ0 0\nz0 1\nZhat 0\nzhat )(\n",        # unparsable value
])
def test_tableau_file_errors(text):
    with pytest.raises(TableauError):
        parse_tableau(text)


def test_enumeration_used_by_order_conditions():
    assert [r.forest for r in order_conditions(2, euler_ff_tableau())] == \
        enumerate_forests(1) + enumerate_forests(2)
