"""Coefficient maps of the exact flow and of frozen-flow tableaux.

``e`` is read off the Grossman-Larson exponential of ``• + (1,1)``;
``a`` is evaluated for a given tableau by summing over stage indices,
labellings and one covariance factor per liana.  Both are linear forms on
exotic forests, and the weak order conditions of a method are ``a = e``.

Tableaux built by the named constructors hold exact sympy numbers, so
``a`` comes out exact (elements of Q(sqrt 2) for the shipped schemes).
Float tableaux are evaluated in double precision.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np
import sympy
from sympy.polys.constructor import construct_domain

from . import algebra
from .forests import (
    BLACK,
    UNIT,
    Forest,
    as_forest,
    canonicalize,
    enumerate_forests,
    forests_up_to,
    order,
)

SQRT2 = sympy.sqrt(2)


class TableauError(ValueError):
    pass


# ---------------------------------------------------------------- tableau

def _to_obj_array(x, shape):
    arr = np.empty(shape, dtype=object)
    flat = np.asarray(x, dtype=object).reshape(-1)
    if flat.size != arr.size:
        raise TableauError(f"expected {arr.size} entries for shape {shape}, got {flat.size}")
    for i, v in enumerate(flat):
        arr.flat[i] = _num(v)
    return arr


def _num(v):
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, Fraction):
        return sympy.Rational(v.numerator, v.denominator)
    return sympy.sympify(v)


@dataclass
class Tableau:
    """Coefficients of an explicit frozen-flow method.

    Arrays are 0-based: ``Z0[i, j, k]`` is the weight of the drift at stage
    ``j`` inside exponential ``k`` of stage ``i``; ``z0[i, k]`` is the same
    for the final update.  ``Zhat[i, k, l]`` and ``zhat[k, l]`` weight
    noise channel ``l``.  Exponential ``k = 0`` is applied first.

    ``diffusion`` is the amplitude ``sigma`` of the SDE
    ``dX = F dt + sigma * sum_d E_d o dW_d`` that the literal noise
    coefficients are written for; steppers rescale by the problem's own
    amplitude divided by this one.
    """

    Z0: np.ndarray
    z0: np.ndarray
    Zhat: np.ndarray
    zhat: np.ndarray
    name: str = "custom"
    diffusion: object = SQRT2

    def __post_init__(self):
        z0 = np.asarray(self.z0, dtype=object)
        zhat = np.asarray(self.zhat, dtype=object)
        if z0.ndim != 2 or zhat.ndim != 2:
            raise TableauError("z0 must be (s, K) and zhat (K, L)")
        s, K = z0.shape
        L = zhat.shape[1]
        if zhat.shape[0] != K:
            raise TableauError("zhat must have K rows")
        self.Z0 = _to_obj_array(self.Z0, (s, s, K))
        self.z0 = _to_obj_array(z0, (s, K))
        self.Zhat = _to_obj_array(self.Zhat, (s, K, L))
        self.zhat = _to_obj_array(zhat, (K, L))
        self.diffusion = _num(self.diffusion)

    @property
    def s(self) -> int:
        return self.z0.shape[0]

    @property
    def K(self) -> int:
        return self.z0.shape[1]

    @property
    def L(self) -> int:
        return self.zhat.shape[1]

    def entries(self):
        return list(self.Z0.flat) + list(self.z0.flat) + list(self.Zhat.flat) + list(self.zhat.flat)

    @property
    def is_exact(self) -> bool:
        return all(not isinstance(v, float) for v in self.entries() + [self.diffusion])

    def is_explicit(self) -> bool:
        for i in range(self.s):
            for j in range(i, self.s):
                if any(self.Z0[i, j, k] != 0 for k in range(self.K)):
                    return False
        return True

    def numeric(self) -> dict:
        """Float copies of the coefficient arrays (and diffusion)."""
        f = np.vectorize(lambda v: float(v), otypes=[float])
        return {
            "Z0": f(self.Z0), "z0": f(self.z0),
            "Zhat": f(self.Zhat), "zhat": f(self.zhat),
            "diffusion": float(self.diffusion),
        }

    def noise_normalized(self) -> "Tableau":
        """Copy with noise rows rescaled to the sqrt(2) convention of ``e``."""
        if self.diffusion == SQRT2:
            return self
        if isinstance(self.diffusion, float):
            c = math.sqrt(2.0) / self.diffusion
        else:
            c = sympy.radsimp(SQRT2 / self.diffusion)
        scale = np.vectorize(lambda v: v * c, otypes=[object])
        return Tableau(self.Z0, self.z0, scale(self.Zhat), scale(self.zhat),
                       name=self.name, diffusion=SQRT2 if not isinstance(c, float) else math.sqrt(2.0))

    def permute_noise(self, perm) -> "Tableau":
        """Reorder the noise channels: new channel ``l`` is old ``perm[l]``."""
        perm = list(perm)
        return Tableau(self.Z0, self.z0, self.Zhat[:, :, perm], self.zhat[:, perm],
                       name=self.name, diffusion=self.diffusion)


def euler_ff_tableau() -> Tableau:
    return Tableau(
        Z0=[[[0]]], z0=[[1]], Zhat=[[[0]]], zhat=[[SQRT2]],
        name="euler_ff", diffusion=SQRT2,
    )


def sff2_tableau() -> Tableau:
    r = SQRT2
    Z0 = np.zeros((2, 2, 2), dtype=object)
    Z0[1, 0, 0] = sympy.Rational(1, 2)
    Zhat = np.zeros((2, 2, 2), dtype=object)
    Zhat[1, 0, 0] = 1
    z0 = [[1 - r / 2, r / 2 - 1],
          [r - 1, 2 - r]]
    zhat = [[r, 0],
            [1 - r, 1]]
    return Tableau(Z0, z0, Zhat, zhat, name="sff2", diffusion=SQRT2)


def brownian2_tableau() -> Tableau:
    """Drift-free two-exponential scheme for bi-invariant Lie groups."""
    r = SQRT2
    return Tableau(
        Z0=np.zeros((1, 1, 2), dtype=object), z0=[[0, 0]],
        Zhat=np.zeros((1, 2, 2), dtype=object),
        zhat=[[1, 0], [r / 2 - 1, r / 2]],
        name="brownian2", diffusion=1,
    )


NAMED_TABLEAUX: dict[str, Callable[[], Tableau]] = {
    "euler_ff": euler_ff_tableau,
    "sff2": sff2_tableau,
    "brownian2": brownian2_tableau,
}


# ------------------------------------------------------------ file format

_KEYS = ("s", "K", "L", "diffusion", "Z0", "z0", "Zhat", "zhat", "name")


def parse_tableau(text: str) -> Tableau:
    """Read the flat text format written by :func:`format_tableau`.

    Lines hold a keyword followed by values; array keywords may continue
    over the following lines.  ``#`` starts a comment.  Values are parsed
    with sympy, so ``sqrt(2)/2`` and ``1/3`` stay exact; decimal literals
    make the tableau a float one.
    """
    fields: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head in _KEYS:
            current = head
            if current in fields:
                raise TableauError(f"duplicate field {head!r}")
            fields[current] = list(rest)
        elif current is None:
            raise TableauError(f"unknown field {head!r}")
        else:
            fields[current].extend(line.split())
    for k in ("s", "K", "L", "Z0", "z0", "Zhat", "zhat"):
        if k not in fields:
            raise TableauError(f"missing field {k!r}")
    try:
        s, K, L = (int(fields[k][0]) for k in ("s", "K", "L"))
    except (ValueError, IndexError) as exc:
        raise TableauError("s, K and L must be integers") from exc

    def vals(key, shape):
        toks = fields[key]
        n = int(np.prod(shape))
        if len(toks) != n:
            raise TableauError(f"{key}: expected {n} values, got {len(toks)}")
        out = []
        for t in toks:
            if re.fullmatch(r"[-+]?\d*\.\d*(e[-+]?\d+)?|[-+]?\d+e[-+]?\d+", t, re.I):
                out.append(float(t))
            else:
                try:
                    out.append(sympy.sympify(t))
                except (sympy.SympifyError, TypeError) as exc:
                    raise TableauError(f"{key}: cannot parse {t!r}") from exc
        return np.array(out, dtype=object).reshape(shape)

    diffusion = sympy.sympify(fields["diffusion"][0]) if "diffusion" in fields else SQRT2
    name = fields.get("name", ["custom"])[0]
    return Tableau(vals("Z0", (s, s, K)), vals("z0", (s, K)), vals("Zhat", (s, K, L)),
                   vals("zhat", (K, L)), name=name, diffusion=diffusion)


def format_tableau(t: Tableau) -> str:
    def row(vs):
        return " ".join(str(v).replace(" ", "") for v in vs)

    lines = [f"name {t.name}", f"s {t.s}", f"K {t.K}", f"L {t.L}", f"diffusion {t.diffusion}"]
    lines.append("Z0")
    for i in range(t.s):
        for j in range(t.s):
            lines.append("  " + row(t.Z0[i, j]))
    lines.append("z0")
    for i in range(t.s):
        lines.append("  " + row(t.z0[i]))
    lines.append("Zhat")
    for i in range(t.s):
        for k in range(t.K):
            lines.append("  " + row(t.Zhat[i, k]))
    lines.append("zhat")
    for k in range(t.K):
        lines.append("  " + row(t.zhat[k]))
    return "\n".join(lines) + "\n"


def load_tableau(name_or_path: str) -> Tableau:
    if name_or_path in NAMED_TABLEAUX:
        return NAMED_TABLEAUX[name_or_path]()
    with open(name_or_path, encoding="utf-8") as fh:
        return parse_tableau(fh.read())


# ------------------------------------------------------ exact coefficient

LIANA_GENERATOR = (Forest(((BLACK, ()),)), Forest(((1, ()), (1, ()))))


@lru_cache(maxsize=None)
def _l_power(n: int) -> algebra.LinComb:
    if n == 0:
        return algebra.LinComb.basis(UNIT)
    gen = algebra.LinComb({f: 1 for f in LIANA_GENERATOR})
    return algebra.grossman_larson(gen, _l_power(n - 1))


def exact_coeff(forest) -> Fraction:
    """Coefficient ``e`` of the exact flow."""
    f = as_forest(forest)
    n = order(f)
    return Fraction(_l_power(n).coeff(f), math.factorial(n))


def _insert_first(trees: tuple, at: dict, prefix: tuple = ()) -> tuple:
    """Prepend ``at[path]`` to the children of each addressed node, in one pass."""
    out = []
    for i, (d, ch) in enumerate(trees):
        p = prefix + (i,)
        ch = _insert_first(ch, at, p)
        out.append((d, at.get(p, ()) + ch))
    return tuple(out)


def _black_nodes(trees, prefix=()):
    for i, (d, ch) in enumerate(trees):
        if d == BLACK:
            yield prefix + (i,)
        yield from _black_nodes(ch, prefix + (i,))


def _left_moves(f: tuple):
    """Forests reached by multiplying ``f`` on the left by one generator."""
    dot = (BLACK, ())
    nodes = list(_black_nodes(f))
    yield (dot,) + f
    for p in nodes:
        yield _insert_first(f, {p: (dot,)})
    m = max((d for d in _all_decs(f)), default=0) + 1
    leaf = (m, ())
    yield (leaf, leaf) + f
    for p in nodes:
        g = (leaf,) + _insert_first(f, {p: (leaf,)})
        yield g
        yield g
    for p in nodes:
        for q in nodes:
            if p == q:
                yield _insert_first(f, {p: (leaf, leaf)})
            else:
                yield _insert_first(f, {p: (leaf,), q: (leaf,)})


def _all_decs(trees):
    for d, ch in trees:
        yield d
        yield from _all_decs(ch)


@lru_cache(maxsize=None)
def _alpha_level(n: int) -> dict:
    if n == 0:
        return {UNIT: 1}
    out: dict = {}
    for f, c in _alpha_level(n - 1).items():
        for g in _left_moves(tuple(f)):
            g = canonicalize(g)
            out[g] = out.get(g, 0) + c
    return out


def exact_coeff_by_counting(forest) -> Fraction:
    """Independent route to ``e``: count insertion sequences, divide by n!."""
    f = as_forest(forest)
    n = order(f)
    return Fraction(_alpha_level(n).get(f, 0), math.factorial(n))


# ----------------------------------------------------------- labellings

@dataclass(frozen=True)
class Labelling:
    """Exponential index per node (preorder) and its factorial weight."""

    labels: tuple
    weight: Fraction


def _preorder(forest):
    """(decoration, parent index) per node in preorder; parent -1 for roots."""
    out = []

    def rec(trees, parent):
        for d, ch in trees:
            idx = len(out)
            out.append((d, parent))
            rec(ch, idx)

    rec(forest, -1)
    return out


def _sibling_groups(nodes) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for idx, (_, parent) in enumerate(nodes):
        groups.setdefault(parent, []).append(idx)
    return [groups[p] for p in sorted(groups)]


def _group_weight(seq) -> Fraction:
    w = 1
    for _, run in itertools.groupby(seq):
        w *= math.factorial(len(list(run)))
    return Fraction(1, w)


def labellings(forest, K: int) -> list[Labelling]:
    """All labellings with labels in ``1..K``, nondecreasing within sibling groups."""
    if K < 1:
        raise ValueError("K must be at least 1")
    nodes = _preorder(as_forest(forest))
    groups = _sibling_groups(nodes)
    per_group = [list(itertools.combinations_with_replacement(range(1, K + 1), len(g))) for g in groups]
    out = []
    for choice in itertools.product(*per_group):
        labels = [0] * len(nodes)
        w = Fraction(1)
        for g, seq in zip(groups, choice):
            for idx, k in zip(g, seq):
                labels[idx] = k
            w *= _group_weight(seq)
        out.append(Labelling(tuple(labels), w))
    return out


# ------------------------------------------------------ numerical coeff

def stochastic_covariance(t: Tableau, role_a, role_b):
    """Single-channel covariance of two noise coefficients of ``t``.

    A role is ``("final", k)`` for the final update's exponential ``k`` or
    ``("stage", i, k)`` for exponential ``k`` of stage ``i`` (0-based).
    """

    def row(role):
        if role[0] == "final":
            return t.zhat[role[1]]
        if role[0] == "stage":
            return t.Zhat[role[1], role[2]]
        raise ValueError(f"unknown role {role!r}")

    total = sum((a * b for a, b in zip(row(role_a), row(role_b))), start=0)
    return sympy.nsimplify(total) if not isinstance(total, float) and t.is_exact else total


class _Field:
    """Arithmetic backend: exact algebraic numbers via sympy domains, or floats."""

    def __init__(self, t: Tableau):
        entries = t.entries()
        if t.is_exact:
            dom, els = construct_domain([sympy.sympify(v) for v in entries], extension=True)
            self.dom = dom
            conv = iter(els)
        else:
            self.dom = None
            conv = iter(float(v) for v in entries)
        take = lambda shape: np.array([next(conv) for _ in range(int(np.prod(shape)))], dtype=object).reshape(shape)
        self.Z0 = take(t.Z0.shape)
        self.z0 = take(t.z0.shape)
        self.Zhat = take(t.Zhat.shape)
        self.zhat = take(t.zhat.shape)
        self.zero = self.dom.zero if self.dom else 0.0

    def const(self, q: Fraction):
        if self.dom is None:
            return float(q)
        return self.dom.convert(sympy.Rational(q.numerator, q.denominator))

    def out(self, x):
        if self.dom is None:
            return float(x)
        return sympy.expand(self.dom.to_sympy(x))


def _coeff_eval(forest: Forest, t: Tableau, fld: _Field):
    nodes = _preorder(forest)
    n = len(nodes)
    if n == 0:
        return fld.out(fld.const(Fraction(1)))
    s, L = t.s, t.L
    children: list[list[int]] = [[] for _ in range(n)]
    roots = []
    for idx, (_, parent) in enumerate(nodes):
        (roots if parent < 0 else children[parent]).append(idx)
    liana_slot: dict[int, int] = {}
    for idx, (d, _) in enumerate(nodes):
        if d != BLACK and d not in liana_slot:
            liana_slot[d] = len(liana_slot)
    m = len(liana_slot)
    labs = labellings(forest, t.K)

    total = fld.zero
    for lab in labs:
        k = [x - 1 for x in lab.labels]
        acc = fld.zero
        for chan in itertools.product(range(L), repeat=m):
            memo: dict = {}

            def node_val(v, i):
                key = (v, i)
                if key in memo:
                    return memo[key]
                val = None
                for c in children[v]:
                    dc = nodes[c][0]
                    if dc == BLACK:
                        f = fld.zero
                        for j in range(s):
                            coef = fld.Z0[i, j, k[c]]
                            if coef:
                                f = f + coef * node_val(c, j)
                    else:
                        f = fld.Zhat[i, k[c], chan[liana_slot[dc]]]
                    if not f:
                        val = fld.zero
                        break
                    val = f if val is None else val * f
                if val is None:
                    val = fld.const(Fraction(1))
                memo[key] = val
                return val

            prod = None
            for r in roots:
                dr = nodes[r][0]
                if dr == BLACK:
                    f = fld.zero
                    for i in range(s):
                        coef = fld.z0[i, k[r]]
                        if coef:
                            f = f + coef * node_val(r, i)
                else:
                    f = fld.zhat[k[r], chan[liana_slot[dr]]]
                if not f:
                    prod = fld.zero
                    break
                prod = f if prod is None else prod * f
            if prod:
                acc = acc + prod
        if acc:
            total = total + fld.const(lab.weight) * acc
    return fld.out(total)


def numerical_coeff(forest, t: Tableau):
    """Coefficient ``a`` of the Talay-Tubaro expansion of the method ``t``.

    Returns a sympy number for exact tableaux and a float otherwise.
    """
    if not t.is_explicit():
        raise TableauError(f"tableau {t.name!r} is not explicit")
    tn = t.noise_normalized()
    return _coeff_eval(as_forest(forest), tn, _Field(tn))


class CoeffMap:
    """Memoized coefficient map for a tableau (or for ``e`` when ``t`` is None)."""

    def __init__(self, t: Tableau | None = None):
        self.tableau = t
        self._cache: dict = {}
        if t is not None:
            if not t.is_explicit():
                raise TableauError(f"tableau {t.name!r} is not explicit")
            self._tn = t.noise_normalized()
            self._field = _Field(self._tn)

    def __call__(self, forest):
        f = as_forest(forest)
        if f not in self._cache:
            if self.tableau is None:
                self._cache[f] = exact_coeff(f)
            else:
                self._cache[f] = _coeff_eval(f, self._tn, self._field)
        return self._cache[f]

    def on(self, x: algebra.LinComb):
        """Linear extension to a combination of forests."""
        return sum((c * self(f) for f, c in algebra.lincomb(x)), start=0)


# ------------------------------------------------------- order conditions

@dataclass
class OrderRow:
    forest: Forest
    order: int
    a: object
    e: Fraction
    residual: object

    def residual_float(self) -> float:
        return abs(float(self.residual))


def _as_sym(x):
    if isinstance(x, Fraction):
        return sympy.Rational(x.numerator, x.denominator)
    return x


def order_conditions(p, t: Tableau) -> list[OrderRow]:
    """One row per exotic forest of order ``1..p`` with ``a``, ``e`` and ``a - e``."""
    a = CoeffMap(t)
    rows = []
    for f in forests_up_to(p):
        av, ev = a(f), exact_coeff(f)
        if isinstance(av, float):
            res = av - float(ev)
        else:
            res = sympy.expand(_as_sym(av) - _as_sym(ev))
        rows.append(OrderRow(f, order(f), av, ev, res))
    return rows


def weak_order(t: Tableau, p_max: int = 3, tol: float = 1e-12) -> int:
    """Largest ``p <= p_max`` with all residuals of order ``<= p`` below ``tol``."""
    rows = order_conditions(p_max, t)
    best = 0
    for p in range(1, p_max + 1):
        if all(r.residual_float() < tol for r in rows if r.order <= p):
            best = p
        else:
            break
    return best


@dataclass
class CharacterReport:
    max_deviation: float
    n_pairs: int
    worst: tuple | None = None
    failures: list = field(default_factory=list)

    def ok(self, tol: float = 1e-12) -> bool:
        return self.max_deviation <= tol


def shuffle_character_check(c: Callable, p, tol: float = 1e-12) -> CharacterReport:
    """Check ``c(x ⧢ y) = c(x) c(y)`` on all forest pairs with total order ``<= p``."""
    basis = forests_up_to(p)
    worst, worst_pair, n, fails = 0.0, None, 0, []
    for x in basis:
        for y in basis:
            if order(x) + order(y) > p:
                continue
            n += 1
            lhs = sum((k * _as_sym(c(f)) for f, k in algebra.shuffle(x, y)), start=0)
            diff = _as_sym(lhs) - _as_sym(c(x)) * _as_sym(c(y))
            if isinstance(diff, sympy.Basic):
                diff = sympy.expand(diff)
            dev = abs(float(diff))
            if dev > tol:
                fails.append((x, y, dev))
            if worst_pair is None or dev > worst:
                worst, worst_pair = dev, (x, y)
    return CharacterReport(worst, n, worst_pair, fails)


def report_csv(rows: Iterable[OrderRow]) -> str:
    """CSV with columns forest_encoding, order, a_value, e_value, residual."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["forest_encoding", "order", "a_value", "e_value", "residual"])
    for r in rows:
        w.writerow([str(r.forest), r.order, _fmt(r.a), _fmt(r.e), _fmt(r.residual)])
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    x = sympy.nsimplify(x) if isinstance(x, sympy.Basic) else x
    return str(x).replace(" ", "")
