"""Products and coproducts on linear combinations of exotic forests.

Every operation is defined on single forests and extended bilinearly to
:class:`LinComb`.  Before two forests are combined the liana ids of the
right operand are shifted past those of the left one, so lianas never
merge by accident; results are canonicalized.

The internal ``_raw`` helpers work on plain tuples and do *not* relabel,
which lets tests compose partial (decorated) forests that share liana ids.
"""

from __future__ import annotations

import itertools
from collections import Counter
from fractions import Fraction
from numbers import Number
from typing import Iterable, Sequence

from .forests import (
    BLACK,
    UNIT,
    Forest,
    as_forest,
    canonicalize,
    cut_points,
    components,
    encode,
    forest_key,
    iter_nodes,
    max_liana,
    shift_lianas,
)


# ------------------------------------------------------------ containers

class LinComb:
    """Finite linear combination with exact (int / Fraction) coefficients.

    Keys are forests, or pairs of forests for tensors.  Zero coefficients
    are dropped, so equality is structural.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict = {}
        if terms is None:
            return
        items = terms.items() if hasattr(terms, "items") else terms
        for k, v in items:
            if v:
                self.terms[k] = self.terms.get(k, 0) + v
        self.terms = {k: v for k, v in self.terms.items() if v}

    @classmethod
    def basis(cls, key, coeff=1):
        return cls({key: coeff})

    def copy(self):
        out = type(self)()
        out.terms = dict(self.terms)
        return out

    def coeff(self, key):
        return self.terms.get(key, 0)

    def items(self):
        return self.terms.items()

    def keys(self):
        return self.terms.keys()

    def __iter__(self):
        return iter(self.terms.items())

    def __len__(self):
        return len(self.terms)

    def __bool__(self):
        return bool(self.terms)

    def _combine(self, other, sign):
        if not isinstance(other, LinComb):
            return NotImplemented
        out = self.copy()
        for k, v in other.terms.items():
            w = out.terms.get(k, 0) + sign * v
            if w:
                out.terms[k] = w
            else:
                out.terms.pop(k, None)
        return out

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return self * -1

    def __mul__(self, c):
        if not isinstance(c, Number):
            return NotImplemented
        out = type(self)()
        if c:
            out.terms = {k: v * c for k, v in self.terms.items()}
        return out

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, LinComb):
            return self.terms == other.terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def _key_str(self, k):
        return encode(k) or "1"

    def sorted_items(self):
        return sorted(self.terms.items(), key=lambda kv: self._sort_key(kv[0]))

    def _sort_key(self, k):
        return forest_key(k)

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for k, v in self.sorted_items():
            s = self._key_str(k)
            parts.append(f"({s})" if v == 1 else f"{v}*({s})")
        return " + ".join(parts)


class TensorLinComb(LinComb):
    """Linear combination of pairs ``(left, right)`` of forests."""

    __slots__ = ()

    def _key_str(self, k):
        return f"{encode(k[0]) or '1'} ⊗ {encode(k[1]) or '1'}"

    def _sort_key(self, k):
        return (forest_key(k[0]), forest_key(k[1]))


def lincomb(x) -> LinComb:
    """Coerce a forest, its text encoding or a LinComb into a LinComb."""
    if isinstance(x, LinComb):
        return x
    return LinComb.basis(as_forest(x))


def _bilinear(op, x, y, out_cls=LinComb):
    out: dict = {}
    for a, ca in lincomb(x):
        for b, cb in lincomb(y):
            for k, v in op(a, b).items():
                out[k] = out.get(k, 0) + ca * cb * v
    return out_cls(out)


def _linear(op, x, out_cls):
    out: dict = {}
    for a, ca in lincomb(x):
        for k, v in op(a).items():
            out[k] = out.get(k, 0) + ca * v
    return out_cls(out)


def _canon_counter(raw_forests: Iterable) -> Counter:
    return Counter(canonicalize(f) for f in raw_forests)


def _disjoint(pi: Sequence, eta: Sequence):
    """Shift ``eta``'s lianas past ``pi``'s."""
    return tuple(pi), shift_lianas(eta, max_liana(pi))


# --------------------------------------------------------------- concat

def concat(pi, eta) -> Forest:
    """Juxtapose the roots of ``pi`` then those of ``eta``."""
    a, b = _disjoint(as_forest(pi), as_forest(eta))
    return canonicalize(a + b)


def _check_ordering(omega, n_left, n_right):
    omega = tuple(int(w) for w in omega)
    if any(w not in (0, 1) for w in omega):
        raise ValueError("root ordering entries must be 0 (left) or 1 (right)")
    if omega.count(0) != n_left or omega.count(1) != n_right:
        raise ValueError(
            f"root ordering {omega} does not interleave {n_left} left and {n_right} right roots"
        )
    return omega


def _interleave(left, right, omega):
    li = iter(left)
    ri = iter(right)
    return tuple(next(ri) if w else next(li) for w in omega)


def concat_ordered(pi, eta, omega) -> Forest:
    """Interleave roots of ``pi`` (flag 0) and ``eta`` (flag 1) as ``omega`` says."""
    a, b = _disjoint(as_forest(pi), as_forest(eta))
    omega = _check_ordering(omega, len(a), len(b))
    return canonicalize(_interleave(a, b, omega))


def interleavings(n_left: int, n_right: int):
    """All 0/1 root orderings with the given numbers of left and right roots."""
    n = n_left + n_right
    for pos in itertools.combinations(range(n), n_right):
        w = [0] * n
        for p in pos:
            w[p] = 1
        yield tuple(w)


# -------------------------------------------------------------- shuffle

def _shuffle_raw(a, b) -> list:
    return [_interleave(a, b, w) for w in interleavings(len(a), len(b))]


def _shuffle_pair(pi, eta) -> Counter:
    a, b = _disjoint(pi, eta)
    return _canon_counter(_shuffle_raw(a, b))


def shuffle(x, y) -> LinComb:
    """Sum over all interleavings of the two root sequences."""
    return _bilinear(_shuffle_pair, x, y)


def _multi_shuffle(groups: list[tuple]) -> list[tuple]:
    """All interleavings of several sequences, each kept in order."""
    groups = [g for g in groups if g]
    if not groups:
        return [()]
    out = []
    for i, g in enumerate(groups):
        rest = groups[:i] + [g[1:]] + groups[i + 1:]
        for tail in _multi_shuffle(rest):
            out.append((g[0],) + tail)
    return out


# ------------------------------------------------------------ deshuffle

def _deshuffle_raw(pi) -> list:
    comps = components(pi)
    out = []
    for mask in range(1 << len(comps)):
        left_idx = set()
        for j, c in enumerate(comps):
            if mask >> j & 1:
                left_idx.update(c)
        left = tuple(t for i, t in enumerate(pi) if i in left_idx)
        right = tuple(t for i, t in enumerate(pi) if i not in left_idx)
        out.append((left, right))
    return out


def _deshuffle_one(pi) -> Counter:
    return Counter((canonicalize(a), canonicalize(b)) for a, b in _deshuffle_raw(pi))


def deshuffle(x) -> TensorLinComb:
    """Split the roots in every liana-closed way into (kept, rest)."""
    return _linear(_deshuffle_one, x, TensorLinComb)


# ------------------------------------------------------------ deconcat

def _deconcat_one(pi) -> Counter:
    cuts = [0] + cut_points(pi) + [len(pi)] if pi else [0]
    out = Counter()
    for k in sorted(set(cuts)):
        out[(canonicalize(pi[:k]), canonicalize(pi[k:]))] += 1
    return out


def deconcat(x) -> TensorLinComb:
    """Split between irreducible factors (including the two trivial splits)."""
    return _linear(_deconcat_one, x, TensorLinComb)


# -------------------------------------------------------------- grafting

def black_paths(forest) -> list[tuple]:
    """Paths (tuples of child indices) to black nodes, in preorder."""
    out = []

    def rec(trees, prefix):
        for i, (d, ch) in enumerate(trees):
            p = prefix + (i,)
            if d == BLACK:
                out.append(p)
            rec(ch, p)

    rec(forest, ())
    return out


def _attach(forest, attach: dict, prefix=()):
    out = []
    for i, (d, ch) in enumerate(forest):
        p = prefix + (i,)
        new_ch = _attach(ch, attach, p)
        extra = attach.get(p)
        if extra:
            new_ch = tuple(extra) + new_ch
        out.append((d, new_ch))
    return tuple(out)


def _graft_raw(pi, eta) -> list:
    """Every way of hanging the trees of ``pi`` on black nodes of ``eta``.

    Trees sent to the same node become its leftmost children, in the
    order they have in ``pi``.  No relabelling is done.
    """
    pi = tuple(pi)
    if not pi:
        return [tuple(eta)]
    targets = black_paths(eta)
    out = []
    for choice in itertools.product(range(len(targets)), repeat=len(pi)):
        attach: dict = {}
        for t, j in zip(pi, choice):
            attach.setdefault(targets[j], []).append(t)
        out.append(_attach(eta, attach))
    return out


def _graft_pair(pi, eta) -> Counter:
    a, b = _disjoint(pi, eta)
    return _canon_counter(_graft_raw(a, b))


def graft(x, y) -> LinComb:
    """Grafting ``x ↷ y``: distribute the trees of ``x`` over black nodes of ``y``."""
    return _bilinear(_graft_pair, x, y)


# ---------------------------------------------------------- Grossman-Larson

def _gl_raw(pi, eta, omega=None) -> list:
    pi = tuple(pi)
    n = len(pi)
    out = []
    for mask in range(1 << n):
        keep = tuple(pi[i] for i in range(n) if mask >> i & 1)
        send = tuple(pi[i] for i in range(n) if not mask >> i & 1)
        for g in _graft_raw(send, eta):
            if omega is None:
                out.append(keep + g)
            else:
                flags = [w for w, i in _omega_positions(omega) if w == 1 or mask >> i & 1]
                out.append(_interleave(keep, g, flags))
    return out


def _omega_positions(omega):
    """Pair each flag with the index of the left root it refers to."""
    i = 0
    for w in omega:
        if w == 0:
            yield 0, i
            i += 1
        else:
            yield 1, -1


def _gl_pair(pi, eta) -> Counter:
    a, b = _disjoint(pi, eta)
    return _canon_counter(_gl_raw(a, b))


def grossman_larson(x, y) -> LinComb:
    """The product ``x ⋄ y``: keep some trees of ``x`` as roots, graft the rest onto ``y``."""
    return _bilinear(_gl_pair, x, y)


def grossman_larson_ordered(pi, eta, omega) -> LinComb:
    """Like :func:`grossman_larson` with the surviving roots placed by ``omega``.

    ``omega`` is a 0/1 sequence over the roots of ``pi`` followed by those of
    ``eta``; kept roots of ``pi`` and the roots of the grafted ``eta``
    appear in the relative order it prescribes.
    """
    a, b = _disjoint(as_forest(pi), as_forest(eta))
    omega = _check_ordering(omega, len(a), len(b))
    return LinComb(_canon_counter(_gl_raw(a, b, omega)))


def gl_power(x, n: int) -> LinComb:
    out = LinComb.basis(UNIT)
    for _ in range(n):
        out = grossman_larson(x, out)
    return out


# ------------------------------------------------------------- MKW coproduct

def _cut_options(node):
    """Admissible cuts below ``node``.

    Returns a list of ``(kept_node, groups)``; ``groups`` lists, in preorder
    of the nodes they hang from, the tuples of subtrees cut off there.
    Each node may cut a left prefix of its children; the uncut children are
    processed recursively so at most one edge per root-to-leaf path is cut.
    """
    d, ch = node
    if not ch:
        return [(node, [])]
    sub = [_cut_options(c) for c in ch]
    out = []
    for p in range(len(ch) + 1):
        cut = ch[:p]
        for combo in itertools.product(*sub[p:]):
            kept = tuple(k for k, _ in combo)
            groups = [cut] if cut else []
            for _, g in combo:
                groups.extend(g)
            out.append(((d, kept), groups))
    return out


def _mkw_one(pi) -> Counter:
    out = Counter()
    virtual = (BLACK, tuple(pi))
    for (_, kept), groups in _cut_options(virtual):
        cut_ids = Counter()
        for g in groups:
            for d, _ in iter_nodes(g):
                if d != BLACK:
                    cut_ids[d] += 1
        if any(n != 2 for n in cut_ids.values()):
            continue
        right = canonicalize(kept)
        for left in _multi_shuffle([tuple(g) for g in groups]):
            out[(canonicalize(left), right)] += 1
    return out


def mkw_coproduct(x) -> TensorLinComb:
    """Coproduct dual to :func:`grossman_larson` (left-admissible cuts)."""
    return _linear(_mkw_one, x, TensorLinComb)


# ---------------------------------------------------------------- helpers

def counit(x):
    return lincomb(x).coeff(UNIT)


def tensor_apply(op_left, op_right, t: TensorLinComb) -> LinComb:
    """Apply linear maps to both legs of a tensor and collect triples.

    ``op_left`` / ``op_right`` map a forest to a TensorLinComb or LinComb;
    ``None`` means identity.  The result is keyed by flat tuples.
    """
    out: dict = {}
    for (a, b), c in t:
        la = [((a,), 1)] if op_left is None else [(_flat(k), v) for k, v in op_left(a)]
        lb = [((b,), 1)] if op_right is None else [(_flat(k), v) for k, v in op_right(b)]
        for ka, va in la:
            for kb, vb in lb:
                key = ka + kb
                out[key] = out.get(key, 0) + c * va * vb
    return LinComb(out)


def _flat(k):
    return k if isinstance(k, tuple) and k and isinstance(k[0], Forest) else (k,)


def pairing(x, y) -> Fraction | int:
    """Coefficient-wise pairing in which distinct basis elements are orthogonal."""
    x, y = lincomb(x), lincomb(y)
    return sum(c * y.coeff(k) for k, c in x)
