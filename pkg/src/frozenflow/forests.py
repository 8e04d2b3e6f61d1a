"""Exotic planar forests.

A tree is a pair ``(dec, children)`` where ``dec`` is ``BLACK`` (0) for an
ordinary node or a positive integer naming the liana the node belongs to.
Liana nodes are always leaves and every liana id appears on exactly two
leaves.  A forest is a tuple of trees; :class:`Forest` is the canonical,
validated form whose liana ids are ``1, 2, ...`` in order of first
appearance in a left-to-right preorder walk.

Text encoding, used for I/O and as the structural sort key::

    b           single black node
    b[1,1]      black root carrying a liana between its two children
    2,2,1,1     two lianas, each joining two roots
    ""          the empty forest (unit)
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

BLACK = 0

Tree = tuple  # (dec, children) with children a tuple of trees


class ForestError(ValueError):
    """Malformed forest: unmatched liana, liana on an inner node, bad text."""


class Forest(tuple):
    """A canonical exotic forest (an immutable tuple of trees)."""

    __slots__ = ()

    def __str__(self) -> str:
        return encode(self)

    def __repr__(self) -> str:
        return f"Forest({encode(self)!r})"

    @property
    def order(self) -> int:
        return order(self)

    @property
    def n_nodes(self) -> int:
        return count_nodes(self)

    def sort_key(self):
        return forest_key(self)


UNIT = Forest(())


# --------------------------------------------------------------------- walks

def iter_nodes(forest: Sequence[Tree]) -> Iterator[Tree]:
    """Yield every node of ``forest`` in left-to-right preorder."""
    stack = list(reversed(forest))
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node[1]))


def count_nodes(forest: Sequence[Tree]) -> int:
    return sum(1 for _ in iter_nodes(forest))


def liana_ids(forest: Sequence[Tree]) -> list[int]:
    """Liana ids in preorder, one entry per leaf (so each id twice)."""
    return [d for d, _ in iter_nodes(forest) if d != BLACK]


def order(forest: Sequence[Tree]) -> int:
    """Number of black nodes plus half the number of liana leaves.

    Liana leaves come in pairs, so the result is always an integer.
    """
    black = 0
    leaves = 0
    for d, _ in iter_nodes(forest):
        if d == BLACK:
            black += 1
        else:
            leaves += 1
    return black + leaves // 2


def max_liana(forest: Sequence[Tree]) -> int:
    return max(liana_ids(forest), default=0)


def shift_lianas(forest: Sequence[Tree], offset: int) -> tuple:
    """Add ``offset`` to every liana id."""
    if offset == 0:
        return tuple(forest)

    def rec(t):
        d, ch = t
        return (d + offset if d != BLACK else BLACK, tuple(rec(c) for c in ch))

    return tuple(rec(t) for t in forest)


# ----------------------------------------------------------- canonical form

def canonicalize(forest: Iterable[Tree], check: bool = True) -> Forest:
    """Rename lianas by first preorder appearance and validate.

    ``check`` verifies that each liana id sits on exactly two leaves.
    """
    forest = tuple(forest)
    mapping: dict[int, int] = {}
    seen: dict[int, int] = {}

    def rec(t):
        d, ch = t
        if d == BLACK:
            return (BLACK, tuple(rec(c) for c in ch))
        if ch:
            raise ForestError(f"liana node {d} has children")
        if d not in mapping:
            mapping[d] = len(mapping) + 1
        seen[d] = seen.get(d, 0) + 1
        return (mapping[d], ())

    out = Forest(rec(t) for t in forest)
    if check:
        bad = sorted(d for d, n in seen.items() if n != 2)
        if bad:
            raise ForestError(f"liana ids {bad} do not appear exactly twice")
    return out


def forest_key(forest: Sequence[Tree]):
    """Deterministic total order: (order, node count, text encoding)."""
    return (order(forest), count_nodes(forest), encode(forest))


# ------------------------------------------------------------- text format

def _encode_tree(t) -> str:
    d, ch = t
    if d != BLACK:
        return str(d)
    if not ch:
        return "b"
    return "b[" + ",".join(_encode_tree(c) for c in ch) + "]"


def encode(forest: Sequence[Tree]) -> str:
    return ",".join(_encode_tree(t) for t in forest)


def parse(text: str) -> Forest:
    """Parse the text encoding into a canonical forest.

    ``•`` is accepted as a synonym for ``b``, whitespace and a surrounding
    pair of parentheses are ignored.
    """
    s = "".join(text.split()).replace("•", "b")
    if s.startswith("(") and s.endswith(")"):
        s = s[1:-1]
    pos = 0

    def fail(msg):
        raise ForestError(f"{msg} at position {pos} in {text!r}")

    def tree():
        nonlocal pos
        if pos >= len(s):
            fail("unexpected end")
        c = s[pos]
        if c == "b":
            pos += 1
            if pos < len(s) and s[pos] == "[":
                pos += 1
                ch = forest_until("]")
                pos += 1
                if not ch:
                    fail("empty bracket")
                return (BLACK, ch)
            return (BLACK, ())
        if c.isdigit():
            start = pos
            while pos < len(s) and s[pos].isdigit():
                pos += 1
            v = int(s[start:pos])
            if v <= 0:
                fail("liana ids must be positive")
            return (v, ())
        fail(f"unexpected character {c!r}")

    def forest_until(stop):
        nonlocal pos
        items = [tree()]
        while pos < len(s) and s[pos] == ",":
            pos += 1
            items.append(tree())
        if stop is None:
            if pos != len(s):
                fail("trailing characters")
        elif pos >= len(s) or s[pos] != stop:
            fail(f"expected {stop!r}")
        return tuple(items)

    if s == "":
        return UNIT
    return canonicalize(forest_until(None))


def as_forest(x) -> Forest:
    """Coerce text, raw tuples or forests to a canonical :class:`Forest`."""
    if isinstance(x, Forest):
        return x
    if isinstance(x, str):
        return parse(x)
    return canonicalize(x)


# ------------------------------------------------------------- structure

def _components(forest: Sequence[Tree]) -> list[list[int]]:
    """Group root indices that are joined (transitively) by lianas."""
    n = len(forest)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    first: dict[int, int] = {}
    for i, t in enumerate(forest):
        for d, _ in iter_nodes((t,)):
            if d == BLACK:
                continue
            if d in first:
                a, b = find(first[d]), find(i)
                if a != b:
                    parent[max(a, b)] = min(a, b)
            else:
                first[d] = i
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [groups[k] for k in sorted(groups)]


def components(forest: Sequence[Tree]) -> list[list[int]]:
    """Liana-connected components of the roots, as sorted index lists."""
    return _components(forest)


def is_connected(forest: Sequence[Tree]) -> bool:
    """True when no proper non-empty set of roots is closed under lianas."""
    return len(forest) > 0 and len(_components(forest)) == 1


def cut_points(forest: Sequence[Tree]) -> list[int]:
    """Indices ``k`` (0 < k < n) where ``forest[:k]`` shares no liana with the rest."""
    comps = _components(forest)
    last = {}
    for c in comps:
        for i in c:
            last[i] = c[-1]
    cuts = []
    reach = -1
    for k in range(len(forest) - 1):
        reach = max(reach, last[k])
        if reach == k:
            cuts.append(k + 1)
    return cuts


def is_irreducible(forest: Sequence[Tree]) -> bool:
    """True when no proper prefix of the roots is closed under lianas."""
    return len(forest) > 0 and not cut_points(forest)


# ------------------------------------------------------------ enumeration

@lru_cache(maxsize=None)
def _shapes(n: int) -> tuple:
    """All planar forest shapes with ``n`` nodes (decorations all black)."""
    if n == 0:
        return ((),)
    out = []
    for k in range(1, n + 1):
        for t in _tree_shapes(k):
            for rest in _shapes(n - k):
                out.append((t,) + rest)
    return tuple(out)


@lru_cache(maxsize=None)
def _tree_shapes(n: int) -> tuple:
    return tuple((BLACK, ch) for ch in _shapes(n - 1))


def _matchings(items: list) -> Iterator[list[tuple]]:
    if not items:
        yield []
        return
    a = items[0]
    for j in range(1, len(items)):
        rest = items[1:j] + items[j + 1:]
        for m in _matchings(rest):
            yield [(a, items[j])] + m


def _leaf_paths(shape, prefix=()):
    out = []
    for i, (d, ch) in enumerate(shape):
        p = prefix + (i,)
        if ch:
            out.extend(_leaf_paths(ch, p))
        else:
            out.append(p)
    return out


def _decorate(shape, dec: dict, prefix=()):
    return tuple(
        (dec.get(prefix + (i,), BLACK), _decorate(ch, dec, prefix + (i,)))
        for i, (_, ch) in enumerate(shape)
    )


def _is_half_integer(p) -> bool:
    return (2 * p) == int(2 * p) and int(2 * p) % 2 == 1


@lru_cache(maxsize=None)
def _enumerate(p: int) -> tuple:
    found = set()
    for m in range(p + 1):
        n_nodes = (p - m) + 2 * m
        for shape in _shapes(n_nodes):
            leaves = _leaf_paths(shape)
            for chosen in itertools.combinations(leaves, 2 * m):
                for match in _matchings(list(chosen)):
                    dec = {}
                    for lid, (u, v) in enumerate(match, start=1):
                        dec[u] = lid
                        dec[v] = lid
                    found.add(canonicalize(_decorate(shape, dec)))
    return tuple(sorted(found, key=forest_key))


def enumerate_forests(p) -> list[Forest]:
    """All exotic forests of order ``p`` in the deterministic total order.

    Orders are integers for every exotic forest, so a half-integer ``p``
    gives an empty list.
    """
    if p < 0 or (2 * p) != int(2 * p):
        raise ValueError(f"order must be a non-negative multiple of 1/2, got {p}")
    if _is_half_integer(p):
        return []
    return list(_enumerate(int(p)))


def enumerate_trees(p) -> list[Forest]:
    """Forests of order ``p`` that consist of a single tree."""
    return [f for f in enumerate_forests(p) if len(f) == 1]


def forests_up_to(p) -> list[Forest]:
    """Every non-empty forest of order at most ``p``."""
    out = []
    for q in range(1, int(p) + 1):
        out.extend(enumerate_forests(q))
    return out
