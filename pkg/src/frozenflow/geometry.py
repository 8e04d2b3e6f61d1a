"""Manifolds with a global (or two-chart) frame and closed-form frozen flows.

All state arrays are batched along axis 0:

* ``rn``      ``(B, n)`` coordinates, ``E_d = d/dx_d``;
* ``so3``     ``(B, 3, 3)`` rotation matrices, right-invariant frame ``A_d X``;
* ``sphere2`` ``(B, 3)`` rows ``(chart, theta, phi)``, two latitude charts;
* ``cauchy``  ``(B, 2)`` rows ``(r, theta)`` in polar coordinates.

``flow(x, c)`` returns NaN rows where the frozen flow leaves the chart or
domain; callers decide what to do with them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels


class GeometryError(ValueError):
    """A frozen flow left its chart or domain."""


# ------------------------------------------------------------------ R^n

class Rn:
    name = "rn"

    def __init__(self, n: int):
        self.n = n
        self.D = n

    def flow(self, x, c):
        return x + c

    def prepare(self, x, step=0):
        return x, 0

    def alternate(self, x):
        return None

    def to_ambient(self, x):
        return x

    def point(self, coords):
        return np.asarray(coords, dtype=float).reshape(self.n)


# ---------------------------------------------------------------- SO(3)

_PAIRS = ((0, 1), (0, 2), (1, 2))


def so3_basis() -> np.ndarray:
    """``A_d = (e_i e_j^T - e_j e_i^T) / sqrt 2`` for (i, j) = (1,2), (1,3), (2,3)."""
    out = np.zeros((3, 3, 3))
    for d, (i, j) in enumerate(_PAIRS):
        out[d, i, j] = 1.0
        out[d, j, i] = -1.0
    return out / math.sqrt(2.0)


def orthogonality_defect(X) -> np.ndarray:
    """``max |X^T X - I|`` per batch row."""
    X = np.asarray(X)
    G = np.einsum("...ki,...kj->...ij", X, X) - np.eye(3)
    return np.abs(G).reshape(G.shape[:-2] + (9,)).max(axis=-1)


def reorthonormalize(X):
    """Nearest rotation (polar factor) of each matrix."""
    U, _, Vt = np.linalg.svd(X)
    return U @ Vt


class SO3:
    name = "so3"
    D = 3

    def __init__(self, tol: float = 1e-10, check_every: int = 64):
        self.tol = tol
        self.check_every = check_every

    def flow(self, x, c):
        return kernels.so3_apply(x, c)

    def prepare(self, x, step=0):
        """Re-orthonormalize rows whose defect exceeds ``tol`` (checked periodically)."""
        if self.check_every and step % self.check_every == 0 and step > 0:
            bad = orthogonality_defect(x) > self.tol
            if bad.any():
                x = x.copy()
                x[bad] = reorthonormalize(x[bad])
                return x, int(bad.sum())
        return x, 0

    def alternate(self, x):
        return None

    def to_ambient(self, x):
        return x

    def point(self, X=None):
        return np.eye(3) if X is None else np.asarray(X, dtype=float).reshape(3, 3)


# ------------------------------------------------------------ sphere S^2

_SWITCH = 0.7


def _chart0_ambient(th, ph):
    ct = np.cos(th)
    return np.stack([ct * np.cos(ph), ct * np.sin(ph), np.sin(th)], axis=-1)


class Sphere2:
    """Unit sphere with two latitude charts.

    Chart 0 is latitude/longitude about the x3 axis.  Chart 1 is the same
    construction about the x1 axis: it sees the point ``y`` as chart 0 sees
    ``(y2, y3, y1)``.  In each chart ``E1 = d/dtheta`` and
    ``E2 = (1/cos theta) d/dphi``; the frames are orthonormal.
    """

    name = "sphere2"
    D = 2

    def __init__(self, switch: float = _SWITCH, margin: float = 1e-9):
        self.switch = switch
        self.margin = margin

    # coordinates -----------------------------------------------------
    @staticmethod
    def _perm(y, chart):
        """Chart-frame ambient coordinates from true ones (and back with inverse)."""
        y = np.asarray(y)
        rolled = np.stack([y[..., 1], y[..., 2], y[..., 0]], axis=-1)
        return np.where(np.asarray(chart)[..., None] == 1, rolled, y)

    @staticmethod
    def _unperm(u, chart):
        u = np.asarray(u)
        back = np.stack([u[..., 2], u[..., 0], u[..., 1]], axis=-1)
        return np.where(np.asarray(chart)[..., None] == 1, back, u)

    def to_ambient(self, x):
        x = np.asarray(x)
        u = _chart0_ambient(x[..., 1], x[..., 2])
        return self._unperm(u, x[..., 0])

    def from_ambient(self, y, chart):
        y = np.asarray(y, dtype=float)
        chart = np.broadcast_to(np.asarray(chart, dtype=float), y.shape[:-1])
        u = self._perm(y, chart)
        th = np.arcsin(np.clip(u[..., 2], -1.0, 1.0))
        ph = np.arctan2(u[..., 1], u[..., 0])
        return np.stack([chart, th, ph], axis=-1)

    def switch_chart(self, x):
        x = np.asarray(x)
        return self.from_ambient(self.to_ambient(x), 1.0 - x[..., 0])

    def best_chart(self, y):
        """Chart in which the point is farthest from that chart's poles."""
        y = np.asarray(y)
        return np.where(np.abs(y[..., 2]) <= np.abs(y[..., 0]), 0.0, 1.0)

    def point(self, y=None, theta=None, phi=None, chart=0):
        if y is not None:
            y = np.asarray(y, dtype=float)
            y = y / np.linalg.norm(y)
            return self.from_ambient(y, self.best_chart(y))
        return np.array([float(chart), float(theta), float(phi)])

    def frame(self, x):
        """Ambient vectors ``(E1, E2)`` at each point, shape ``(B, 3)`` each."""
        x = np.asarray(x)
        th, ph, ch = x[..., 1], x[..., 2], x[..., 0]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        e1 = np.stack([-st * cp, -st * sp, ct], axis=-1)
        e2 = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
        return self._unperm(e1, ch), self._unperm(e2, ch)

    # dynamics ----------------------------------------------------------
    def flow(self, x, c):
        th, ph = kernels.sphere_flow(
            np.ascontiguousarray(x[:, 1]), np.ascontiguousarray(x[:, 2]),
            np.ascontiguousarray(c[:, 0]), np.ascontiguousarray(c[:, 1]), self.margin,
        )
        return np.stack([x[:, 0], th, ph], axis=1)

    def prepare(self, x, step=0):
        """Move points with ``|sin theta| > switch`` to the other chart."""
        far = np.abs(np.sin(x[:, 1])) > self.switch
        if not far.any():
            return x, 0
        x = x.copy()
        x[far] = self.switch_chart(x[far])
        return x, int(far.sum())

    def alternate(self, x):
        return self.switch_chart(x)


def latitude_drift(x, strength: float = 1.0, axis=(0.0, 0.0, 1.0)):
    """Frame coefficients of ``-grad V - sum_d nabla_{E_d} E_d`` for ``V = -strength * <axis, y>``.

    In either chart ``nabla_{E1} E1 = 0`` and ``nabla_{E2} E2 = tan(theta) E1``.
    """
    x = np.atleast_2d(x)
    e1, e2 = Sphere2().frame(x)
    a = np.asarray(axis, dtype=float) * strength
    f1 = e1 @ a - np.tan(x[:, 1])
    f2 = e2 @ a
    return np.stack([f1, f2], axis=1)


def sphere_langevin_drift(x):
    """Drift for ``V(y) = -y3``; in chart 0 this is ``(cos theta - tan theta, 0)``."""
    return latitude_drift(x, 1.0)


# -------------------------------------------------------- Cauchy surface

class Cauchy:
    """Polar coordinates ``(r, theta)`` with ``E1 = d/dr``, ``E2 = (1/tanh r) d/dtheta``."""

    name = "cauchy"
    D = 2

    def __init__(self, r_min: float = 1e-9):
        self.r_min = r_min

    def flow(self, x, c):
        r, th = kernels.cauchy_flow(
            np.ascontiguousarray(x[:, 0]), np.ascontiguousarray(x[:, 1]),
            np.ascontiguousarray(c[:, 0]), np.ascontiguousarray(c[:, 1]), self.r_min,
        )
        return np.stack([r, th], axis=1)

    def prepare(self, x, step=0):
        return x, 0

    def alternate(self, x):
        return None

    def to_ambient(self, x):
        x = np.asarray(x)
        s = np.sinh(x[..., 0])
        return np.stack([s * np.cos(x[..., 1]), s * np.sin(x[..., 1])], axis=-1)

    def point(self, r=2.0, theta=0.0):
        return np.array([float(r), float(theta)])


def cauchy_drift(r, theta=None, beta: float = 4.0):
    """``(coth r - (2 beta - 1) tanh r, 0)``; raises for ``r <= 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise GeometryError("cauchy drift needs r > 0")
    f1 = 1.0 / np.tanh(r) - (2.0 * beta - 1.0) * np.tanh(r)
    return np.stack([f1, np.zeros_like(f1)], axis=-1)


# --------------------------------------------------------------- problems

@dataclass
class Problem:
    """An SDE ``dX = sum_d f^d(X) E_d dt + diffusion * sum_d E_d o dW_d``."""

    name: str
    manifold: object
    drift: Callable | None
    diffusion: float
    x0: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def D(self) -> int:
        return self.manifold.D

    def drift_batch(self, x):
        if self.drift is None:
            return None
        return self.drift(x)


def so3_brownian_problem() -> Problem:
    return Problem("so3_brownian", SO3(), None, 1.0, np.eye(3))


def sphere_langevin_problem(strength: float = 1.0, x0=None) -> Problem:
    m = Sphere2()
    start = m.point(theta=0.0, phi=0.0) if x0 is None else m.point(y=x0)
    drift = (lambda x: latitude_drift(x, strength))
    return Problem("sphere_langevin", m, drift, math.sqrt(2.0), start, {"strength": strength})


def cauchy_problem(beta: float = 4.0, r0: float = 2.0, theta0: float = 0.0) -> Problem:
    m = Cauchy()
    drift = (lambda x: cauchy_drift(x[:, 0], beta=beta))
    return Problem("cauchy", m, drift, math.sqrt(2.0), m.point(r0, theta0), {"beta": beta})


def rn_problem(n: int, drift: Callable | None = None, diffusion: float = 1.0, x0=None) -> Problem:
    m = Rn(n)
    return Problem("rn", m, drift, diffusion, np.zeros(n) if x0 is None else np.asarray(x0, float))


MANIFOLDS = {"rn": Rn, "so3": SO3, "sphere2": Sphere2, "cauchy": Cauchy}


def frozen_flow(manifold, p, c):
    """Single-point frozen flow; raises :class:`GeometryError` on chart/domain exit."""
    p = np.asarray(p, dtype=float)
    c = np.asarray(c, dtype=float).reshape(1, -1)
    if not np.all(np.isfinite(c)):
        raise GeometryError("frame coefficients must be finite")
    out = manifold.flow(p[None], c)[0]
    if not np.all(np.isfinite(out)):
        raise GeometryError(f"frozen flow left the {manifold.name} chart")
    return out
