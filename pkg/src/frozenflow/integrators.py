"""Frozen-flow time stepping driven by a tableau, plus two sphere baselines.

One step of a tableau method computes stage points ``H[i]`` by composing
``K`` frozen flows starting from ``x`` (exponential 0 first), with frame
coefficients

    h * sum_j Z0[i, j, k] f(H[j]) + sigma * sqrt(h) * sum_l Zhat[i, k, l] xi[:, :, l]

and then the final point the same way with ``z0`` and ``zhat``.  ``sigma``
is the problem's diffusion divided by the tableau's, so literal
coefficients can be reused across noise conventions.

Steps are batched over trajectories.  A row whose frozen flow leaves its
chart is first retried in the alternate chart (sphere), then redrawn with
fresh noise from the same counter-based stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, Problem, Sphere2
from .order_theory import NAMED_TABLEAUX, Tableau
from .rng import CounterRNG, NoiseSource

MAX_ATTEMPTS = 32


@dataclass
class StepStats:
    """Counters accumulated over trajectory-steps."""

    steps: int = 0
    chart_switches: int = 0
    chart_retries: int = 0
    resamples: int = 0
    reorthonormalized: int = 0

    def add(self, other: "StepStats"):
        for k in self.__dataclass_fields__:
            setattr(self, k, getattr(self, k) + getattr(other, k))

    @property
    def resample_rate(self) -> float:
        return self.resamples / self.steps if self.steps else 0.0


def _finite_rows(y):
    return np.isfinite(y.reshape(len(y), -1)).all(axis=1)


class TableauScheme:
    """Explicit frozen-flow method defined by a :class:`Tableau`."""

    def __init__(self, tableau: Tableau):
        if not tableau.is_explicit():
            raise ValueError(f"tableau {tableau.name!r} is not explicit")
        self.tableau = tableau
        self.name = tableau.name
        num = tableau.numeric()
        self.Z0, self.z0 = num["Z0"], num["z0"]
        self.Zhat, self.zhat = num["Zhat"], num["zhat"]
        self.diffusion = num["diffusion"]
        s = tableau.s
        self._needs_drift = [
            bool(np.any(self.Z0[:, j, :] != 0) or np.any(self.z0[j, :] != 0)) for j in range(s)
        ]

    def n_draws(self, prob: Problem) -> int:
        return prob.D * self.tableau.L

    def _coeffs(self, drift_w, noise_w, drifts, xi, h, sig):
        c = None
        dsum = None
        for j, w in enumerate(drift_w):
            if w != 0.0 and drifts.get(j) is not None:
                t = w * drifts[j]
                dsum = t if dsum is None else dsum + t
        if dsum is not None:
            c = h * dsum
        nsum = None
        for l, w in enumerate(noise_w):
            if w != 0.0:
                t = w * xi[:, :, l]
                nsum = t if nsum is None else nsum + t
        if nsum is not None:
            c = sig * nsum if c is None else c + sig * nsum
        return c

    def advance(self, prob: Problem, x, h: float, xi):
        """One step from states ``x`` with noise ``xi`` of shape ``(B, D, L)``."""
        m = prob.manifold
        s, K = self.tableau.s, self.tableau.K
        sig = (prob.diffusion / self.diffusion) * math.sqrt(h)
        drifts: dict = {}
        for i in range(s):
            y = x
            for k in range(K):
                c = self._coeffs(self.Z0[i, :, k], self.Zhat[i, k, :], drifts, xi, h, sig)
                if c is not None:
                    y = m.flow(y, c)
            if self._needs_drift[i]:
                drifts[i] = prob.drift_batch(y)
        y = x
        for k in range(K):
            c = self._coeffs(self.z0[:, k], self.zhat[k, :], drifts, xi, h, sig)
            if c is not None:
                y = m.flow(y, c)
        return y

    def noise(self, prob, rng, traj, step, attempt=0):
        L = self.tableau.L
        return rng.draw(traj, step, prob.D * L, attempt).reshape(len(traj), prob.D, L)


class GeodesicLangevin:
    """Riemannian exponential of ``-h grad V + sigma sqrt(h) xi`` on the sphere."""

    name = "geodesic_langevin"

    def n_draws(self, prob):
        return 2

    def noise(self, prob, rng, traj, step, attempt=0):
        return rng.draw(traj, step, 2, attempt)

    def advance(self, prob: Problem, x, h, xi):
        m = _require_sphere(prob, self.name)
        y = m.to_ambient(x)
        e1, e2 = m.frame(x)
        kappa = prob.params.get("strength", 1.0)
        a = np.array([0.0, 0.0, kappa])
        g = a[None, :] - (y @ a)[:, None] * y
        sq = prob.diffusion * math.sqrt(h)
        v = h * g + sq * (xi[:, 0:1] * e1 + xi[:, 1:2] * e2)
        nv = np.linalg.norm(v, axis=1)
        safe = np.where(nv > 0, nv, 1.0)
        y1 = np.cos(nv)[:, None] * y + (np.sin(nv) / safe)[:, None] * v
        y1 /= np.linalg.norm(y1, axis=1)[:, None]
        return m.from_ambient(y1, m.best_chart(y1))


class ProjectionEuler:
    """Ambient Euler step in R^3 followed by radial projection to the sphere."""

    name = "projection_euler"

    def n_draws(self, prob):
        return 3

    def noise(self, prob, rng, traj, step, attempt=0):
        return rng.draw(traj, step, 3, attempt)

    def advance(self, prob: Problem, x, h, xi):
        m = _require_sphere(prob, self.name)
        y = m.to_ambient(x)
        kappa = prob.params.get("strength", 1.0)
        z = y + prob.diffusion * math.sqrt(h) * xi
        z[:, 2] += h * kappa
        n = np.linalg.norm(z, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            y1 = np.where(n[:, None] > 0, z / n[:, None], np.nan)
        return m.from_ambient(y1, m.best_chart(np.nan_to_num(y1)))


def _require_sphere(prob, name):
    if not isinstance(prob.manifold, Sphere2):
        raise ValueError(f"{name} is only available on sphere2, not {prob.manifold.name}")
    return prob.manifold


SCHEMES = ("euler_ff", "sff2", "brownian2", "geodesic_langevin", "projection_euler")


def get_scheme(name_or_tableau):
    """Look up a scheme by registry name, or wrap a :class:`Tableau`."""
    if isinstance(name_or_tableau, Tableau):
        return TableauScheme(name_or_tableau)
    if name_or_tableau in NAMED_TABLEAUX:
        return TableauScheme(NAMED_TABLEAUX[name_or_tableau]())
    if name_or_tableau == "geodesic_langevin":
        return GeodesicLangevin()
    if name_or_tableau == "projection_euler":
        return ProjectionEuler()
    import difflib

    hint = difflib.get_close_matches(str(name_or_tableau), SCHEMES, n=3)
    raise KeyError(f"unknown scheme {name_or_tableau!r}; known: {', '.join(SCHEMES)}"
                   + (f" (did you mean {', '.join(hint)}?)" if hint else ""))


@dataclass
class SchemeSpec:
    scheme: object
    noise: NoiseSource = field(default_factory=NoiseSource)

    @classmethod
    def named(cls, name, noise="gaussian"):
        return cls(get_scheme(name), noise if isinstance(noise, NoiseSource) else NoiseSource(noise))


def step_batch(prob: Problem, scheme, x, h: float, rng: CounterRNG, traj, step: int,
               stats: StepStats | None = None):
    """Advance a batch of trajectories ``traj`` (uint64 ids) by one step."""
    stats = stats if stats is not None else StepStats()
    m = prob.manifold
    x, nsw = m.prepare(x, step)
    if m.name == "so3":
        stats.reorthonormalized += nsw
    else:
        stats.chart_switches += nsw
    xi = scheme.noise(prob, rng, traj, step)
    y = scheme.advance(prob, x, h, xi)
    stats.steps += len(x)
    bad = ~_finite_rows(y)
    if not bad.any():
        return y
    idx = np.flatnonzero(bad)
    alt = m.alternate(x[idx])
    if alt is not None:
        y_alt = scheme.advance(prob, alt, h, xi[idx])
        stats.chart_retries += len(idx)
        y[idx] = y_alt
        idx = idx[~_finite_rows(y_alt)]
    attempt = 0
    while len(idx):
        attempt += 1
        if attempt > MAX_ATTEMPTS:
            raise GeometryError(f"{len(idx)} trajectories could not complete step {step} "
                                f"after {MAX_ATTEMPTS} redraws (h={h})")
        stats.resamples += len(idx)
        xi2 = scheme.noise(prob, rng, traj[idx], step, attempt)
        y2 = scheme.advance(prob, x[idx], h, xi2)
        ok = _finite_rows(y2)
        if alt is not None and not ok.all():
            sub = np.flatnonzero(~ok)
            y3 = scheme.advance(prob, m.alternate(x[idx][sub]), h, xi2[sub])
            y2[sub] = y3
            ok = _finite_rows(y2)
        y[idx] = y2
        idx = idx[~ok]
    return y


@dataclass
class StepReport:
    point: np.ndarray
    stats: StepStats


def step_generic(prob: Problem, spec, x, h: float, rng, traj: int = 0, step: int = 0) -> StepReport:
    """Single-trajectory step; ``rng`` is a :class:`CounterRNG` or an integer seed."""
    if h <= 0:
        raise ValueError("h must be positive")
    if not isinstance(spec, SchemeSpec):
        spec = SchemeSpec.named(spec)
    if not isinstance(rng, CounterRNG):
        rng = CounterRNG(int(rng), spec.noise)
    stats = StepStats()
    y = step_batch(prob, spec.scheme, np.asarray(x, float)[None], h, rng,
                   np.array([traj], dtype=np.uint64), step, stats)
    return StepReport(y[0], stats)


def simulate(prob: Problem, scheme, h: float, n_steps: int, rng: CounterRNG, traj,
             x0=None, observe=None, every: int = 0, stats: StepStats | None = None):
    """Run ``n_steps`` steps for the trajectories ``traj``.

    Returns the final states, and if ``observe`` and ``every`` are given
    also a list of ``observe(states)`` taken at steps ``0, every, 2*every...``.
    """
    traj = np.asarray(traj, dtype=np.uint64)
    x0 = prob.x0 if x0 is None else x0
    x = np.broadcast_to(np.asarray(x0, float), (len(traj),) + np.shape(x0)).copy()
    obs = []
    for n in range(n_steps):
        if observe is not None and every and n % every == 0:
            obs.append(observe(x))
        x = step_batch(prob, scheme, x, h, rng, traj, n, stats)
    if observe is not None and every and n_steps % every == 0:
        obs.append(observe(x))
    return (x, obs) if observe is not None and every else x
