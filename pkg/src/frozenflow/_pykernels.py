"""Vectorized numpy versions of the hot kernels.

This module is the reference implementation; ``_ckernels`` (Cython) must
agree with it to rounding.  Every function is elementwise over the batch
axis, so results for one trajectory do not depend on what else is in the
batch.
"""

import numpy as np
from scipy.special import ndtri

_G = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))
_INV53 = 1.0 / 9007199254740992.0
_SQRT3 = np.sqrt(3.0)

GAUSSIAN, THREEPOINT, RADEMACHER = 0, 1, 2

NAME = "python"


def mix64(z):
    """SplitMix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def step_keys(seed: int, traj, step: int):
    """Per-(trajectory, step) stream keys."""
    with np.errstate(over="ignore"):
        k = mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _G)
        kt = mix64(k + np.asarray(traj, dtype=np.uint64) * _G)
        return mix64(kt ^ mix64(np.uint64(step) + _G))


def uniforms(seed: int, traj, step: int, n: int, offset: int = 0):
    """``(B, n)`` uniforms in the open interval (0, 1).

    Value ``c`` is a pure function of (seed, traj, step, offset + c).
    """
    ks = step_keys(seed, traj, step)
    ctr = (np.arange(n, dtype=np.uint64) + np.uint64(offset + 1)) * _G
    bits = mix64(ks[:, None] + ctr[None, :])
    return ((bits >> _S11).astype(np.float64) + 0.5) * _INV53


def draw(seed: int, traj, step: int, n: int, kind: int, offset: int = 0):
    u = uniforms(seed, traj, step, n, offset)
    if kind == GAUSSIAN:
        return ndtri(u)
    if kind == THREEPOINT:
        return np.where(u < 1.0 / 6.0, -_SQRT3, np.where(u >= 5.0 / 6.0, _SQRT3, 0.0))
    if kind == RADEMACHER:
        return np.where(u < 0.5, -1.0, 1.0)
    raise ValueError(f"unknown noise kind {kind}")


def so3_apply(X, c):
    """``Exp(sum_d c_d A_d) @ X`` for each batch row (Rodrigues formula)."""
    a = np.asarray(c, dtype=np.float64) * np.sqrt(0.5)
    # Omega = hat(w) with w = (-a3, a2, -a1)
    w = np.stack([-a[:, 2], a[:, 1], -a[:, 0]], axis=1)
    th2 = np.einsum("bi,bi->b", w, w)
    th = np.sqrt(th2)
    small = th < 1e-6
    ths = np.where(small, 1.0, th)
    A = np.where(small, 1.0 - th2 / 6.0, np.sin(ths) / ths)
    half = np.sin(0.5 * ths) / ths
    B = np.where(small, 0.5 - th2 / 24.0, 2.0 * half * half)
    n = len(a)
    R = np.empty((n, 3, 3))
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]
    d = 1.0 - B * th2
    R[:, 0, 0] = d + B * wx * wx
    R[:, 1, 1] = d + B * wy * wy
    R[:, 2, 2] = d + B * wz * wz
    R[:, 0, 1] = B * wx * wy - A * wz
    R[:, 1, 0] = B * wx * wy + A * wz
    R[:, 0, 2] = B * wx * wz + A * wy
    R[:, 2, 0] = B * wx * wz - A * wy
    R[:, 1, 2] = B * wy * wz - A * wx
    R[:, 2, 1] = B * wy * wz + A * wx
    return np.matmul(R, X)


_HALF_PI = 0.5 * np.pi


def sphere_flow(theta, phi, c1, c2, margin=1e-9):
    """Frozen flow in a latitude chart; NaN where the chart edge is reached."""
    t1 = theta + c1
    small = np.abs(c1) < 1e-8
    c1s = np.where(small, 1.0, c1)
    # atanh(sin t1) - atanh(sin t0) written to avoid cancellation
    num = 2.0 * np.cos(theta + 0.5 * c1) * np.sin(0.5 * c1)
    den = 1.0 - np.sin(t1) * np.sin(theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.arctanh(num / den) / c1s
    sec = 1.0 / np.cos(theta)
    g = np.where(small, sec + 0.5 * c1 * sec * np.tan(theta), g)
    p1 = phi + c2 * g
    bad = ~(np.abs(t1) < _HALF_PI - margin)
    return np.where(bad, np.nan, t1), np.where(bad, np.nan, p1)


def cauchy_flow(r, theta, c1, c2, r_min=1e-9):
    """Frozen flow on the Cauchy surface; NaN where ``r`` would drop to ``r_min``."""
    r1 = r + c1
    small = np.abs(c1) < 1e-8
    c1s = np.where(small, 1.0, c1)
    coth = 1.0 / np.tanh(r)
    sh = np.sinh(0.5 * c1)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.log1p(2.0 * sh * sh + coth * np.sinh(c1)) / c1s
    g = np.where(small, coth + 0.5 * c1 * (1.0 - coth * coth), g)
    t1 = theta + c2 * g
    bad = ~(r1 > r_min)
    return np.where(bad, np.nan, r1), np.where(bad, np.nan, t1)
