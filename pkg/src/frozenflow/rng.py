"""Counter-based noise streams.

Every draw is a pure function of ``(seed, trajectory, step, counter)``, so a
trajectory sees the same noise whichever block or worker simulates it.
The mixing function is the SplitMix64 finalizer applied to a chained key;
uniforms are turned into Gaussians by the inverse normal CDF.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

NOISE_KINDS = {
    "gaussian": kernels.GAUSSIAN,
    "threepoint": kernels.THREEPOINT,
    "rademacher": kernels.RADEMACHER,
}

# exact moments 1..6
TARGET_MOMENTS = {
    "gaussian": (0.0, 1.0, 0.0, 3.0, 0.0, 15.0),
    "threepoint": (0.0, 1.0, 0.0, 3.0, 0.0, 9.0),
    "rademacher": (0.0, 1.0, 0.0, 1.0, 0.0, 1.0),
}


@dataclass(frozen=True)
class NoiseSource:
    """Distribution of the scalar variables driving each noise channel."""

    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise {self.kind!r}; choose from {sorted(NOISE_KINDS)}")

    @property
    def code(self) -> int:
        return NOISE_KINDS[self.kind]


class CounterRNG:
    """Keyed random stream: ``draw(traj, step, n)`` gives a ``(len(traj), n)`` array."""

    def __init__(self, seed: int, noise: NoiseSource | str = "gaussian", backend=None):
        self.seed = int(seed)
        self.noise = noise if isinstance(noise, NoiseSource) else NoiseSource(noise)
        self._k = kernels if backend is None else backend

    def draw(self, traj, step: int, n: int, attempt: int = 0):
        """Noise values; ``attempt > 0`` gives fresh values for a redrawn step."""
        traj = np.atleast_1d(np.asarray(traj, dtype=np.uint64))
        return self._k.draw(self.seed, traj, int(step), int(n), self.noise.code, int(attempt) * int(n))

    def uniform(self, traj, step: int, n: int, offset: int = 0):
        traj = np.atleast_1d(np.asarray(traj, dtype=np.uint64))
        return self._k.uniforms(self.seed, traj, int(step), int(n), int(offset))


@dataclass
class MomentReport:
    kind: str
    n: int
    moments: tuple
    targets: tuple
    stderr: tuple

    def within(self, z: float = 5.0, orders=(1, 2, 3, 4)) -> bool:
        return all(abs(self.moments[p - 1] - self.targets[p - 1]) <= z * self.stderr[p - 1] for p in orders)

    def lines(self):
        for p, (m, t, s) in enumerate(zip(self.moments, self.targets, self.stderr), start=1):
            yield f"{self.kind},{p},{m!r},{t!r},{s!r}"


def moment_check(src: NoiseSource | str, n_samples: int, seed: int = 0) -> MomentReport:
    """Empirical moments 1..6 of ``n_samples`` draws against their exact values."""
    src = src if isinstance(src, NoiseSource) else NoiseSource(src)
    rng = CounterRNG(seed, src)
    x = rng.draw(np.arange(n_samples), 0, 1)[:, 0]
    pw = [x ** p for p in range(1, 7)]
    moments = tuple(float(np.mean(v)) for v in pw)
    stderr = tuple(float(np.std(v, ddof=1) / np.sqrt(n_samples)) for v in pw)
    return MomentReport(src.kind, n_samples, moments, TARGET_MOMENTS[src.kind], stderr)
