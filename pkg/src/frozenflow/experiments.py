"""Monte-Carlo weak-error and long-time experiments.

Trajectories are simulated in fixed-size blocks.  Each trajectory's noise
depends only on (seed, trajectory index, step), every kernel is elementwise
and a trajectory always lands at the same position of the same block, so
results are bitwise identical for any number of worker processes.  Block
results are concatenated in trajectory order and reduced with
``math.fsum``.
"""

from __future__ import annotations

import dataclasses
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from . import geometry
from .integrators import SCHEMES, StepStats, get_scheme, step_batch
from .rng import CounterRNG, NoiseSource

# ------------------------------------------------------------ test functions


def _so3_gauss_trace(prob, x):
    # exp(-Tr((X-I)^T (X-I)) / (2d)) with d = 3 and X orthogonal
    return np.exp(-(3.0 - np.trace(x, axis1=-2, axis2=-1)) / 3.0)


def _sphere_x3sq(prob, x):
    return prob.manifold.to_ambient(x)[..., 2] ** 2


def _cauchy_phi1(prob, x):
    beta = prob.params.get("beta", 4.0)
    return np.sinh(x[..., 0]) ** 2 - 1.0 / (beta - 2.0)


def _cauchy_phi2(prob, x):
    return np.sinh(x[..., 0]) * np.cos(x[..., 1])


def _rn_x2(prob, x):
    return np.sum(x * x, axis=-1)


TEST_FUNCTIONS = {
    "so3_gauss_trace": _so3_gauss_trace,
    "sphere_x3sq": _sphere_x3sq,
    "cauchy_phi1": _cauchy_phi1,
    "cauchy_phi2": _cauchy_phi2,
    "rn_x2": _rn_x2,
}


# ------------------------------------------------------------ exact values

def so3_gauss_trace_exact(T: float, lmax: int = 40) -> float:
    """``E exp(-(3 - tr X_T)/3)`` for Brownian motion started at the identity.

    The test function is a class function; expanding it in characters
    ``chi_l`` and using that the generator acts on ``chi_l`` by
    ``-l(l+1)/4`` gives a rapidly converging series.
    """
    total = 0.0
    for l in range(lmax + 1):
        def integrand(w, l=l):
            chi = math.sin((l + 0.5) * w) / math.sin(0.5 * w) if w > 1e-12 else 2 * l + 1
            return math.exp(-(2.0 - 2.0 * math.cos(w)) / 3.0) * chi * (1.0 - math.cos(w)) / math.pi

        a = quad(integrand, 0.0, math.pi, limit=200, epsabs=1e-14, epsrel=1e-13)[0]
        total += a * (2 * l + 1) * math.exp(-l * (l + 1) / 4.0 * T)
    return total


def sphere_x3sq_stationary(strength: float = 1.0) -> float:
    """Mean of ``x3^2`` under the density proportional to ``exp(strength * x3)``."""
    k = strength
    if abs(k) < 1e-6:
        return 1.0 / 3.0 + 2.0 * k * k / 45.0
    return 1.0 - 2.0 / (k * math.tanh(k)) + 2.0 / (k * k)


SPHERE_TARGET = sphere_x3sq_stationary(1.0)


def ou_x2_exact(T: float, x0: float = 1.0) -> float:
    """``E X_T^2`` for ``dX = -X dt + sqrt(2) dW``."""
    return x0 * x0 * math.exp(-2.0 * T) + 1.0 - math.exp(-2.0 * T)


# ------------------------------------------------------------------ config

EXPERIMENTS = ("so3_brownian", "sphere_langevin", "cauchy", "ou")

_DEFAULTS = {
    "so3_brownian": dict(manifold="so3", scheme="euler_ff", T=1.0,
                         h_list=(2.0 ** -2, 2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -6),
                         test_function="so3_gauss_trace", noise="threepoint",
                         reference="sff2", h_ref=2.0 ** -10),
    "sphere_langevin": dict(manifold="sphere2", scheme="sff2", T=10.0, h_list=(0.2, 0.1, 0.05),
                            test_function="sphere_x3sq", noise="gaussian", reference="exact",
                            average="time", burn_in=5.0),
    "cauchy": dict(manifold="cauchy", scheme="euler_ff", T=1.5, h_list=(0.005,),
                   test_function="cauchy_phi1", noise="rademacher", reference="none",
                   sample_every=0.05),
    "ou": dict(manifold="rn", scheme="euler_ff", T=1.0, h_list=(0.25, 0.125, 0.0625),
               test_function="rn_x2", noise="gaussian", reference="exact"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "so3_brownian"
    scheme: str = "euler_ff"
    manifold: str = "so3"
    T: float = 1.0
    h_list: tuple = (0.25,)
    M: int = 100_000
    seed: int = 2024
    test_function: str = "so3_gauss_trace"
    noise: str = "gaussian"
    reference: str = "sff2"          # scheme name, "exact", or "none"
    h_ref: float = 2.0 ** -10
    M_ref: int = 0                   # 0: same as M
    workers: int = 1
    block_size: int = 20_000
    average: str = "final"           # or "time" (average over [burn_in, T])
    burn_in: float = 0.0
    sample_every: float = 0.05       # decay runs
    beta: float = 4.0
    strength: float = 1.0
    r0: float = 2.0
    theta0: float = 0.0
    floor_sigmas: float = 3.0

    @classmethod
    def for_experiment(cls, name: str, **overrides) -> "ExperimentConfig":
        if name not in _DEFAULTS:
            raise KeyError(f"unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}")
        base = dict(_DEFAULTS[name])
        base.update(overrides)
        return cls(experiment=name, **base)

    def with_updates(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})

    def validate(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.scheme not in SCHEMES:
            get_scheme(self.scheme)  # raises with suggestions
        if self.test_function not in TEST_FUNCTIONS:
            raise KeyError(f"unknown test function {self.test_function!r}; known: {', '.join(TEST_FUNCTIONS)}")
        if self.manifold not in geometry.MANIFOLDS:
            raise KeyError(f"unknown manifold {self.manifold!r}; known: {', '.join(geometry.MANIFOLDS)}")
        NoiseSource(self.noise)
        if self.average == "time" and not 0 <= self.burn_in < self.T:
            raise ValueError(f"burn_in={self.burn_in} must lie in [0, T={self.T})")
        for h in self.h_list:
            n_steps(self.T, h)
        return self


def n_steps(T: float, h: float) -> int:
    n = int(round(T / h))
    if h <= 0 or n < 1 or abs(n * h - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"h={h} does not divide T={T}")
    return n


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key, value: str):
    t = _FIELD_TYPES[key]
    if t == "int":
        return int(float(value))
    if t == "float":
        return float(eval_number(value))
    if t == "tuple":
        return tuple(float(eval_number(v)) for v in value.replace(";", ",").split(",") if v.strip())
    return value.strip()


def eval_number(text: str) -> float:
    """Parse ``0.25``, ``1/4`` or ``2^-3`` (also ``2**-3``)."""
    s = text.strip().replace("**", "^")
    if "^" in s:
        b, e = s.split("^", 1)
        return float(b) ** float(e)
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` comments; returns raw overrides."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value")
        k, v = (p.strip() for p in line.split("=", 1))
        k = k.replace("-", "_")
        if k not in _FIELD_TYPES:
            raise ValueError(f"line {n}: unknown key {k!r}")
        out[k] = _coerce(k, v)
    return out


def load_config(path: str | None, **flags) -> ExperimentConfig:
    """Config file values, then experiment defaults, then ``flags`` (flags win)."""
    file_vals = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            file_vals = parse_config_text(fh.read())
    name = flags.get("experiment") or file_vals.get("experiment") or "so3_brownian"
    merged = {**file_vals, **{k: v for k, v in flags.items() if v is not None}}
    merged.pop("experiment", None)
    return ExperimentConfig.for_experiment(name, **merged).validate()


def make_problem(cfg: ExperimentConfig) -> geometry.Problem:
    if cfg.manifold == "so3":
        return geometry.so3_brownian_problem()
    if cfg.manifold == "sphere2":
        return geometry.sphere_langevin_problem(cfg.strength)
    if cfg.manifold == "cauchy":
        return geometry.cauchy_problem(cfg.beta, cfg.r0, cfg.theta0)
    if cfg.manifold == "rn":
        return geometry.rn_problem(1, drift=lambda x: -x, diffusion=math.sqrt(2.0), x0=[1.0])
    raise KeyError(cfg.manifold)


# ------------------------------------------------------------ simulation

def _run_block(args):
    """Simulate trajectories ``start..stop`` and return per-trajectory values."""
    cfg, scheme_name, h, start, stop, mode = args
    prob = make_problem(cfg)
    scheme = get_scheme(scheme_name)
    rng = CounterRNG(cfg.seed, cfg.noise)
    fn = TEST_FUNCTIONS[cfg.test_function]
    traj = np.arange(start, stop, dtype=np.uint64)
    N = n_steps(cfg.T, h)
    x = np.broadcast_to(prob.x0, (len(traj),) + np.shape(prob.x0)).copy()
    stats = StepStats()
    if mode == "final":
        for n in range(N):
            x = step_batch(prob, scheme, x, h, rng, traj, n, stats)
        return fn(prob, x), stats
    if mode == "time":
        first = int(math.ceil(cfg.burn_in / h - 1e-9))
        acc = np.zeros(len(traj))
        cnt = 0
        for n in range(N):
            x = step_batch(prob, scheme, x, h, rng, traj, n, stats)
            if n + 1 >= first:
                acc += fn(prob, x)
                cnt += 1
        return acc / cnt, stats
    if mode == "series":
        every = max(1, int(round(cfg.sample_every / h)))
        fns = [TEST_FUNCTIONS[f] for f in _series_functions(cfg)]
        cols = []
        for n in range(N + 1):
            if n % every == 0:
                cols.append(np.stack([f(prob, x) for f in fns], axis=1))
            if n < N:
                x = step_batch(prob, scheme, x, h, rng, traj, n, stats)
        return np.stack(cols, axis=1), stats  # (B, n_times, n_functions)
    raise ValueError(mode)


def _series_functions(cfg):
    if cfg.manifold == "cauchy":
        return ("cauchy_phi1", "cauchy_phi2")
    return (cfg.test_function,)


def simulate_values(cfg: ExperimentConfig, scheme: str, h: float, mode: str = "final", M: int | None = None):
    """Per-trajectory outputs for trajectories ``0..M-1`` plus merged step stats."""
    M = cfg.M if M is None else M
    bs = max(1, int(cfg.block_size))
    jobs = [(cfg, scheme, h, s, min(s + bs, M), mode) for s in range(0, M, bs)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]
    stats = StepStats()
    for _, s in results:
        stats.add(s)
    return np.concatenate([v for v, _ in results], axis=0), stats


def mean_stderr(values) -> tuple[float, float]:
    """Compensated mean and ``std/sqrt(M)`` of a 1-d array."""
    v = np.asarray(values, dtype=float).ravel()
    M = len(v)
    mean = math.fsum(v) / M
    if M < 2:
        return mean, float("nan")
    var = math.fsum((v - mean) ** 2) / (M - 1)
    return mean, math.sqrt(var / M)


# ---------------------------------------------------------------- tables

@dataclass
class ErrorRow:
    experiment: str
    scheme: str
    h: float
    M: int
    seed: int
    estimate: float
    reference: float
    abs_error: float
    mc_stderr: float
    ref_stderr: float = 0.0

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.mc_stderr, self.ref_stderr)

    def above_floor(self, sigmas: float) -> bool:
        return self.abs_error > sigmas * self.combined_stderr


ERROR_HEADER = "experiment,scheme,h,M,seed,estimate,reference,abs_error,mc_stderr"


@dataclass
class ErrorTable:
    rows: list = field(default_factory=list)
    slope: float | None = None
    fit_range: tuple | None = None
    stats: dict = field(default_factory=dict)

    def fit(self, sigmas: float = 3.0):
        """Least-squares log-log slope over rows whose error clears the MC floor."""
        usable = [r for r in self.rows if r.above_floor(sigmas)]
        if len(usable) >= 2:
            self.slope = estimate_slope([r.h for r in usable], [r.abs_error for r in usable])
            self.fit_range = (min(r.h for r in usable), max(r.h for r in usable))
        else:
            self.slope, self.fit_range = None, None
        return self

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        if header:
            buf.write(ERROR_HEADER + "\n")
        for r in self.rows:
            buf.write(f"{r.experiment},{r.scheme},{r.h!r},{r.M},{r.seed},{r.estimate!r},"
                      f"{r.reference!r},{r.abs_error!r},{r.mc_stderr!r}\n")
        return buf.getvalue()


def estimate_slope(x, y, log_x: bool = True) -> float:
    """Least-squares slope of ``log|y|`` against ``log x`` (or against ``x``)."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if len(x) < 2 or len(x) != len(y):
        raise ValueError("need at least two points of equal-length data")
    if np.any(y <= 0) or (log_x and np.any(x <= 0)):
        raise ValueError("slope fit needs positive data")
    u = np.log(x) if log_x else x
    if np.ptp(u) == 0:
        raise ValueError("degenerate window: all abscissae equal")
    A = np.stack([u, np.ones_like(u)], axis=1)
    return float(np.linalg.lstsq(A, np.log(y), rcond=None)[0][0])


# ------------------------------------------------------------- reference

def _reference(cfg: ExperimentConfig) -> tuple[float, float]:
    if cfg.reference == "exact":
        if cfg.test_function == "so3_gauss_trace":
            return so3_gauss_trace_exact(cfg.T), 0.0
        if cfg.test_function == "sphere_x3sq":
            return sphere_x3sq_stationary(cfg.strength), 0.0
        if cfg.test_function == "rn_x2":
            return ou_x2_exact(cfg.T), 0.0
        raise ValueError(f"no closed form for {cfg.test_function}")
    if cfg.reference in ("none", ""):
        raise ValueError("reference unavailable: set reference to a scheme name or 'exact'")
    mode = cfg.average if cfg.average == "time" else "final"
    vals, _ = simulate_values(cfg, cfg.reference, cfg.h_ref, mode, M=cfg.M_ref or cfg.M)
    return mean_stderr(vals)


@lru_cache(maxsize=16)
def _cached_reference(cfg: ExperimentConfig):
    return _reference(cfg)


def reference_for(cfg: ExperimentConfig):
    """Reference value and its stderr; memoized on the fields that matter."""
    key = dataclasses.replace(cfg, scheme="-", h_list=(), workers=1)
    return _cached_reference(key)


# ----------------------------------------------------------- experiments

def run_weak_error(cfg: ExperimentConfig) -> ErrorTable:
    """Monte-Carlo error of ``E phi(X_T)`` for each step size of ``cfg.h_list``."""
    cfg.validate()
    ref, ref_se = reference_for(cfg)
    table = ErrorTable()
    total = StepStats()
    for h in cfg.h_list:
        vals, stats = simulate_values(cfg, cfg.scheme, h, "final")
        total.add(stats)
        est, se = mean_stderr(vals)
        table.rows.append(ErrorRow(cfg.experiment, cfg.scheme, float(h), cfg.M, cfg.seed,
                                   est, ref, abs(est - ref), se, ref_se))
    table.stats = dataclasses.asdict(total)
    return table.fit(cfg.floor_sigmas)


def run_sphere_ergodic(cfg: ExperimentConfig) -> ErrorTable:
    """Long-time averages of the test function against the stationary value."""
    if cfg.manifold != "sphere2":
        raise ValueError("run_sphere_ergodic needs manifold sphere2")
    cfg.validate()
    ref = sphere_x3sq_stationary(cfg.strength) if cfg.reference == "exact" else reference_for(cfg)[0]
    mode = "time" if cfg.average == "time" else "final"
    table = ErrorTable()
    total = StepStats()
    for h in cfg.h_list:
        vals, stats = simulate_values(cfg, cfg.scheme, h, mode)
        total.add(stats)
        est, se = mean_stderr(vals)
        table.rows.append(ErrorRow(cfg.experiment, cfg.scheme, float(h), cfg.M, cfg.seed,
                                   est, ref, abs(est - ref), se))
    table.stats = dataclasses.asdict(total)
    return table.fit(cfg.floor_sigmas)


def fit_quadratic_bias(table: ErrorTable) -> float:
    """Least-squares ``C`` in ``estimate - reference ~ C h^2``."""
    h = np.array([r.h for r in table.rows])
    e = np.array([r.estimate - r.reference for r in table.rows])
    return float(np.dot(h ** 2, e) / np.dot(h ** 2, h ** 2))


@dataclass
class DecaySeries:
    function: str
    t: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    rate: float | None = None
    window: tuple | None = None

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        if header:
            buf.write("t,estimate,abs_value,mc_stderr\n")
        for t, e, s in zip(self.t, self.estimate, self.stderr):
            buf.write(f"{float(t)!r},{float(e)!r},{abs(float(e))!r},{float(s)!r}\n")
        return buf.getvalue()


@dataclass
class DecayResult:
    series: dict
    stats: dict
    resample_rate: float
    flagged: bool


def fit_decay(t, est, se, tail: float = 0.25, factor: float = 10.0):
    """Exponential rate of ``|est|`` before it reaches its floor.

    The floor is the mean of ``|est| + 3 se`` over the last ``tail``
    fraction of times; the fit uses the leading run of points whose value
    exceeds ``factor`` times the floor.
    """
    t, a, se = np.asarray(t), np.abs(np.asarray(est)), np.asarray(se)
    k = max(1, int(len(t) * tail))
    floor = float(np.mean(a[-k:] + 3.0 * se[-k:]))
    keep = 0
    while keep < len(t) and a[keep] > factor * floor:
        keep += 1
    if keep < 2:
        return None, None
    return estimate_slope(t[:keep], a[:keep], log_x=False), (float(t[0]), float(t[keep - 1]))


def run_cauchy_ergodic(cfg: ExperimentConfig) -> DecayResult:
    """Time series of both eigenfunction averages and their fitted decay rates."""
    if cfg.manifold != "cauchy":
        raise ValueError("run_cauchy_ergodic needs manifold cauchy")
    if cfg.beta <= 2:
        raise ValueError("beta must exceed 2")
    cfg.validate()
    h = cfg.h_list[0]
    vals, stats = simulate_values(cfg, cfg.scheme, h, "series")
    every = max(1, int(round(cfg.sample_every / h)))
    N = n_steps(cfg.T, h)
    t = np.arange(0, N + 1, every) * h
    series = {}
    for j, name in enumerate(_series_functions(cfg)):
        est, se = zip(*(mean_stderr(vals[:, i, j]) for i in range(vals.shape[1])))
        est, se = np.array(est), np.array(se)
        rate, window = fit_decay(t, est, se)
        series[name] = DecaySeries(name, t, est, se, rate, window)
    rate = stats.resample_rate
    return DecayResult(series, dataclasses.asdict(stats), rate, rate > 0.01)


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
