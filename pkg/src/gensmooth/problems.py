"""Benchmark objectives with analytic gradients.

Four problem families:

* intensity-only signal recovery (quartic nonconvex least squares),
* the dual of a chi-square distributionally-robust regression,
* synthetic power functions ``|w|^p`` whose gradient-domination constants
  are known in closed form, and
* a noise-injecting wrapper that turns any deterministic objective into a
  stochastic oracle whose error obeys an affine bound on every single draw.

Batch gradients are plain means of per-sample gradients, so uniform
sampling with replacement gives an exactly unbiased stochastic gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .core import Array, ConfigError, NoiseSpec, GeometryParams

_KINK_GUARD = 1e-30


def _check_batch(batch, n: int) -> Array:
    idx = np.asarray(batch, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("empty batch")
    if idx.min() < 0 or idx.max() >= n:
        raise IndexError(f"batch indices must lie in [0, {n})")
    return idx


# ---------------------------------------------------------------------------
# intensity-only recovery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseRetrievalData:
    """Measurement vectors (rows of ``measurements``) and observed
    intensities. ``a_max``/``y_max`` are cached extremes used by the
    smoothness certificates."""

    measurements: Array  # (m, d)
    intensities: Array   # (m,)

    def __post_init__(self):
        if self.measurements.ndim != 2 or self.intensities.ndim != 1:
            raise ValueError("measurements must be (m, d), intensities (m,)")
        if self.measurements.shape[0] != self.intensities.shape[0]:
            raise ValueError("row count mismatch between measurements and intensities")

    @property
    def m(self) -> int:
        return self.measurements.shape[0]

    @property
    def d(self) -> int:
        return self.measurements.shape[1]

    @cached_property
    def a_max(self) -> float:
        return float(np.max(np.linalg.norm(self.measurements, axis=1)))

    @cached_property
    def y_max(self) -> float:
        return float(np.max(np.abs(self.intensities)))

    def smoothness_constants(self) -> tuple[float, float, float]:
        """Certified (l0, l1, alpha) for the full objective in the symmetric
        two-point form of the smoothness inequality."""
        l0 = 8.0 * self.y_max * self.a_max**2
        l1 = 9.0 * self.a_max ** (4.0 / 3.0)
        return l0, l1, 2.0 / 3.0


def generate_phase_retrieval(
    d: int,
    m: int,
    rng: np.random.Generator,
    w_star_dist: tuple[float, float] = (0.0, 0.5),
    a_dist: tuple[float, float] = (0.0, 0.5),
    noise_dist: tuple[float, float] = (0.0, 16.0),
) -> tuple[PhaseRetrievalData, Array]:
    """Draw a synthetic instance: ``y_r = (a_r . w*)^2 + n_r``.

    Distribution arguments are (mean, variance) pairs of per-coordinate
    Gaussians. Returns the dataset and the ground-truth signal.
    """
    if d < 1 or m < 1:
        raise ConfigError("d and m must be >= 1")
    w_star = rng.normal(w_star_dist[0], np.sqrt(w_star_dist[1]), size=d)
    a = rng.normal(a_dist[0], np.sqrt(a_dist[1]), size=(m, d))
    noise = rng.normal(noise_dist[0], np.sqrt(noise_dist[1]), size=m)
    y = (a @ w_star) ** 2 + noise
    return PhaseRetrievalData(measurements=a, intensities=y), w_star


def pr_value_and_grad(
    data: PhaseRetrievalData, w: Array, batch=None
) -> tuple[float, Array]:
    """Objective and gradient of the intensity-fit loss on a batch.

    Per-sample loss is ``(y - (a.w)^2)^2 / 2``; the batch value is the mean,
    so the full-batch call returns the exact objective
    ``sum_r (y_r - (a_r.w)^2)^2 / (2m)`` and its gradient.
    """
    if batch is None:
        a, y = data.measurements, data.intensities
    else:
        idx = _check_batch(batch, data.m)
        a, y = data.measurements[idx], data.intensities[idx]
    r = a @ w
    resid = y - r**2
    value = float(np.mean(resid**2) / 2.0)
    grad = (-2.0 * resid * r) @ a / a.shape[0]
    return value, grad


# ---------------------------------------------------------------------------
# chi-square DRO dual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DroData:
    """Regression features/targets plus the dual temperature ``lam`` and the
    weight of the log-barrier coefficient regularizer."""

    features: Array  # (n, p)
    targets: Array   # (n,)
    lam: float
    l1_reg_weight: float = 0.1

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("lam must be positive")
        if self.l1_reg_weight < 0:
            raise ConfigError("l1_reg_weight must be nonnegative")
        if self.features.ndim != 2 or self.targets.ndim != 1:
            raise ValueError("features must be (n, p), targets (n,)")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("row count mismatch between features and targets")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def chi2_conjugate(t):
    """Convex conjugate of the chi-square divergence: ``(t+2)_+^2 / 4 - 1``."""
    return 0.25 * np.maximum(t + 2.0, 0.0) ** 2 - 1.0


def chi2_conjugate_prime(t):
    """Derivative ``(t+2)_+ / 2`` (one-sided 0 at the kink)."""
    return 0.5 * np.maximum(t + 2.0, 0.0)


def dro_sample_loss(data: DroData, w: Array, idx: Array) -> Array:
    resid = data.features[idx] @ w - data.targets[idx]
    reg = data.l1_reg_weight * float(np.sum(np.log1p(np.abs(w))))
    return 0.5 * resid**2 + reg


def dro_value_and_grad(data: DroData, z: Array, batch=None) -> tuple[float, Array]:
    """Dual objective and gradient at the packed point ``z = (w, eta)``.

    value  = lam * mean φ*((l_xi(w) - eta)/lam) + eta
    d/dw   = mean φ*'((l_xi - eta)/lam) * ∇l_xi(w)
    d/deta = 1 - mean φ*'((l_xi - eta)/lam)

    where ``l_xi(w) = (y_xi - x_xi.w)^2 / 2 + c * sum_j log(1+|w_j|)`` and
    the sign of the regularizer subgradient is taken as 0 at ``w_j = 0``.
    """
    if batch is None:
        idx = np.arange(data.n)
    else:
        idx = _check_batch(batch, data.n)
    w, eta = z[:-1], float(z[-1])
    x = data.features[idx]
    yv = data.targets[idx]
    resid = x @ w - yv
    reg = data.l1_reg_weight * float(np.sum(np.log1p(np.abs(w))))
    losses = 0.5 * resid**2 + reg
    t = (losses - eta) / data.lam
    phi = chi2_conjugate(t)
    phip = chi2_conjugate_prime(t)
    value = float(data.lam * np.mean(phi) + eta)

    reg_grad = data.l1_reg_weight * np.sign(w) / (1.0 + np.abs(w))
    grad_w = (phip * resid) @ x / x.shape[0] + float(np.mean(phip)) * reg_grad
    grad_eta = 1.0 - float(np.mean(phip))
    return value, np.concatenate([grad_w, [grad_eta]])


def generate_dro_synthetic(
    n: int,
    p: int,
    rng: np.random.Generator,
    lam: float = 0.01,
    l1_reg_weight: float = 0.1,
    noise_std: float = 0.5,
) -> DroData:
    """Gaussian linear-regression instance used as the default dataset when
    no CSV is supplied: ``y = x . w_bar + noise`` with standardized features."""
    x = rng.normal(0.0, 1.0, size=(n, p))
    w_bar = rng.normal(0.0, 1.0, size=p) / np.sqrt(p)
    y = x @ w_bar + rng.normal(0.0, noise_std, size=n)
    return DroData(features=x, targets=y, lam=lam, l1_reg_weight=l1_reg_weight)


# ---------------------------------------------------------------------------
# synthetic power functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerFunction:
    """``f(w) = |w|^p``. For ``p >= 2`` the gradient-domination identity
    ``|grad f|^rho = 2 mu f`` holds with equality everywhere, where
    ``rho = p/(p-1)`` and ``2 mu = p^(p/(p-1))``."""

    p: float
    d: int

    def __post_init__(self):
        if self.p <= 1.0:
            raise ConfigError(f"exponent must exceed 1, got {self.p}")
        if self.d < 1:
            raise ConfigError("dimension must be >= 1")

    @property
    def rho(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def mu(self) -> float:
        return self.p ** (self.p / (self.p - 1.0)) / 2.0

    @property
    def alpha(self) -> float:
        return (self.p - 2.0) / (self.p - 1.0)

    def geometry(self) -> GeometryParams:
        # l1 makes the symmetric smoothness bound tight in the local limit
        l1 = self.p * (self.p - 1.0) / self.p**self.alpha
        return GeometryParams(l0=0.0, l1=l1, alpha=self.alpha, mu=self.mu, rho=self.rho)


def power_value_and_grad(fn: PowerFunction, w: Array) -> tuple[float, Array]:
    """Value ``|w|^p`` and gradient ``p |w|^(p-2) w`` (0 at the origin)."""
    if fn.p < 2.0:
        raise ConfigError("gradient evaluation requires p >= 2")
    u = float(np.linalg.norm(w))
    if u == 0.0:
        return 0.0, np.zeros_like(w)
    return u**fn.p, fn.p * u ** (fn.p - 2.0) * w


# ---------------------------------------------------------------------------
# uniform problem interface used by the optimizer runners
# ---------------------------------------------------------------------------

class Problem:
    """Minimal interface: full/batch evaluation and batch sampling.

    ``n_samples`` is None for sample-free deterministic objectives; for
    those, ``stoch_grad`` is not available unless wrapped by a
    :class:`NoisyOracle`.
    """

    problem_id: str = "problem"
    dim: int = 0
    n_samples: Optional[int] = None
    alpha: Optional[float] = None  # declared smoothness exponent, if known

    def value_and_grad(self, w: Array, batch=None) -> tuple[float, Array]:
        raise NotImplementedError

    def stoch_grad(self, w: Array, rng: np.random.Generator, batch_size: int) -> Array:
        if self.n_samples is None:
            raise ConfigError(f"{self.problem_id} has no finite sample set")
        idx = rng.integers(0, self.n_samples, size=batch_size)
        return self.value_and_grad(w, idx)[1]

    def batch_grad_at(self, w: Array, idx: Array) -> Array:
        """Gradient on an explicit index set (used by variance reduction)."""
        return self.value_and_grad(w, idx)[1]

    def geometry(self) -> Optional[GeometryParams]:
        return None


class PhaseRetrievalProblem(Problem):
    problem_id = "phase_retrieval"

    def __init__(self, data: PhaseRetrievalData):
        self.data = data
        self.dim = data.d
        self.n_samples = data.m
        self.alpha = 2.0 / 3.0

    def value_and_grad(self, w, batch=None):
        return pr_value_and_grad(self.data, w, batch)

    def geometry(self):
        l0, l1, alpha = self.data.smoothness_constants()
        return GeometryParams(l0=l0, l1=l1, alpha=alpha)


class DroProblem(Problem):
    problem_id = "dro"

    def __init__(self, data: DroData):
        self.data = data
        self.dim = data.p + 1  # packed (w, eta)
        self.n_samples = data.n
        self.alpha = 1.0

    def value_and_grad(self, z, batch=None):
        return dro_value_and_grad(self.data, z, batch)


class PowerProblem(Problem):
    problem_id = "power"

    def __init__(self, fn: PowerFunction):
        self.fn = fn
        self.dim = fn.d
        self.n_samples = None
        self.alpha = fn.alpha

    def value_and_grad(self, w, batch=None):
        if batch is not None:
            raise ConfigError("power function is sample-free; batch must be None")
        return power_value_and_grad(self.fn, w)

    def geometry(self):
        return self.fn.geometry()


class NoisyOracle(Problem):
    """Stochastic wrapper realizing the affine per-draw noise bound.

    Each draw returns ``g = grad F(w) + r * s * (tau1 |grad F| + tau2) * u``
    with ``r ~ U[0, 1]`` and ``u`` a uniformly random unit vector, so the
    noise has zero mean and ``|g - grad F| < tau1 |grad F| + tau2`` holds on
    every single draw (the shrink factor ``s < 1`` keeps the bound strict).
    """

    problem_id = "noisy"

    def __init__(self, base: Problem, noise: NoiseSpec, shrink: float = 0.99):
        if not 0.0 < shrink < 1.0:
            raise ConfigError(f"shrink must lie in (0, 1), got {shrink}")
        self.base = base
        self.noise = noise
        self.shrink = shrink
        self.dim = base.dim
        self.n_samples = None
        self.alpha = base.alpha
        self.problem_id = f"noisy_{base.problem_id}"

    def value_and_grad(self, w, batch=None):
        return self.base.value_and_grad(w, batch)

    def sample(self, w: Array, rng: np.random.Generator) -> Array:
        _, g = self.base.value_and_grad(w)
        return g + self._noise_draws(g, rng, 1)[0]

    def _noise_draws(self, full_grad: Array, rng: np.random.Generator, n: int) -> Array:
        radius = self.shrink * self.noise.bound(float(np.linalg.norm(full_grad)))
        r = rng.uniform(0.0, 1.0, size=(n, 1))
        u = rng.standard_normal(size=(n, full_grad.size))
        norms = np.linalg.norm(u, axis=1, keepdims=True)
        norms[norms < _KINK_GUARD] = 1.0
        return r * radius * (u / norms)

    def stoch_grad(self, w, rng, batch_size):
        # the mean of per-draw-bounded vectors obeys the same bound
        _, g = self.base.value_and_grad(w)
        draws = self._noise_draws(g, rng, batch_size)
        return g + draws.mean(axis=0)

    def geometry(self):
        return self.base.geometry()
