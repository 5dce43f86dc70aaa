"""Step rules for the eight supported methods plus the closed-form
hyperparameter constructors used by the rate theory.

Methods: plain/normalized gradient descent ("gd", "angd"), their stochastic
counterparts ("sgd", "nsgd", "nsgdm"), clipped SGD ("clipped_sgd"), the
variance-reduced estimator with periodic refresh ("spider"), and SGD with an
independently-sampled clipped normalizer ("iansgd").

Every step function is pure; the runners own mutable buffers and report the
samples consumed per step so sample-complexity accounting is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .core import Array, ConfigError
from .problems import Problem, NoisyOracle

METHODS = ("gd", "angd", "sgd", "nsgd", "nsgdm", "clipped_sgd", "spider", "iansgd")

# below this norm a normalized update is treated as stationary
ZERO_GRAD_GUARD = 1e-30


# ---------------------------------------------------------------------------
# step rules
# ---------------------------------------------------------------------------

def gd_step(w: Array, grad: Array, gamma: float) -> Array:
    return w - gamma * grad


def angd_step(w: Array, grad: Array, gamma: float, beta: float) -> Array:
    """Normalized update ``w - gamma * grad / |grad|^beta`` with a
    zero-gradient guard making the stationary point an explicit fixed point."""
    gn = float(np.linalg.norm(grad))
    if gn <= ZERO_GRAD_GUARD:
        return w.copy()
    return w - gamma * grad / gn**beta


def sgd_step(w: Array, stoch_grad: Array, gamma: float) -> Array:
    return gd_step(w, stoch_grad, gamma)


def nsgd_step(w: Array, stoch_grad: Array, gamma: float, beta: float) -> Array:
    return angd_step(w, stoch_grad, gamma, beta)


def nsgdm_step(
    w: Array,
    momentum: Optional[Array],
    stoch_grad: Array,
    gamma: float,
    beta: float,
    theta: float,
) -> tuple[Array, Array]:
    """Momentum-buffered normalized step; buffer initializes to the first
    stochastic gradient so the first update is not spuriously tiny."""
    m = stoch_grad.copy() if momentum is None else (1.0 - theta) * momentum + theta * stoch_grad
    return angd_step(w, m, gamma, beta), m


def clipped_sgd_step(w: Array, stoch_grad: Array, gamma: float, c: float) -> Array:
    """Clipped update ``w - gamma * min(1, c/|g|) g``; step length is
    ``gamma * min(|g|, c)``."""
    if c <= 0:
        raise ConfigError("clip threshold must be positive")
    gn = float(np.linalg.norm(stoch_grad))
    if gn <= ZERO_GRAD_GUARD:
        return w.copy()
    return w - gamma * min(1.0, c / gn) * stoch_grad


def clip_vector(v: Array, c: float) -> Array:
    """Rescale ``v`` to norm at most ``c``."""
    vn = float(np.linalg.norm(v))
    if vn <= c or vn <= ZERO_GRAD_GUARD:
        return v
    return (c / vn) * v


def iansgd_normalizer(gprime_norm: float, a_scale: float, delta: float, gamma_cap: float) -> float:
    """Clipped normalizer ``max(1, Gamma * (A |g'| + delta))``; always >= 1
    and nondecreasing in the independent-batch gradient norm."""
    if a_scale <= 0 or delta <= 0 or gamma_cap <= 0:
        raise ConfigError("normalizer parameters A, delta, Gamma must be positive")
    return max(1.0, gamma_cap * (a_scale * gprime_norm + delta))


def iansgd_step(w: Array, stoch_grad: Array, h: float, gamma: float, beta: float) -> Array:
    """Update ``w - gamma * g / h^beta`` with the normalizer built from an
    independent batch. With h = 1 this is exactly plain SGD."""
    if h < 1.0:
        raise ConfigError("normalizer must be >= 1")
    return w - gamma * stoch_grad / h**beta


# ---------------------------------------------------------------------------
# theoretical hyperparameter constructors
# ---------------------------------------------------------------------------

def angd_theoretical_stepsize(
    eps: float, mu: float, rho: float, beta: float, l0: float, l1: float
) -> float:
    """Rate-theory step size ``(2 mu eps)^(beta/rho) / (8(l0+l1)+1)``.

    Valid for ``0 < eps <= min(1, 1/(2 mu))``; the returned value always
    satisfies the additional guard ``gamma <= 2/mu``.
    """
    eps_cap = min(1.0, 1.0 / (2.0 * mu))
    if not 0.0 < eps <= eps_cap:
        raise ConfigError(
            f"target error must satisfy 0 < eps <= min(1, 1/(2*mu)) = {eps_cap}, got {eps}"
        )
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")
    if not 0.0 < rho <= 2.0:
        raise ConfigError(f"rho must lie in (0, 2], got {rho}")
    gamma = (2.0 * mu * eps) ** (beta / rho) / (8.0 * (l0 + l1) + 1.0)
    if gamma > 2.0 / mu:
        raise ConfigError(f"step size {gamma} exceeds the guard 2/mu = {2.0 / mu}")
    return gamma


def iansgd_theoretical_params(
    tau1: float, tau2: float, l0: float, l1: float, beta: float, T: int
) -> tuple[float, float, float, float]:
    """Closed-form (gamma, A, delta, Gamma) for the independently-normalized
    method at horizon ``T``:

    gamma = min( 1/(4 l0 (2 tau1^2+1)), 1/(4 l1 (2 tau1^2+1)), 1/sqrt(T),
                 1/(8 l1 (2 tau1^2+1) (2 tau2/(1-tau1))^beta) )
    A     = 1/(1-tau1)
    delta = tau2/(1-tau1)
    Gamma = (4 l1 gamma (2 tau1^2+1))^(1/beta)
    """
    if not 0.0 <= tau1 < 1.0:
        raise ConfigError(f"tau1 must lie in [0, 1), got {tau1}")
    if tau2 <= 0:
        raise ConfigError("tau2 must be positive")
    if not 0.0 < beta <= 1.0:
        raise ConfigError(
            "beta must lie in (0, 1]: the normalizer cap exponent 1/beta is undefined at beta = 0"
        )
    if T < 1:
        raise ConfigError("T must be >= 1")
    c = 2.0 * tau1**2 + 1.0
    terms = [1.0 / math.sqrt(T)]
    if l0 > 0:
        terms.append(1.0 / (4.0 * l0 * c))
    if l1 > 0:
        terms.append(1.0 / (4.0 * l1 * c))
        terms.append(1.0 / (8.0 * l1 * c * (2.0 * tau2 / (1.0 - tau1)) ** beta))
    gamma = min(terms)
    a_scale = 1.0 / (1.0 - tau1)
    delta = tau2 / (1.0 - tau1)
    gamma_cap = (4.0 * l1 * gamma * c) ** (1.0 / beta)
    return gamma, a_scale, delta, gamma_cap


def iansgd_pl_stepsize(
    eps: float,
    mu: float,
    rho: float,
    tau1: float,
    tau2: float,
    l0: float,
    l1: float,
    beta: float,
) -> float:
    """Step size of the stochastic descent recursion under gradient
    domination: ``(2 mu eps)^((4-2 beta)/rho)`` times the minimum of four
    curvature/noise terms."""
    if not 0.0 < eps <= min(1.0, 1.0 / (2.0 * mu)):
        raise ConfigError("target error must satisfy 0 < eps <= min(1, 1/(2*mu))")
    if not 0.0 <= tau1 < 1.0 or tau2 <= 0:
        raise ConfigError("need 0 <= tau1 < 1 and tau2 > 0")
    c = 2.0 * tau1**2 + 1.0
    terms = []
    if l0 > 0:
        terms.append(1.0 / (4.0 * l0 * c))
    if l1 > 0:
        terms.append(1.0 / (4.0 * l1 * ((2.0 * tau1 + 2.0) / (1.0 - tau1)) * c))
        terms.append(1.0 / (8.0 * l1 * c * (2.0 * tau2 / (1.0 - tau1)) ** beta))
        terms.append(
            l1 * c / (16.0 * ((l0 + l1) * (1.0 + 4.0 * tau2**2) + l1 * (tau1**2 + 0.5)) ** 2)
        )
    if not terms:
        raise ConfigError("at least one of l0, l1 must be positive")
    return (2.0 * mu * eps) ** ((4.0 - 2.0 * beta) / rho) * min(terms)


# ---------------------------------------------------------------------------
# configuration and runners
# ---------------------------------------------------------------------------

@dataclass
class OptimizerConfig:
    """All hyperparameters of one method instance.

    ``clip`` is the clipping threshold of clipped SGD; for "iansgd" it is the
    optional practical cap on the magnitude of the normalized update (the
    pure update rule has no cap). ``beta`` is the normalization power,
    ``delta``/``gamma_cap``/``a_scale`` parameterize the clipped normalizer,
    ``momentum`` is the moving-average weight of "nsgdm".
    """

    method: str
    gamma: float
    beta: float = 0.0
    clip: Optional[float] = None
    delta: Optional[float] = None
    gamma_cap: Optional[float] = None
    a_scale: Optional[float] = None
    momentum: Optional[float] = None
    batch_b: int = 1
    batch_bprime: Optional[int] = None
    spider_epoch: Optional[int] = None
    max_iters: Optional[int] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; valid: {METHODS}")
        if self.gamma < 0:
            raise ConfigError("gamma must be nonnegative")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if self.method == "iansgd" and self.batch_bprime is None:
            raise ConfigError("iansgd requires batch_bprime (independent batch size)")
        if self.method != "iansgd" and self.batch_bprime is not None and self.method != "spider":
            raise ConfigError(f"batch_bprime is not a parameter of {self.method}")
        if self.method == "spider" and self.spider_epoch is None:
            raise ConfigError("spider requires spider_epoch (refresh period)")
        if self.method != "spider" and self.spider_epoch is not None:
            raise ConfigError(f"spider_epoch is not a parameter of {self.method}")
        if self.method == "clipped_sgd" and self.clip is None:
            raise ConfigError("clipped_sgd requires a clip threshold")
        if self.momentum is not None and self.method != "nsgdm":
            raise ConfigError(f"momentum is not a parameter of {self.method}")
        if self.momentum is not None and not 0.0 <= self.momentum <= 1.0:
            raise ConfigError("momentum must lie in [0, 1]")
        if self.batch_b < 1:
            raise ConfigError("batch_b must be >= 1")
        if self.name is None:
            self.name = self.method

    def snapshot(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class StepOutcome:
    w: Array
    samples: int
    stoch_grad_norm: Optional[float] = None
    normalizer_h: Optional[float] = None
    clip_bound: bool = False


class OptimizerRunner:
    """Executes one method on one problem; owns all mutable buffers.

    Sample accounting per step: deterministic methods charge the dataset
    size (0 for sample-free objectives); "sgd"/"nsgd"/"nsgdm"/"clipped_sgd"
    charge ``batch_b``; "iansgd" charges ``batch_b + batch_bprime``;
    "spider" charges the refresh batch at refresh steps and ``2 * batch_b``
    otherwise.
    """

    def __init__(self, cfg: OptimizerConfig, problem: Problem, rng: np.random.Generator):
        self.cfg = cfg
        self.problem = problem
        # two independent substreams so the normalizer batch of "iansgd" is
        # sampled independently of the update batch
        self._rng_batch, self._rng_indep = rng.spawn(2)
        self._momentum: Optional[Array] = None
        self._spider_v: Optional[Array] = None
        self._w_prev: Optional[Array] = None
        self._t = 0

    # -- helpers ----------------------------------------------------------
    def _full_cost(self) -> int:
        return self.problem.n_samples or 0

    def _draw(self, w: Array, size: int, rng: np.random.Generator) -> Array:
        return self.problem.stoch_grad(w, rng, size)

    # -- one iteration ----------------------------------------------------
    def step(self, w: Array) -> StepOutcome:
        cfg = self.cfg
        method = cfg.method
        if method == "gd":
            _, g = self.problem.value_and_grad(w)
            out = StepOutcome(gd_step(w, g, cfg.gamma), self._full_cost())
        elif method == "angd":
            _, g = self.problem.value_and_grad(w)
            out = StepOutcome(angd_step(w, g, cfg.gamma, cfg.beta), self._full_cost())
        elif method == "sgd":
            g = self._draw(w, cfg.batch_b, self._rng_batch)
            out = StepOutcome(sgd_step(w, g, cfg.gamma), cfg.batch_b, float(np.linalg.norm(g)))
        elif method == "nsgd":
            g = self._draw(w, cfg.batch_b, self._rng_batch)
            out = StepOutcome(
                nsgd_step(w, g, cfg.gamma, cfg.beta), cfg.batch_b, float(np.linalg.norm(g))
            )
        elif method == "nsgdm":
            g = self._draw(w, cfg.batch_b, self._rng_batch)
            theta = cfg.momentum if cfg.momentum is not None else 0.1
            w_new, self._momentum = nsgdm_step(w, self._momentum, g, cfg.gamma, cfg.beta, theta)
            out = StepOutcome(w_new, cfg.batch_b, float(np.linalg.norm(g)))
        elif method == "clipped_sgd":
            g = self._draw(w, cfg.batch_b, self._rng_batch)
            out = self._clipped_step(w, g)
        elif method == "spider":
            out = self._spider_step(w)
        elif method == "iansgd":
            out = self._iansgd_step(w)
        else:  # pragma: no cover - guarded by OptimizerConfig
            raise ConfigError(f"unknown method {method!r}")
        self._t += 1
        return out

    def _clipped_step(self, w: Array, g: Array) -> StepOutcome:
        cfg = self.cfg
        gn = float(np.linalg.norm(g))
        if cfg.beta == 0.0:
            return StepOutcome(clipped_sgd_step(w, g, cfg.gamma, cfg.clip), cfg.batch_b, gn)
        # normalized variant: clip the magnitude of the normalized gradient
        guard = cfg.delta if cfg.delta is not None else 0.0
        denom = (gn + guard) ** cfg.beta
        if gn <= ZERO_GRAD_GUARD:
            return StepOutcome(w.copy(), cfg.batch_b, gn)
        ghat = g / denom
        clipped = clip_vector(ghat, cfg.clip)
        bound = clipped is not ghat
        return StepOutcome(w - cfg.gamma * clipped, cfg.batch_b, gn, clip_bound=bound)

    def _spider_step(self, w: Array) -> StepOutcome:
        cfg = self.cfg
        n = self.problem.n_samples
        if n is None:
            raise ConfigError("spider requires a finite-sample problem")
        q = cfg.spider_epoch
        refresh_size = cfg.batch_bprime if cfg.batch_bprime is not None else n
        if self._t % q == 0:
            if refresh_size >= n:
                _, self._spider_v = self.problem.value_and_grad(w)
                samples = n
            else:
                idx = self._rng_batch.integers(0, n, size=refresh_size)
                self._spider_v = self.problem.batch_grad_at(w, idx)
                samples = refresh_size
        else:
            # same index set evaluated at the current and previous point
            idx = self._rng_batch.integers(0, n, size=cfg.batch_b)
            g_now = self.problem.batch_grad_at(w, idx)
            g_prev = self.problem.batch_grad_at(self._w_prev, idx)
            self._spider_v = g_now - g_prev + self._spider_v
            samples = 2 * cfg.batch_b
        self._w_prev = w.copy()
        v = self._spider_v
        return StepOutcome(
            angd_step(w, v, cfg.gamma, cfg.beta), samples, float(np.linalg.norm(v))
        )

    def _iansgd_step(self, w: Array) -> StepOutcome:
        cfg = self.cfg
        g = self._draw(w, cfg.batch_b, self._rng_batch)
        g_prime = self._draw(w, cfg.batch_bprime, self._rng_indep)
        a_scale = cfg.a_scale if cfg.a_scale is not None else 1.0
        delta = cfg.delta if cfg.delta is not None else 1e-3
        gamma_cap = cfg.gamma_cap if cfg.gamma_cap is not None else 1.0
        h = iansgd_normalizer(float(np.linalg.norm(g_prime)), a_scale, delta, gamma_cap)
        samples = cfg.batch_b + cfg.batch_bprime
        gn = float(np.linalg.norm(g))
        if cfg.clip is None:
            return StepOutcome(iansgd_step(w, g, h, cfg.gamma, cfg.beta), samples, gn, h)
        # practical variant: cap the magnitude of the normalized update
        ghat = g / h**cfg.beta
        clipped = clip_vector(ghat, cfg.clip)
        bound = clipped is not ghat
        return StepOutcome(w - cfg.gamma * clipped, samples, gn, h, clip_bound=bound)


def expected_cumulative_samples(cfg: OptimizerConfig, t: int, n_samples: Optional[int]) -> int:
    """Closed-form samples consumed after ``t`` steps (for accounting checks)."""
    if cfg.method in ("gd", "angd"):
        return t * (n_samples or 0)
    if cfg.method in ("sgd", "nsgd", "nsgdm", "clipped_sgd"):
        return t * cfg.batch_b
    if cfg.method == "iansgd":
        return t * (cfg.batch_b + cfg.batch_bprime)
    if cfg.method == "spider":
        q = cfg.spider_epoch
        refresh_size = cfg.batch_bprime if cfg.batch_bprime is not None else (n_samples or 0)
        refresh_cost = (n_samples or 0) if (n_samples is not None and refresh_size >= n_samples) else refresh_size
        n_refresh = 0 if t == 0 else (t - 1) // q + 1
        return n_refresh * refresh_cost + (t - n_refresh) * 2 * cfg.batch_b
    raise ConfigError(f"unknown method {cfg.method!r}")
