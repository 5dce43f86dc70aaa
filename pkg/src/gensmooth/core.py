"""Shared numeric primitives: parameter vectors, geometry descriptors, RNG
handling, and per-run trajectory records.

All scalars are 64-bit floats throughout the package; the inequality checks
in :mod:`gensmooth.analysis` rely on that precision.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

Array = np.ndarray
SeedLike = Union[int, Sequence[int]]


class DivergenceError(RuntimeError):
    """Raised when an iterate or objective stops being finite."""


class ConfigError(ValueError):
    """Raised for invalid experiment or optimizer configuration."""


def as_params(values) -> Array:
    """Return ``values`` as a finite 1-D float64 vector.

    Raises :class:`DivergenceError` on NaN/Inf entries so that callers never
    silently propagate a broken iterate.
    """
    w = np.asarray(values, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError(f"parameter vector must be 1-D, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise DivergenceError("parameter vector contains NaN/Inf")
    return w


def l2_norm(v) -> float:
    """Euclidean norm of a vector."""
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))


def ensure_finite(x: float, context: str) -> float:
    if not np.isfinite(x):
        raise DivergenceError(f"non-finite value in {context}: {x!r}")
    return float(x)


def seeded_rng(seed: SeedLike) -> np.random.Generator:
    """Deterministic counter-based generator for one seed.

    Uses Philox so a stream can be split into provably independent
    substreams via :func:`split_rng` (needed wherever two batches must be
    sampled independently of each other).
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``n`` independent child generators."""
    return rng.spawn(n)


@dataclass(frozen=True)
class GeometryParams:
    """Smoothness triple (l0, l1, alpha) and optional gradient-domination
    pair (mu, rho) describing a problem's landscape.

    ``alpha`` is the power of the gradient norm in the smoothness modulus
    (``alpha = 0`` is plain Lipschitz-smoothness).  ``rho = 2`` is the
    classic gradient-domination (PL) inequality.
    """

    l0: float
    l1: float
    alpha: float
    mu: Optional[float] = None
    rho: Optional[float] = None

    def __post_init__(self):
        if self.l0 < 0 or self.l1 < 0:
            raise ConfigError("l0 and l1 must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if (self.mu is None) != (self.rho is None):
            raise ConfigError("mu and rho must be supplied together")
        if self.mu is not None and self.mu <= 0:
            raise ConfigError("mu must be positive")
        if self.rho is not None and not 0.0 < self.rho <= 2.0:
            raise ConfigError(f"rho must lie in (0, 2], got {self.rho}")


@dataclass(frozen=True)
class NoiseSpec:
    """Affine noise-bound parameters: every stochastic gradient draw stays
    within ``tau1 * |grad F| + tau2`` of the true gradient."""

    tau1: float
    tau2: float

    def __post_init__(self):
        if not 0.0 <= self.tau1 < 1.0:
            raise ConfigError(f"tau1 must lie in [0, 1), got {self.tau1}")
        if self.tau2 <= 0.0:
            raise ConfigError(f"tau2 must be positive, got {self.tau2}")

    def bound(self, full_grad_norm: float) -> float:
        return self.tau1 * full_grad_norm + self.tau2


@dataclass(frozen=True)
class IterationMetrics:
    """One recorded point of a run trajectory.

    ``normalizer_h`` is only present for methods that build a clipped
    normalizer; it is never below 1 by construction.
    """

    t: int
    objective: float
    full_grad_norm: float
    stoch_grad_norm: Optional[float]
    normalizer_h: Optional[float]
    cumulative_samples: int

    def __post_init__(self):
        if self.normalizer_h is not None and self.normalizer_h < 1.0:
            raise ValueError(f"normalizer_h must be >= 1, got {self.normalizer_h}")
        if self.cumulative_samples < 0:
            raise ValueError("cumulative_samples must be nonnegative")


@dataclass
class RunRecord:
    """Full trajectory of one (method, seed) run plus its config snapshot."""

    problem_id: str
    seed: int
    config: dict
    iterations: list[IterationMetrics] = field(default_factory=list)
    diverged: bool = False
    stop_reason: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def method(self) -> str:
        return str(self.config.get("method", ""))

    def validate(self) -> None:
        prev = -1
        for it in self.iterations:
            if it.cumulative_samples < prev:
                raise ValueError("cumulative_samples must be nondecreasing")
            prev = it.cumulative_samples
            for name in ("objective", "full_grad_norm"):
                v = getattr(it, name)
                if not np.isfinite(v):
                    raise ValueError(f"recorded {name} is not finite at t={it.t}")

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "seed": self.seed,
            "config": self.config,
            "diverged": self.diverged,
            "stop_reason": self.stop_reason,
            "meta": self.meta,
            "iterations": [
                {
                    "t": it.t,
                    "objective": it.objective,
                    "full_grad_norm": it.full_grad_norm,
                    "stoch_grad_norm": it.stoch_grad_norm,
                    "normalizer_h": it.normalizer_h,
                    "cumulative_samples": it.cumulative_samples,
                }
                for it in self.iterations
            ],
        }

    def to_json(self) -> str:
        # json round-trips Python floats exactly (repr-based shortest form)
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        rec = cls(
            problem_id=d["problem_id"],
            seed=d["seed"],
            config=d["config"],
            diverged=d["diverged"],
            stop_reason=d["stop_reason"],
            meta=d.get("meta", {}),
        )
        rec.iterations = [
            IterationMetrics(
                t=x["t"],
                objective=x["objective"],
                full_grad_norm=x["full_grad_norm"],
                stoch_grad_norm=x["stoch_grad_norm"],
                normalizer_h=x["normalizer_h"],
                cumulative_samples=x["cumulative_samples"],
            )
            for x in d["iterations"]
        ]
        return rec

    @classmethod
    def from_json(cls, s: str) -> "RunRecord":
        return cls.from_dict(json.loads(s))
