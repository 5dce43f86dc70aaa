"""Numerical verification of every checkable formula: smoothness and
gradient-domination estimation, noise-model audits, estimator-bias
measurement by exact enumeration, convergence-regime classification, and
the closed-form iteration-bound calculators.

All verifiers are pure functions over immutable inputs; Monte-Carlo loops
take explicit generators so results are reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .core import Array, ConfigError
from .optimizers import (
    angd_step,
    angd_theoretical_stepsize,
    iansgd_normalizer,
    iansgd_pl_stepsize,
    iansgd_step,
    iansgd_theoretical_params,
)
from .problems import NoisyOracle, PowerFunction, PowerProblem, power_value_and_grad

_EPS_REL = 1e-12


@dataclass
class CheckResult:
    """One verification row: name, verdict, worst margin, sample count."""

    name: str
    passed: bool
    worst_margin: float
    n: int
    detail: str = ""


@dataclass
class RateFit:
    """Outcome of convergence-regime classification.

    ``coefficient`` is the fitted log-log slope (polynomial regime), the
    per-step contraction factor (linear regime), or the slope of
    ``log log(1/gap)`` versus iteration (two-phase regime).
    """

    regime: str
    coefficient: float
    goodness: float
    candidates: dict = field(default_factory=dict)
    n_points: int = 0


@dataclass
class BiasReport:
    cosine: float
    angular_error: float
    n: int
    degenerate: bool = False


@dataclass
class NoiseAudit:
    violations: int
    mean_noise_norm: float
    worst_slack: float
    n_draws: int


# ---------------------------------------------------------------------------
# smoothness estimation / certification
# ---------------------------------------------------------------------------

def _pair_stats(grad_fn: Callable[[Array], Array], points: Sequence[Array], alpha: float):
    grads = [np.asarray(grad_fn(w), dtype=np.float64) for w in points]
    ratios, s_vals = [], []
    for i in range(len(points)):
        for j in range(len(points)):
            if i == j:
                continue
            dw = float(np.linalg.norm(points[i] - points[j]))
            if dw < 1e-12:
                continue
            ratios.append(float(np.linalg.norm(grads[i] - grads[j])) / dw)
            s_vals.append(float(np.linalg.norm(grads[j])) ** alpha)
    return np.asarray(ratios), np.asarray(s_vals)


def estimate_smoothness(
    grad_fn: Callable[[Array], Array], alpha: float, points: Sequence[Array]
) -> tuple[float, float, float]:
    """Fit nonnegative (l0, l1) to the gradient-variation data of a point
    cloud and report how well the fit certifies it.

    Over all ordered pairs, the variation ratio ``r = |g(w)-g(w')|/|w-w'|``
    is regressed on ``(1, |g(w')|^alpha)`` by nonnegative least squares.
    Returns ``(l0_hat, l1_hat, max_violation_ratio)`` where a max ratio <= 1
    means the fitted pair upper-bounds every observed variation.
    """
    if len(points) < 2:
        raise ConfigError("need at least 2 points")
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]")
    ratios, s_vals = _pair_stats(grad_fn, points, alpha)
    if ratios.size == 0:
        raise ConfigError("all points coincide")
    spread = float(s_vals.max() - s_vals.min())
    if spread < 1e-12 * max(1.0, float(np.abs(s_vals).max())):
        # features are collinear; attribute everything to the constant term
        l0_hat, l1_hat = float(np.mean(ratios)), 0.0
    else:
        a_mat = np.column_stack([np.ones_like(s_vals), s_vals])
        coef, _ = nnls(a_mat, ratios)
        l0_hat, l1_hat = float(coef[0]), float(coef[1])
    denom = np.maximum(l0_hat + l1_hat * s_vals, 1e-300)
    return l0_hat, l1_hat, float(np.max(ratios / denom))


def smoothness_certificate(
    grad_fn: Callable[[Array], Array],
    pairs: Sequence[tuple[Array, Array]],
    l0: float,
    l1: float,
    alpha: float,
    symmetric: bool = True,
) -> tuple[int, float]:
    """Check supplied constants against gradient variation on given pairs.

    Symmetric form compares against ``l0 + l1*(|g(w)|^a + |g(w')|^a)/2``;
    the asymmetric form uses ``|g(w')|^a`` alone.  Returns (violations,
    worst ratio lhs/rhs).
    """
    violations, worst = 0, 0.0
    for w1, w2 in pairs:
        g1, g2 = grad_fn(w1), grad_fn(w2)
        dw = float(np.linalg.norm(w1 - w2))
        if dw < 1e-12:
            continue
        lhs = float(np.linalg.norm(g1 - g2))
        n1, n2 = float(np.linalg.norm(g1)), float(np.linalg.norm(g2))
        s = 0.5 * (n1**alpha + n2**alpha) if symmetric else n2**alpha
        rhs = dw * (l0 + l1 * s)
        ratio = lhs / max(rhs, 1e-300)
        worst = max(worst, ratio)
        if lhs > rhs * (1.0 + _EPS_REL):
            violations += 1
    return violations, worst


def check_descent_inequality(
    value_and_grad: Callable[[Array], tuple[float, Array]],
    iterates: Sequence[Array],
    l0: float,
    l1: float,
    alpha: float,
    rel_tol: float = 1e-9,
) -> tuple[int, float]:
    """Verify the quadratic upper bound between consecutive iterates:
    ``f(w+) <= f(w) + <g(w), w+ - w> + (l0 + l1 |g(w)|^a)/2 * |w+ - w|^2``.

    Returns (violations, worst signed margin) where margin = rhs - lhs,
    normalized by max(1, |f(w)|).
    """
    violations, worst = 0, math.inf
    for w, w_next in zip(iterates[:-1], iterates[1:]):
        f_w, g_w = value_and_grad(w)
        f_next, _ = value_and_grad(w_next)
        step = w_next - w
        rhs = (
            f_w
            + float(g_w @ step)
            + 0.5 * (l0 + l1 * float(np.linalg.norm(g_w)) ** alpha) * float(step @ step)
        )
        scale = max(1.0, abs(f_w))
        margin = (rhs - f_next) / scale
        worst = min(worst, margin)
        if margin < -rel_tol:
            violations += 1
    return violations, worst


# ---------------------------------------------------------------------------
# gradient-domination checks
# ---------------------------------------------------------------------------

def check_pl(
    values: Sequence[float],
    grad_norms: Sequence[float],
    f_star: float,
    mu: float,
    rho: float,
    rel_tol: float = 1e-10,
) -> tuple[float, float]:
    """Fraction of points satisfying ``|grad|^rho >= 2 mu (f - f*)`` and the
    worst relative margin ``(lhs - rhs)/max(|rhs|, tiny)``."""
    values = np.asarray(values, dtype=np.float64)
    grad_norms = np.asarray(grad_norms, dtype=np.float64)
    lhs = grad_norms**rho
    rhs = 2.0 * mu * (values - f_star)
    margins = (lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
    ok = lhs >= rhs - rel_tol * np.maximum(np.abs(rhs), 1.0)
    return float(np.mean(ok)), float(np.min(margins)) if margins.size else 0.0


# ---------------------------------------------------------------------------
# noise-model audit
# ---------------------------------------------------------------------------

def verify_affine_noise(
    oracle: NoisyOracle,
    points: Sequence[Array],
    draws_per_point: int,
    tau1: float,
    tau2: float,
    rng: np.random.Generator,
) -> NoiseAudit:
    """Audit the per-draw affine bound and the two derived norm inequalities
    relating the stochastic and full gradient:

    * ``|g - grad F| <= tau1 |grad F| + tau2`` on every draw,
    * ``|grad F| <= |g|/(1-tau1) + tau2/(1-tau1)``,
    * ``|g| <= (1+tau1) |grad F| + tau2``.
    """
    violations = 0
    worst_slack = math.inf
    noise_sum = 0.0
    total = 0
    for w in points:
        _, full = oracle.base.value_and_grad(w)
        full_norm = float(np.linalg.norm(full))
        bound = tau1 * full_norm + tau2
        draws = oracle._noise_draws(full, rng, draws_per_point)
        noise_norms = np.linalg.norm(draws, axis=1)
        g_norms = np.linalg.norm(full[None, :] + draws, axis=1)
        tol = _EPS_REL * max(1.0, bound)
        bad = (
            (noise_norms > bound + tol)
            | (full_norm > g_norms / (1.0 - tau1) + tau2 / (1.0 - tau1) + tol)
            | (g_norms > (1.0 + tau1) * full_norm + tau2 + tol)
        )
        violations += int(np.sum(bad))
        worst_slack = min(worst_slack, float(np.min(bound - noise_norms)))
        noise_sum += float(np.sum(noise_norms))
        total += draws_per_point
    return NoiseAudit(violations, noise_sum / total, worst_slack, total)


# ---------------------------------------------------------------------------
# estimator bias (exact enumeration over finite support)
# ---------------------------------------------------------------------------

def _bias_report(estimate: Array, full_grad: Array, n: int) -> BiasReport:
    fn = float(np.linalg.norm(full_grad))
    en = float(np.linalg.norm(estimate))
    if fn < 1e-300 or en < 1e-300:
        return BiasReport(cosine=math.nan, angular_error=math.nan, n=n, degenerate=True)
    cosine = float(estimate @ full_grad) / (en * fn)
    return BiasReport(cosine=cosine, angular_error=math.acos(max(-1.0, min(1.0, cosine))), n=n)


def estimator_bias_test(
    gradients: Array,
    probs: Sequence[float],
    beta: float,
    normalizer: Optional[tuple[float, float, float]] = None,
) -> tuple[BiasReport, BiasReport]:
    """Exactly enumerate, over a finite gradient support, the expectations of

    * the same-sample normalized estimator ``g / n(g)``  (generally biased), and
    * the independent-sample estimator ``g_i / n(g_j)`` over all (i, j) pairs,
      which is always exactly parallel to the mean gradient.

    ``normalizer=None`` uses the plain power ``n(g) = |g|^beta``; otherwise
    ``normalizer=(A, delta, Gamma)`` uses the clipped form
    ``max(1, Gamma(A |g| + delta))^beta``.
    """
    gradients = np.asarray(gradients, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if gradients.ndim != 2 or gradients.shape[0] != probs.shape[0]:
        raise ConfigError("gradients must be (k, d) with matching probabilities")
    if abs(float(probs.sum()) - 1.0) > 1e-9 or np.any(probs < 0):
        raise ConfigError("probabilities must be nonnegative and sum to 1")

    norms = np.linalg.norm(gradients, axis=1)
    if normalizer is None:
        denom = np.maximum(norms, 1e-300) ** beta
    else:
        a_scale, delta, gamma_cap = normalizer
        denom = np.array(
            [iansgd_normalizer(n, a_scale, delta, gamma_cap) for n in norms]
        ) ** beta

    full_grad = probs @ gradients
    same = (probs / denom) @ gradients
    indep = np.zeros_like(full_grad)
    for i in range(len(probs)):
        for j in range(len(probs)):
            indep += probs[i] * probs[j] * gradients[i] / denom[j]

    k = len(probs)
    return _bias_report(same, full_grad, k), _bias_report(indep, full_grad, k * k)


def estimator_bias_monte_carlo(
    oracle: NoisyOracle,
    w: Array,
    beta: float,
    n_draws: int,
    rng: np.random.Generator,
) -> tuple[BiasReport, BiasReport]:
    """Monte-Carlo analogue of :func:`estimator_bias_test` for oracles with
    continuous noise."""
    _, full = oracle.base.value_and_grad(w)
    same = np.zeros_like(full)
    indep = np.zeros_like(full)
    for _ in range(n_draws):
        g = oracle.sample(w, rng)
        g_prime = oracle.sample(w, rng)
        same += g / max(float(np.linalg.norm(g)), 1e-300) ** beta
        indep += g / max(float(np.linalg.norm(g_prime)), 1e-300) ** beta
    return _bias_report(same / n_draws, full, n_draws), _bias_report(indep / n_draws, full, n_draws)


# ---------------------------------------------------------------------------
# convergence-rate fitting
# ---------------------------------------------------------------------------

def _linear_fit(x: Array, y: Array) -> tuple[float, float, float]:
    """Least-squares line fit returning (slope, intercept, r_squared)."""
    a_mat = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(a_mat, y, rcond=None)
    resid = y - a_mat @ coef
    ss_res = float(resid @ resid)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), float(coef[1]), r2


def fit_convergence_rate(
    deltas: Sequence[float],
    tail_fraction: float = 0.5,
    r2_margin: float = 0.02,
) -> RateFit:
    """Classify a gap trajectory as polynomial, linear (geometric), or
    two-phase by fitting three transforms and picking the best R^2.

    * polynomial: log(gap) vs log(t) over the whole valid trajectory,
    * linear:     log(gap) vs t over the whole valid trajectory,
    * two-phase:  log log(1/gap) vs t over the tail where gap < 1/e.

    A winner needs an R^2 lead of ``r2_margin`` over the runner-up unless
    its fit is essentially exact (R^2 >= 0.999); otherwise the regime is
    "inconclusive". The reported coefficient is refit on the trailing
    ``tail_fraction`` of the winning transform's window, where the
    asymptotic behavior dominates.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    nonpos = np.nonzero(deltas <= 0.0)[0]
    if nonpos.size:
        deltas = deltas[: nonpos[0]]
    if deltas.size < 50:
        raise ConfigError("need at least 50 positive gap values")

    t = np.arange(1, deltas.size + 1, dtype=np.float64)
    log_d = np.log(deltas)
    candidates: dict[str, tuple[float, float, Array, Array]] = {}

    slope, _, r2 = _linear_fit(np.log(t), log_d)
    candidates["polynomial"] = (slope, r2, np.log(t), log_d)
    slope, _, r2 = _linear_fit(t, log_d)
    candidates["linear"] = (slope, r2, t, log_d)

    small = deltas < math.exp(-1.0)
    if int(np.sum(small)) >= 10:
        idx = np.nonzero(small)[0]
        ll = np.log(np.log(1.0 / deltas[idx]))
        slope, _, r2 = _linear_fit(idx.astype(np.float64), ll)
        candidates["two_phase"] = (slope, r2, idx.astype(np.float64), ll)

    ranked = sorted(candidates.items(), key=lambda kv: kv[1][1], reverse=True)
    best_name, (best_slope, best_r2, bx, by) = ranked[0]
    conclusive = len(ranked) == 1 or best_r2 >= 0.999 or best_r2 - ranked[1][1][1] >= r2_margin

    # refine the coefficient on the tail of the winning window
    lo = int(bx.size * (1.0 - tail_fraction))
    if bx.size - lo >= 5:
        tail_slope, _, _ = _linear_fit(bx[lo:], by[lo:])
    else:
        tail_slope = best_slope

    if best_name == "linear":
        coefficient = math.exp(tail_slope)  # per-step contraction factor
    else:
        coefficient = tail_slope

    return RateFit(
        regime=best_name if conclusive else "inconclusive",
        coefficient=coefficient,
        goodness=best_r2,
        candidates={k: v[1] for k, v in candidates.items()},
        n_points=int(deltas.size),
    )


def two_phase_fit(
    deltas: Sequence[float], entry: float, saturation: float
) -> tuple[float, float, int]:
    """Fit ``log log(1/gap)`` versus iteration on the superlinear window.

    The window contains the iterations after the gap first drops below
    ``entry`` and before it reaches the ``saturation`` level where the
    descent inequality degenerates into an equality (the fixed point of the
    exact dynamics); the trajectory is truncated at its running minimum.
    Returns (slope, r_squared, n_points).
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    cut = int(np.argmin(deltas)) + 1
    seg = deltas[:cut]
    idx = np.nonzero((seg < entry) & (seg > saturation))[0]
    if idx.size < 3:
        return math.nan, math.nan, int(idx.size)
    ll = np.log(np.log(1.0 / seg[idx]))
    slope, _, r2 = _linear_fit(idx.astype(np.float64), ll)
    return slope, r2, int(idx.size)


# ---------------------------------------------------------------------------
# iteration-bound calculators
# ---------------------------------------------------------------------------

@dataclass
class RateBound:
    case: str
    t_bound: float
    entry_threshold: Optional[float] = None
    note: str = ""


def theorem_rate_case(beta: float, rho: float) -> str:
    if beta < 2.0 - rho:
        return "polynomial"
    if beta == 2.0 - rho:
        return "linear"
    return "two_phase"


def angd_iteration_bound(
    eps: float,
    mu: float,
    rho: float,
    beta: float,
    l0: float,
    l1: float,
    delta0: float,
) -> RateBound:
    """Iteration bound of the normalized method under gradient domination.

    Case selection by the sign of ``beta - (2 - rho)``:

    * polynomial (beta < 2-rho):
        max( 8 rho (8(l0+l1)+1) / ((2-beta-rho)(2 mu)^(2/rho) eps^((2-rho)/rho)),
             1 / ((2^((2-beta-rho)/(2-beta)) - 1) delta0^((rho+beta-2)/rho)
                  eps^((2-beta-rho)/rho)) )
    * linear (beta = 2-rho):
        2^(1-beta/rho) (8(l0+l1)+1) / (mu (mu eps)^(beta/rho)) * log(delta0/eps)
    * two-phase (beta > 2-rho): the tail bound
        log((1/eps)^(beta/(rho+beta-2)))
        + log log( (2 mu)^(2/(rho+beta-2))
                   / ((32(l0+l1)+4)^(rho/(rho+beta-2)) eps) )
      reported at order level (absolute constants set to 1), together with
      the entry threshold ``(gamma mu^((2-beta)/(rho+beta-2)))^(rho/(rho+beta-2))``.
    """
    gamma = angd_theoretical_stepsize(eps, mu, rho, beta, l0, l1)  # validates ranges
    lsum = 8.0 * (l0 + l1) + 1.0
    case = theorem_rate_case(beta, rho)
    if case == "polynomial":
        term1 = 8.0 * rho * lsum / ((2.0 - beta - rho) * (2.0 * mu) ** (2.0 / rho) * eps ** ((2.0 - rho) / rho))
        term2 = 1.0 / (
            (2.0 ** ((2.0 - beta - rho) / (2.0 - beta)) - 1.0)
            * delta0 ** ((rho + beta - 2.0) / rho)
            * eps ** ((2.0 - beta - rho) / rho)
        )
        return RateBound(case, max(term1, term2))
    if case == "linear":
        if eps >= delta0:
            return RateBound(case, 0.0, note="target gap already at least the initial gap")
        t = (
            2.0 ** (1.0 - beta / rho)
            * lsum
            / (mu * (mu * eps) ** (beta / rho))
            * math.log(delta0 / eps)
        )
        return RateBound(case, t)
    # two-phase
    kappa = rho + beta - 2.0
    entry = (gamma * mu ** ((2.0 - beta) / kappa)) ** (rho / kappa)
    inner = (2.0 * mu) ** (2.0 / kappa) / ((32.0 * (l0 + l1) + 4.0) ** (rho / kappa) * eps)
    t = math.log((1.0 / eps) ** (beta / kappa))
    if inner > 1.0:
        t += math.log(math.log(inner))
    return RateBound(case, t, entry_threshold=entry, note="order-level (absolute constants set to 1)")


def iansgd_iteration_bound(
    eps: float,
    tau1: float,
    tau2: float,
    l0: float,
    l1: float,
    beta: float,
    gap: float,
) -> float:
    """Iteration bound of the independently-normalized stochastic method:

    Lambda = gap + (l0+l1)(1+4 tau2^2)^2 / 2
    T >= Lambda * max( 256 Lambda / eps^4,
                       64 l1 (2 tau1^2+1)(2+2 tau1)^beta / ((1-tau1)^beta eps^(2-beta)),
                       (2 tau1^2+1)(64(l0+l1) + 128 l1 (2 tau2/(1-tau1))^beta) / eps^2 )
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    if not 0.0 <= tau1 < 1.0 or tau2 <= 0:
        raise ConfigError("need 0 <= tau1 < 1 and tau2 > 0")
    if not 0.0 < beta <= 1.0:
        raise ConfigError("beta must lie in (0, 1]")
    lam = gap + 0.5 * (l0 + l1) * (1.0 + 4.0 * tau2**2) ** 2
    c = 2.0 * tau1**2 + 1.0
    return lam * max(
        256.0 * lam / eps**4,
        64.0 * l1 * c * (2.0 + 2.0 * tau1) ** beta / ((1.0 - tau1) ** beta * eps ** (2.0 - beta)),
        c * (64.0 * (l0 + l1) + 128.0 * l1 * (2.0 * tau2 / (1.0 - tau1)) ** beta) / eps**2,
    )


def clipped_sgd_reference_bound(eps: float, tau2: float, l0: float, l1: float, gap: float) -> float:
    """Published iteration bound for clipped SGD under bounded noise, used
    as the epsilon-order reference:

    Lambda = gap + (5 l0 + 2 l1 tau2) tau2^2 + 9 tau2 l0^2 / l1
    T >= Lambda * max(4 Lambda / eps^4, 128 l1 / eps, (80 l0 + 512 l1 tau2) / eps^2)
    """
    if l1 <= 0:
        raise ConfigError("reference bound requires l1 > 0")
    lam = gap + (5.0 * l0 + 2.0 * l1 * tau2) * tau2**2 + 9.0 * tau2 * l0**2 / l1
    return lam * max(4.0 * lam / eps**4, 128.0 * l1 / eps, (80.0 * l0 + 512.0 * l1 * tau2) / eps**2)


def epsilon_order(bound_fn: Callable[[float], float], eps_grid: Sequence[float]) -> float:
    """Slope of log(bound) against log(1/eps): the epsilon-order of a bound."""
    eps_grid = np.asarray(eps_grid, dtype=np.float64)
    vals = np.array([bound_fn(float(e)) for e in eps_grid])
    slope, _, _ = _linear_fit(np.log(1.0 / eps_grid), np.log(vals))
    return slope


# ---------------------------------------------------------------------------
# technical inequalities (fuzzed properties)
# ---------------------------------------------------------------------------

def verify_technical_inequality(x: float, c: float, delta: float, om: float, om_prime: float) -> bool:
    """Check ``c * x^om <= x^om' + c^(om'/delta)`` on its stated domain
    (x >= 0, c in [0,1], delta > 0, 0 <= om <= om' <= om + delta)."""
    if x < 0 or not 0.0 <= c <= 1.0 or delta <= 0 or not 0.0 <= om <= om_prime:
        raise ConfigError("arguments outside the inequality's domain")
    if om_prime - om > delta:
        raise ConfigError("need om' - om <= delta")
    lhs = c * x**om
    rhs = x**om_prime + c ** (om_prime / delta)
    return lhs <= rhs * (1.0 + _EPS_REL) + 1e-300


def fuzz_technical_inequality(n: int, rng: np.random.Generator) -> tuple[int, float]:
    """Evaluate the inequality on ``n`` random valid tuples; returns the
    violation count and worst slack (rhs - lhs, min over tuples)."""
    violations, worst = 0, math.inf
    for _ in range(n):
        x = 0.0 if rng.uniform() < 0.05 else float(np.exp(rng.uniform(-8, 8)))
        c = float(rng.uniform(0.0, 1.0))
        delta = float(np.exp(rng.uniform(math.log(1e-3), math.log(10.0))))
        om_prime = float(rng.uniform(0.0, 5.0))
        om = float(rng.uniform(max(0.0, om_prime - delta), om_prime))
        lhs = c * x**om
        rhs = x**om_prime + c ** (om_prime / delta)
        worst = min(worst, rhs - lhs)
        if lhs > rhs * (1.0 + _EPS_REL) + 1e-300:
            violations += 1
    return violations, worst


def term1_bound_holds(
    gamma: float,
    tau2: float,
    l0: float,
    l1: float,
    alpha: float,
    beta: float,
    grad_norm: float,
    h: float,
) -> tuple[bool, float]:
    """Check the curvature-noise bound used by the stochastic analysis:

    gamma^2 (l0 + l1 |g|^a) 4 tau2^2 / (2 h^(2 beta))
        <= gamma^2 (l0+l1)(1+4 tau2^2)^2 / 2 + gamma |g|^2 / (4 h^beta)
    """
    lhs = 0.5 * gamma**2 * (l0 + l1 * grad_norm**alpha) * 4.0 * tau2**2 / h ** (2.0 * beta)
    rhs = 0.5 * gamma**2 * (l0 + l1) * (1.0 + 4.0 * tau2**2) ** 2 + gamma * grad_norm**2 / (
        4.0 * h**beta
    )
    return lhs <= rhs * (1.0 + _EPS_REL), rhs - lhs


def fuzz_term1_bound(n: int, rng: np.random.Generator) -> tuple[int, float]:
    """Sample ``n`` parameter tuples satisfying the step-size preconditions
    of the stochastic analysis (normalizer built from the closed-form
    (A, delta, Gamma); gradient norm consistent with the noise bound) and
    count violations of :func:`term1_bound_holds`."""
    violations, worst = 0, math.inf
    for _ in range(n):
        tau1 = float(rng.uniform(0.0, 0.95))
        tau2 = float(np.exp(rng.uniform(math.log(1e-3), math.log(10.0))))
        l0 = float(np.exp(rng.uniform(math.log(1e-2), math.log(1e2))))
        l1 = float(np.exp(rng.uniform(math.log(1e-2), math.log(1e2))))
        alpha = float(rng.uniform(0.0, 1.0))
        beta = float(rng.uniform(max(alpha, 0.05), 1.0))
        c = 2.0 * tau1**2 + 1.0
        gamma_max = min(
            1.0 / (4.0 * l0 * c),
            1.0 / (4.0 * l1 * c),
            1.0 / (8.0 * l1 * c * (2.0 * tau2 / (1.0 - tau1)) ** beta),
        )
        gamma = float(rng.uniform(0.0, 1.0)) * gamma_max
        if gamma <= 0.0:
            continue
        a_scale = 1.0 / (1.0 - tau1)
        delta = tau2 / (1.0 - tau1)
        gamma_cap = (4.0 * l1 * gamma * c) ** (1.0 / beta)
        gprime_norm = float(np.exp(rng.uniform(math.log(1e-6), math.log(1e3))))
        # the full gradient norm never exceeds A |g'| + delta
        grad_norm = float(rng.uniform(0.0, 1.0)) * (a_scale * gprime_norm + delta)
        h = iansgd_normalizer(gprime_norm, a_scale, delta, gamma_cap)
        ok, slack = term1_bound_holds(gamma, tau2, l0, l1, alpha, beta, grad_norm, h)
        worst = min(worst, slack)
        if not ok:
            violations += 1
    return violations, worst


# ---------------------------------------------------------------------------
# descent-recursion verifiers
# ---------------------------------------------------------------------------

def verify_angd_pl_recursion(
    p: float,
    d: int,
    beta: float,
    eps: float,
    w0: Array,
    max_iters: int = 2000,
    stop_gap: Optional[float] = None,
    rel_tol: float = 1e-9,
) -> tuple[float, float, Array]:
    """Run the normalized deterministic method on a power function and check
    the per-step descent recursion

    gap(t+1) <= gap(t) - gamma (2 mu)^theta gap(t)^theta / 2
                + gamma (2 mu eps)^theta / 4,   theta = (2-beta)/rho,

    at every iteration. Returns (fraction satisfied, worst relative margin,
    gap trajectory)."""
    fn = PowerFunction(p=p, d=d)
    geom = fn.geometry()
    gamma = angd_theoretical_stepsize(eps, geom.mu, geom.rho, beta, geom.l0, geom.l1)
    theta = (2.0 - beta) / geom.rho
    two_mu = 2.0 * geom.mu

    w = np.asarray(w0, dtype=np.float64).copy()
    gaps = []
    ok = 0
    total = 0
    worst = math.inf
    for _ in range(max_iters):
        f, g = power_value_and_grad(fn, w)
        gaps.append(f)
        if stop_gap is not None and f <= stop_gap:
            break
        w_next = angd_step(w, g, gamma, beta)
        f_next, _ = power_value_and_grad(fn, w_next)
        rhs = f - 0.5 * gamma * two_mu**theta * f**theta + 0.25 * gamma * (two_mu * eps) ** theta
        scale = max(1.0, abs(f))
        margin = (rhs - f_next) / scale
        worst = min(worst, margin)
        total += 1
        if margin >= -rel_tol:
            ok += 1
        w = w_next
    gaps.append(power_value_and_grad(fn, w)[0])
    return (ok / total if total else 1.0), worst, np.asarray(gaps)


def verify_iansgd_pl_recursion(
    p: float,
    d: int,
    beta: float,
    eps: float,
    tau1: float,
    tau2: float,
    n_runs: int = 100,
    n_iters: int = 200,
    rng: Optional[np.random.Generator] = None,
    gamma_scale: float = 1.0,
    w0_norm: float = 1.0,
    rel_tol: float = 1e-9,
) -> tuple[float, float]:
    """Monte-Carlo check of the expected descent recursion of the
    independently-normalized stochastic method under gradient domination:

    E[gap(t+1)] <= E[gap(t)] - k (2 mu E-moment)^... /4 + k (2 mu eps)^theta / 8,
    k = gamma^(3/2) (l1 (2 tau1^2+1))^(1/2),  theta = (2-beta)/rho,

    with expectations approximated by averaging ``n_runs`` independent runs
    at each iteration index. ``gamma_scale`` deliberately inflates the step
    size to probe where the recursion starts failing. Returns (fraction of
    indices satisfied, worst relative margin)."""
    if rng is None:
        rng = np.random.default_rng(0)
    fn = PowerFunction(p=p, d=d)
    geom = fn.geometry()
    gamma = gamma_scale * iansgd_pl_stepsize(
        eps, geom.mu, geom.rho, tau1, tau2, geom.l0, geom.l1, beta
    )
    c = 2.0 * tau1**2 + 1.0
    a_scale = 1.0 / (1.0 - tau1)
    delta = tau2 / (1.0 - tau1)
    gamma_cap = (4.0 * geom.l1 * gamma * c) ** (1.0 / beta)
    theta = (2.0 - beta) / geom.rho
    kappa = gamma**1.5 * (geom.l1 * c) ** 0.5
    two_mu = 2.0 * geom.mu

    shrink = 0.99
    noise_scale = lambda gn: shrink * (tau1 * gn + tau2)  # noqa: E731

    w = np.zeros((n_runs, d))
    w[:, 0] = w0_norm
    ok, total = 0, 0
    worst = math.inf
    for _ in range(n_iters):
        u = np.linalg.norm(w, axis=1)
        gaps = u**p
        grads = fn.p * u[:, None] ** (fn.p - 2.0) * w
        gn = np.linalg.norm(grads, axis=1)
        bound = noise_scale(gn)

        def draw():
            r = rng.uniform(size=(n_runs, 1))
            z = rng.standard_normal(size=(n_runs, d))
            z /= np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-300)
            return grads + r * bound[:, None] * z

        g = draw()
        g_prime = draw()
        h = np.maximum(1.0, gamma_cap * (a_scale * np.linalg.norm(g_prime, axis=1) + delta))
        w_next = w - gamma * g / h[:, None] ** beta
        gaps_next = np.linalg.norm(w_next, axis=1) ** p

        lhs = float(np.mean(gaps_next))
        rhs = float(
            np.mean(gaps - kappa * (two_mu * gaps) ** theta / 4.0)
            + kappa * (two_mu * eps) ** theta / 8.0
        )
        scale = max(1.0, abs(float(np.mean(gaps))))
        margin = (rhs - lhs) / scale
        worst = min(worst, margin)
        total += 1
        if margin >= -rel_tol:
            ok += 1
        w = w_next
    return ok / total, worst
