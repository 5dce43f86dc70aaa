"""Configured, seeded experiment execution: single runs, parameter sweeps,
sample-complexity accounting, dataset ingestion, and persistent CSV output.

Config files are flat ``key=value`` text (``#`` comments allowed) with
dotted section prefixes, e.g. ``optimizer.iansgd.gamma=0.25``. Unknown keys
are errors, not warnings.
"""
from __future__ import annotations

import csv
import hashlib
import io
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    Array,
    ConfigError,
    IterationMetrics,
    NoiseSpec,
    RunRecord,
    seeded_rng,
)
from .optimizers import OptimizerConfig, OptimizerRunner
from .problems import (
    DroData,
    DroProblem,
    NoisyOracle,
    PhaseRetrievalProblem,
    PowerFunction,
    PowerProblem,
    Problem,
    generate_dro_synthetic,
    generate_phase_retrieval,
)

TRAJECTORY_HEADER = "t,objective,full_grad_norm,stoch_grad_norm,normalizer_h,cumulative_samples"
SUMMARY_HEADER = "method,seed,axis,value,final_objective,samples_to_target,diverged"

DIVERGENCE_THRESHOLD = 1e12


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class StopRule:
    max_iters: Optional[int] = None
    sample_budget: Optional[int] = None
    grad_tol: Optional[float] = None

    def __post_init__(self):
        if self.max_iters is None and self.sample_budget is None and self.grad_tol is None:
            raise ConfigError("at least one stop rule is required")


@dataclass
class ExperimentConfig:
    problem: dict
    optimizers: list[OptimizerConfig]
    seeds: list[int]
    stop: StopRule
    full_grad_every: int = 10

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.optimizers:
            raise ConfigError("at least one optimizer is required")
        if self.full_grad_every < 1:
            raise ConfigError("metric cadence must be >= 1")


_PROBLEM_KEYS = {
    "phase_retrieval": {
        "id", "d", "m", "seed", "wstar_mean", "wstar_var", "a_mean", "a_var",
        "noise_mean", "noise_var", "init_mean", "init_var",
    },
    "dro": {
        "id", "n", "p", "seed", "lambda", "l1_reg", "noise_std", "csv_path",
    },
    "power": {"id", "p", "d", "init_norm", "tau1", "tau2", "shrink", "seed"},
}

_OPT_KEYS = {
    "method", "gamma", "beta", "clip", "delta", "gamma_cap", "a_scale",
    "momentum", "batch_b", "batch_bprime", "spider_epoch", "max_iters",
}

_INT_OPT_KEYS = {"batch_b", "batch_bprime", "spider_epoch", "max_iters"}


def parse_config_text(text: str) -> tuple[ExperimentConfig, dict]:
    """Parse the flat key=value config format.

    Returns the config plus the raw key->string map (used by sweeps to
    re-parse with one key overridden). Raises :class:`ConfigError` with the
    offending line number or key name.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return config_from_mapping(raw), raw


def config_from_mapping(raw: dict[str, str]) -> ExperimentConfig:
    problem: dict = {}
    optimizers: dict[str, dict] = {}
    seeds: list[int] = []
    stop_kwargs: dict = {}
    full_grad_every = 10

    for key, value in raw.items():
        parts = key.split(".")
        if parts[0] == "problem":
            if len(parts) != 2:
                raise ConfigError(f"unknown key {key!r}")
            problem[parts[1]] = value
        elif parts[0] == "optimizer":
            if len(parts) != 3:
                raise ConfigError(f"unknown key {key!r}")
            _, name, fld = parts
            if fld not in _OPT_KEYS:
                raise ConfigError(f"unknown optimizer field {fld!r} in key {key!r}")
            optimizers.setdefault(name, {})[fld] = value
        elif key == "seeds":
            try:
                seeds = [int(s) for s in value.split(",") if s.strip()]
            except ValueError as exc:
                raise ConfigError(f"invalid seeds list {value!r}") from exc
        elif key == "stop.max_iters":
            stop_kwargs["max_iters"] = int(value)
        elif key == "stop.sample_budget":
            stop_kwargs["sample_budget"] = int(value)
        elif key == "stop.grad_tol":
            stop_kwargs["grad_tol"] = float(value)
        elif key == "metrics.full_grad_every":
            full_grad_every = int(value)
        else:
            raise ConfigError(f"unknown key {key!r}")

    pid = problem.get("id")
    if pid not in _PROBLEM_KEYS:
        raise ConfigError(f"problem.id must be one of {sorted(_PROBLEM_KEYS)}, got {pid!r}")
    unknown = set(problem) - _PROBLEM_KEYS[pid]
    if unknown:
        raise ConfigError(f"unknown problem keys for {pid!r}: {sorted(unknown)}")

    opt_cfgs = []
    for name, fields in sorted(optimizers.items()):
        method = fields.pop("method", name)
        kwargs = {}
        for fld, value in fields.items():
            kwargs[fld] = int(value) if fld in _INT_OPT_KEYS else float(value)
        try:
            opt_cfgs.append(OptimizerConfig(method=method, name=name, **kwargs))
        except TypeError as exc:
            raise ConfigError(f"optimizer {name!r}: {exc}") from exc

    return ExperimentConfig(
        problem=problem,
        optimizers=opt_cfgs,
        seeds=seeds,
        stop=StopRule(**stop_kwargs),
        full_grad_every=full_grad_every,
    )


def load_config(path) -> tuple[ExperimentConfig, dict, str]:
    text = Path(path).read_text()
    cfg, raw = parse_config_text(text)
    return cfg, raw, text


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# problem construction + initial points
# ---------------------------------------------------------------------------

def build_problem(problem_cfg: dict) -> Problem:
    pid = problem_cfg["id"]
    pseed = int(problem_cfg.get("seed", 2024))
    rng = seeded_rng([pseed, 0xDA7A])
    if pid == "phase_retrieval":
        data, _ = generate_phase_retrieval(
            d=int(problem_cfg.get("d", 100)),
            m=int(problem_cfg.get("m", 3000)),
            rng=rng,
            w_star_dist=(float(problem_cfg.get("wstar_mean", 0.0)), float(problem_cfg.get("wstar_var", 0.5))),
            a_dist=(float(problem_cfg.get("a_mean", 0.0)), float(problem_cfg.get("a_var", 0.5))),
            noise_dist=(float(problem_cfg.get("noise_mean", 0.0)), float(problem_cfg.get("noise_var", 16.0))),
        )
        return PhaseRetrievalProblem(data)
    if pid == "dro":
        if "csv_path" in problem_cfg:
            data, _ = load_csv_dataset(
                problem_cfg["csv_path"],
                lam=float(problem_cfg.get("lambda", 0.01)),
                l1_reg_weight=float(problem_cfg.get("l1_reg", 0.1)),
            )
        else:
            data = generate_dro_synthetic(
                n=int(problem_cfg.get("n", 2313)),
                p=int(problem_cfg.get("p", 34)),
                rng=rng,
                lam=float(problem_cfg.get("lambda", 0.01)),
                l1_reg_weight=float(problem_cfg.get("l1_reg", 0.1)),
                noise_std=float(problem_cfg.get("noise_std", 0.5)),
            )
        return DroProblem(data)
    if pid == "power":
        base = PowerProblem(PowerFunction(p=float(problem_cfg.get("p", 4.0)), d=int(problem_cfg.get("d", 10))))
        if "tau1" in problem_cfg or "tau2" in problem_cfg:
            noise = NoiseSpec(
                tau1=float(problem_cfg.get("tau1", 0.0)),
                tau2=float(problem_cfg.get("tau2", 1.0)),
            )
            return NoisyOracle(base, noise, shrink=float(problem_cfg.get("shrink", 0.99)))
        return base
    raise ConfigError(f"unknown problem id {pid!r}")


def initial_point(problem_cfg: dict, problem: Problem, seed: int) -> Array:
    pid = problem_cfg["id"]
    rng = seeded_rng([seed, 0x1717])
    if pid == "phase_retrieval":
        mean = float(problem_cfg.get("init_mean", 1.0))
        var = float(problem_cfg.get("init_var", 6.0))
        return rng.normal(mean, np.sqrt(var), size=problem.dim)
    if pid == "dro":
        return np.zeros(problem.dim)
    if pid == "power":
        w = rng.standard_normal(problem.dim)
        w *= float(problem_cfg.get("init_norm", 1.0)) / max(float(np.linalg.norm(w)), 1e-300)
        return w
    raise ConfigError(f"unknown problem id {pid!r}")


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

def _method_stream_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")


def run_single(
    cfg: ExperimentConfig, opt_cfg: OptimizerConfig, seed: int, problem: Optional[Problem] = None
) -> RunRecord:
    """Execute one (optimizer, seed) run. The RNG stream depends only on the
    seed and the optimizer name, so a run reproduces identically whether
    executed alone, in a batch, or inside a sweep cell."""
    if problem is None:
        problem = build_problem(cfg.problem)

    alpha = problem.alpha
    if alpha is not None and opt_cfg.beta > 0 and not (alpha <= opt_cfg.beta <= 1.0):
        warnings.warn(
            f"{opt_cfg.name}: beta={opt_cfg.beta} outside [{alpha}, 1] for this problem; "
            "the convergence theory does not cover this choice",
            stacklevel=2,
        )

    rng = seeded_rng([seed, _method_stream_key(opt_cfg.name)])
    runner = OptimizerRunner(opt_cfg, problem, rng)
    w = initial_point(cfg.problem, problem, seed)

    record = RunRecord(
        problem_id=problem.problem_id, seed=seed, config=opt_cfg.snapshot()
    )
    t0 = time.perf_counter()
    samples = 0
    stoch_norm: Optional[float] = None
    norm_h: Optional[float] = None
    clip_binds = 0

    max_iters = cfg.stop.max_iters
    if opt_cfg.max_iters is not None:
        max_iters = opt_cfg.max_iters if max_iters is None else min(max_iters, opt_cfg.max_iters)

    def full_metrics(t: int) -> Optional[IterationMetrics]:
        value, grad = problem.value_and_grad(w)
        gn = float(np.linalg.norm(grad))
        if not (np.isfinite(value) and np.isfinite(gn)) or max(abs(value), gn) > DIVERGENCE_THRESHOLD:
            return None
        return IterationMetrics(
            t=t,
            objective=float(value),
            full_grad_norm=gn,
            stoch_grad_norm=stoch_norm,
            normalizer_h=norm_h,
            cumulative_samples=samples,
        )

    stop_reason = ""
    t = 0
    metrics = full_metrics(0)
    if metrics is None:
        raise ConfigError("initial point already violates the divergence threshold")
    record.iterations.append(metrics)

    while True:
        # stop-rule precedence: sample budget, iteration cap, gradient target
        if cfg.stop.sample_budget is not None and samples >= cfg.stop.sample_budget:
            stop_reason = "sample_budget"
            break
        if max_iters is not None and t >= max_iters:
            stop_reason = "max_iters"
            break
        if cfg.stop.grad_tol is not None and record.iterations[-1].t == t and \
                record.iterations[-1].full_grad_norm <= cfg.stop.grad_tol:
            stop_reason = "grad_tol"
            break

        out = runner.step(w)
        t += 1
        samples += out.samples
        stoch_norm, norm_h = out.stoch_grad_norm, out.normalizer_h
        clip_binds += int(out.clip_bound)
        if not np.all(np.isfinite(out.w)) or (
            stoch_norm is not None and not np.isfinite(stoch_norm)
        ):
            record.diverged = True
            stop_reason = "diverged"
            break
        w = out.w

        if t % cfg.full_grad_every == 0:
            metrics = full_metrics(t)
            if metrics is None:
                record.diverged = True
                stop_reason = "diverged"
                break
            record.iterations.append(metrics)

    if not record.diverged and record.iterations[-1].t != t:
        metrics = full_metrics(t)
        if metrics is None:
            record.diverged = True
            stop_reason = "diverged"
        else:
            record.iterations.append(metrics)

    record.stop_reason = stop_reason
    record.meta["wall_time_s"] = time.perf_counter() - t0
    record.meta["clip_binds"] = clip_binds
    record.validate()
    return record


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """One RunRecord per (optimizer, seed); deterministic given the config."""
    problem = build_problem(cfg.problem)
    records = []
    for opt_cfg in cfg.optimizers:
        for seed in cfg.seeds:
            records.append(run_single(cfg, opt_cfg, seed, problem))
    return records


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _sweep_cell(args) -> list[dict]:
    raw, axis, value, seed = args
    raw = dict(raw)
    raw[axis] = value
    cfg = config_from_mapping(raw)
    cfg = ExperimentConfig(
        problem=cfg.problem,
        optimizers=cfg.optimizers,
        seeds=[seed],
        stop=cfg.stop,
        full_grad_every=cfg.full_grad_every,
    )
    rows = []
    for record in run_experiment(cfg):
        rows.append(summarize_record(record, axis, value))
    return rows


def summarize_record(record: RunRecord, axis: str, value: str) -> dict:
    objectives = [it.objective for it in record.iterations]
    samples = [it.cumulative_samples for it in record.iterations]
    initial = objectives[0]
    # samples needed to reach each decade of objective decrease
    decades = []
    level = 1
    best = initial
    for obj, s in zip(objectives, samples):
        best = min(best, obj)
        while initial > 0 and best <= initial * 10.0 ** (-level):
            decades.append(s)
            level += 1
    return {
        "method": record.method,
        "seed": record.seed,
        "axis": axis,
        "value": value,
        "final_objective": objectives[-1],
        "samples_to_target": "|".join(str(s) for s in decades),
        "diverged": record.diverged,
    }


def run_sweep(
    raw_config: dict,
    axis: str,
    values: Sequence[str],
    jobs: int = 1,
) -> list[dict]:
    """Cross-product of ``values`` with the config's seeds along one config
    key. Cells run independently (optionally in parallel); rows come back in
    deterministic (value, seed) order regardless of worker count."""
    if not values:
        raise ConfigError("values must be nonempty")
    base_cfg = config_from_mapping(dict(raw_config))
    valid_axes = sorted(raw_config)
    if axis not in raw_config:
        # the axis may introduce a new optimizer field not present in the base
        parts = axis.split(".")
        ok = (
            len(parts) == 3
            and parts[0] == "optimizer"
            and parts[2] in _OPT_KEYS
            and any(o.name == parts[1] for o in base_cfg.optimizers)
        )
        if not ok:
            raise ConfigError(f"unknown sweep axis {axis!r}; valid axes: {valid_axes}")
    cells = [(dict(raw_config), axis, str(v), seed) for v in values for seed in base_cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_sweep_cell, cells))
    else:
        out = [_sweep_cell(c) for c in cells]
    return [row for rows in out for row in rows]


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def trajectory_csv_text(record: RunRecord) -> str:
    buf = io.StringIO()
    buf.write(TRAJECTORY_HEADER + "\n")
    for it in record.iterations:
        buf.write(
            ",".join(
                [
                    str(it.t),
                    _fmt(it.objective),
                    _fmt(it.full_grad_norm),
                    _fmt(it.stoch_grad_norm),
                    _fmt(it.normalizer_h),
                    str(it.cumulative_samples),
                ]
            )
            + "\n"
        )
    return buf.getvalue()


def write_trajectory_csv(record: RunRecord, path) -> None:
    Path(path).write_text(trajectory_csv_text(record))


def read_trajectory_csv(path) -> list[IterationMetrics]:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != TRAJECTORY_HEADER:
        raise ConfigError(
            f"{path}: expected trajectory header {TRAJECTORY_HEADER!r}, got {lines[0] if lines else ''!r}"
        )
    out = []
    for line in lines[1:]:
        if not line:
            continue
        t, obj, fg, sg, h, cum = line.split(",")
        out.append(
            IterationMetrics(
                t=int(t),
                objective=float(obj),
                full_grad_norm=float(fg),
                stoch_grad_norm=float(sg) if sg else None,
                normalizer_h=float(h) if h else None,
                cumulative_samples=int(cum),
            )
        )
    return out


def summary_csv_text(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    buf.write(SUMMARY_HEADER + "\n")
    for row in rows:
        buf.write(
            ",".join(
                [
                    str(row["method"]),
                    str(row["seed"]),
                    str(row["axis"]),
                    str(row["value"]),
                    _fmt(row["final_objective"]),
                    str(row["samples_to_target"]),
                    "true" if row["diverged"] else "false",
                ]
            )
            + "\n"
        )
    return buf.getvalue()


def write_summary_csv(rows: Sequence[dict], path) -> None:
    Path(path).write_text(summary_csv_text(rows))


# ---------------------------------------------------------------------------
# CSV dataset ingestion (DRO)
# ---------------------------------------------------------------------------

def load_csv_dataset(path, lam: float = 0.01, l1_reg_weight: float = 0.1) -> tuple[DroData, dict]:
    """Load a regression dataset: header row, one target column named "y",
    all other columns numeric features.

    Features are standardized to zero mean and unit variance; constant
    columns are centered but left unscaled (with a warning). Returns the
    dataset and the standardization constants.
    """
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"dataset file not found: {path}")
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "y" not in header:
            raise ConfigError(f"{path}: missing target column 'y'")
        y_col = header.index("y")
        feat_names = [h for i, h in enumerate(header) if i != y_col]
        feats, targets = [], []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}: row {rowno} has {len(row)} cells, expected {len(header)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ConfigError(f"{path}: non-numeric cell in row {rowno}") from None
            targets.append(vals[y_col])
            feats.append([v for i, v in enumerate(vals) if i != y_col])
    if not feats:
        raise ConfigError(f"{path}: no data rows")
    x = np.asarray(feats, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    scale = stds.copy()
    constant = stds == 0.0
    if np.any(constant):
        warnings.warn(
            f"{path}: constant feature column(s) {[feat_names[i] for i in np.nonzero(constant)[0]]} "
            "centered but not scaled",
            stacklevel=2,
        )
        scale[constant] = 1.0
    x = (x - means) / scale
    data = DroData(features=x, targets=y, lam=lam, l1_reg_weight=l1_reg_weight)
    meta = {
        "feature_names": feat_names,
        "means": means.tolist(),
        "stds": stds.tolist(),
    }
    return data, meta
