"""Experiment configuration, Monte-Carlo studies, and result emission.

A study is described by one YAML file (dialect documented in the README,
versioned by a top-level ``schema_version: 1`` key) with five sections:
problem, network, signals, run, output. ``validate_config`` turns the raw
mapping into a frozen ExperimentConfig, collecting one error per violated
field; ``run_study`` executes the Monte-Carlo loop, computes a centralized
reference per run, and writes per-run CSVs, an aggregate CSV, a resolved
config echo, and gnuplot-ready error curves.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import yaml

from . import network as net
from .engine import RunResult, dasf_run, normalized_error
from .sfo import (
    MmseProblem,
    QcqpProblem,
    ScqpProblem,
    SfoProblem,
    SolverError,
    TroProblem,
    solve_centralized,
)
from .signals import DriftSpec, LambdaSchedule, SignalModel, sample_adaptive, sample_stationary

__all__ = [
    "ConfigError",
    "DriftConfig",
    "ExperimentConfig",
    "load_config",
    "validate_config",
    "StudyResult",
    "run_study",
    "run_tracking",
    "write_study_outputs",
    "tracking_reference",
]

logger = logging.getLogger(__name__)

PROBLEM_KINDS = ("mmse", "qcqp", "tro", "scqp")
TOPOLOGY_KINDS = ("fully_connected", "erdos_renyi", "random_tree", "path")
SAMPLE_MODES = ("batch", "adaptive")

DEFAULT_SAMPLES = 10_000
DEFAULT_RUNS = 100


class ConfigError(Exception):
    """Aggregated validation failures, one entry per offending field path."""

    def __init__(self, errors):
        self.errors = tuple(errors)
        super().__init__(
            "invalid experiment config:\n" + "\n".join(f"  - {e}" for e in self.errors)
        )


@dataclass(frozen=True)
class DriftConfig:
    """Tracking drift: schedule breakpoints in iteration units, drift scale."""

    delta_std: float
    schedule: tuple[tuple[float, float], ...]   # (iteration, weight) pairs


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved study description.

    filter_widths usually holds one width; several run the same study once
    per width (a sweep), each into its own output subdirectory.
    sources/interferers of None track the filter width.
    """

    schema_version: int
    problem_kind: str
    filter_widths: tuple[int, ...]
    term_seed: int
    radius_scale: float
    topology: str
    nodes: int
    channels: tuple[int, ...]
    edge_prob: float | None
    graph_seed: int | None
    sources: int | None
    interferers: int | None
    source_var: float
    noise_var: float
    mix_scale: float
    drift: DriftConfig | None
    runs: int
    iterations: int
    samples: int
    sample_mode: str
    seed: int
    workers: int
    out_dir: str
    applied_defaults: tuple[str, ...] = ()

    @property
    def n_filters(self) -> int:
        if len(self.filter_widths) != 1:
            raise ValueError("config sweeps several filter widths, expand it first")
        return self.filter_widths[0]

    @property
    def total_channels(self) -> int:
        return sum(self.channels)

    def with_overrides(self, seed=None, runs=None, iterations=None,
                       out_dir=None, sample_mode=None) -> "ExperimentConfig":
        """CLI-flag overrides; None keeps the configured value."""
        updates = {}
        if seed is not None:
            updates["seed"] = int(seed)
        if runs is not None:
            updates["runs"] = int(runs)
        if iterations is not None:
            updates["iterations"] = int(iterations)
        if out_dir is not None:
            updates["out_dir"] = str(out_dir)
        if sample_mode is not None:
            updates["sample_mode"] = str(sample_mode)
        cfg = dataclasses.replace(self, **updates)
        _check_semantics(cfg)
        return cfg

    def expand_filter_sweep(self) -> tuple["ExperimentConfig", ...]:
        return tuple(
            dataclasses.replace(self, filter_widths=(q,)) for q in self.filter_widths
        )

    def resolved_dict(self) -> dict:
        """Plain mapping echo of every resolved field, for study.meta."""
        out = dataclasses.asdict(self)
        out["filter_widths"] = list(self.filter_widths)
        out["channels"] = list(self.channels)
        out["applied_defaults"] = list(self.applied_defaults)
        if self.drift is not None:
            out["drift"] = {
                "delta_std": self.drift.delta_std,
                "schedule": [list(p) for p in self.drift.schedule],
            }
        return out


# --------------------------------------------------------------------------
# validation


def load_config(path) -> dict:
    """Read one YAML config file into a raw mapping."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"config: not valid YAML: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a mapping"])
    return raw


class _Section:
    """One config section with path-prefixed error collection."""

    def __init__(self, name: str, data, errors: list[str], defaults: list[str]):
        self.name = name
        self.data = data if isinstance(data, dict) else {}
        self.errors = errors
        self.defaults = defaults
        self.seen: set[str] = set()
        if data is not None and not isinstance(data, dict):
            errors.append(f"{name}: must be a mapping")

    def take(self, key, default=None, required=False, kind=None, check=None,
             note_default=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.errors.append(f"{self.name}.{key}: required, no default")
                return None
            if note_default:
                self.defaults.append(f"{self.name}.{key} = {default!r}")
            return default
        value = self.data[key]
        if kind is not None:
            value = _coerce(value, kind, f"{self.name}.{key}", self.errors)
            if value is None:
                return None
        if check is not None:
            message = check(value)
            if message:
                self.errors.append(f"{self.name}.{key}: {message}")
                return None
        return value

    def reject_unknown(self):
        for key in self.data:
            if key not in self.seen:
                self.errors.append(f"{self.name}.{key}: unknown key")


def _coerce(value, kind, path, errors):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
            return None
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
            return None
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
            return None
        return value
    raise AssertionError(kind)


def _positive(v):
    return None if v > 0 else f"must be positive, got {v}"


def validate_config(raw: dict) -> ExperimentConfig:
    """Check every field, apply and log defaults, return the frozen config.

    All violations are collected and raised together as one ConfigError with
    ``errors`` naming each field path.
    """
    errors: list[str] = []
    defaults: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a mapping"])

    version = raw.get("schema_version")
    if version is None:
        errors.append("schema_version: required, no default")
    elif version != 1:
        errors.append(f"schema_version: only version 1 is supported, got {version!r}")

    known = {"schema_version", "problem", "network", "signals", "run", "output"}
    for key in raw:
        if key not in known:
            errors.append(f"{key}: unknown section")

    prob = _Section("problem", raw.get("problem"), errors, defaults)
    if "problem" not in raw:
        errors.append("problem: required section")
    kind = prob.take("kind", required=True, kind=str,
                     check=lambda v: None if v in PROBLEM_KINDS
                     else f"unknown kind {v!r}, expected one of {', '.join(PROBLEM_KINDS)}")
    widths = _take_filter_widths(prob, errors)
    term_seed = prob.take("term_seed", default=0, kind=int)
    radius_scale = prob.take(
        "radius_scale", default=1.5, kind=float,
        check=lambda v: None if v >= 1.0
        else "must be at least 1 so the response plane meets the ball")
    prob.reject_unknown()

    netsec = _Section("network", raw.get("network"), errors, defaults)
    if "network" not in raw:
        errors.append("network: required section")
    topology = netsec.take("kind", required=True, kind=str,
                           check=lambda v: None if v in TOPOLOGY_KINDS
                           else f"unknown kind {v!r}, expected one of {', '.join(TOPOLOGY_KINDS)}")
    nodes = netsec.take("nodes", required=True, kind=int, check=_positive)
    channels = _take_channels(netsec, nodes, errors)
    total = netsec.take("total_channels", default=None, kind=int)
    if total is not None and channels is not None and total != sum(channels):
        errors.append(
            f"network.total_channels: {total} does not match the channel sum {sum(channels)}")
    edge_prob = netsec.take(
        "edge_prob", default=None, kind=float,
        check=lambda v: None if 0.0 < v <= 1.0 else f"must be in (0, 1], got {v}")
    if topology == "erdos_renyi" and edge_prob is None:
        errors.append("network.edge_prob: required for erdos_renyi")
    if topology not in (None, "erdos_renyi") and edge_prob is not None:
        errors.append(f"network.edge_prob: not meaningful for kind {topology!r}")
    graph_seed = netsec.take("graph_seed", default=None, kind=int)
    netsec.reject_unknown()

    sig = _Section("signals", raw.get("signals"), errors, defaults)
    sources = sig.take("sources", default=None, kind=int, check=_positive)
    interferers = sig.take("interferers", default=None, kind=int, check=_positive)
    source_var = sig.take("source_var", default=0.5, kind=float, check=_positive,
                          note_default=True)
    noise_var = sig.take("noise_var", default=0.1, kind=float, check=_positive,
                         note_default=True)
    mix_scale = sig.take("mix_scale", default=0.5, kind=float, check=_positive,
                         note_default=True)
    drift = _take_drift(sig.take("drift", default=None), errors)
    sig.reject_unknown()

    run = _Section("run", raw.get("run"), errors, defaults)
    if "run" not in raw:
        errors.append("run: required section")
    runs = run.take("monte_carlo_runs", default=DEFAULT_RUNS, kind=int,
                    check=_positive, note_default=True)
    iterations = run.take("iterations", required=True, kind=int,
                          check=lambda v: None if v >= 0 else "must not be negative")
    samples = run.take("samples", default=DEFAULT_SAMPLES, kind=int, check=_positive,
                       note_default=True)
    sample_mode = run.take("mode", default="batch", kind=str, note_default=True,
                           check=lambda v: None if v in SAMPLE_MODES
                           else f"expected one of {', '.join(SAMPLE_MODES)}, got {v!r}")
    seed = run.take("seed", default=0, kind=int, note_default=True)
    workers = run.take("workers", default=1, kind=int, check=_positive)
    run.reject_unknown()

    out = _Section("output", raw.get("output"), errors, defaults)
    out_dir = out.take("dir", default="results", kind=str, note_default=True)
    out.reject_unknown()

    if errors:
        raise ConfigError(errors)

    config = ExperimentConfig(
        schema_version=1,
        problem_kind=kind,
        filter_widths=widths,
        term_seed=term_seed,
        radius_scale=radius_scale,
        topology=topology,
        nodes=nodes,
        channels=channels,
        edge_prob=edge_prob if topology == "erdos_renyi" else None,
        graph_seed=graph_seed,
        sources=sources,
        interferers=interferers,
        source_var=source_var,
        noise_var=noise_var,
        mix_scale=mix_scale,
        drift=drift,
        runs=runs,
        iterations=iterations,
        samples=samples,
        sample_mode=sample_mode,
        seed=seed,
        workers=workers,
        out_dir=out_dir,
        applied_defaults=tuple(defaults),
    )
    _check_semantics(config)
    for line in defaults:
        logger.info("config default applied: %s", line)
    return config


def _take_filter_widths(prob: _Section, errors: list[str]) -> tuple[int, ...]:
    prob.seen.add("n_filters")
    raw = prob.data.get("n_filters")
    if raw is None:
        errors.append("problem.n_filters: required, no default")
        return (1,)
    values = raw if isinstance(raw, list) else [raw]
    widths: list[int] = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            errors.append(f"problem.n_filters: widths must be positive integers, got {v!r}")
            return (1,)
        widths.append(v)
    if not widths:
        errors.append("problem.n_filters: empty sweep")
        return (1,)
    if len(set(widths)) != len(widths):
        errors.append("problem.n_filters: sweep values must be distinct")
    return tuple(widths)


def _take_channels(netsec: _Section, nodes, errors: list[str]) -> tuple[int, ...]:
    netsec.seen.add("channels")
    raw = netsec.data.get("channels")
    if raw is None:
        errors.append("network.channels: required, no default")
        return (1,)
    if isinstance(raw, int) and not isinstance(raw, bool):
        if raw < 1:
            errors.append(f"network.channels: must be positive, got {raw}")
            return (1,)
        return tuple([raw] * (nodes or 1))
    if isinstance(raw, list):
        if nodes is not None and len(raw) != nodes:
            errors.append(
                f"network.channels: list length {len(raw)} does not match nodes {nodes}")
            return (1,)
        out = []
        for v in raw:
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                errors.append(f"network.channels: entries must be positive integers, got {v!r}")
                return (1,)
            out.append(v)
        return tuple(out)
    errors.append(f"network.channels: expected an integer or a list, got {raw!r}")
    return (1,)


def _take_drift(raw, errors: list[str]) -> DriftConfig | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        errors.append("signals.drift: must be a mapping")
        return None
    unknown = set(raw) - {"delta_std", "schedule"}
    for key in sorted(unknown):
        errors.append(f"signals.drift.{key}: unknown key")
    delta_std = raw.get("delta_std", 0.5)
    if isinstance(delta_std, bool) or not isinstance(delta_std, (int, float)) or delta_std <= 0:
        errors.append(f"signals.drift.delta_std: must be a positive number, got {delta_std!r}")
        delta_std = 0.5
    schedule = raw.get("schedule")
    if not isinstance(schedule, list) or not schedule:
        errors.append("signals.drift.schedule: required, a non-empty list of [iteration, weight] pairs")
        return None
    points: list[tuple[float, float]] = []
    for item in schedule:
        if (not isinstance(item, list) or len(item) != 2
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in item)):
            errors.append(f"signals.drift.schedule: entries must be [iteration, weight] pairs, got {item!r}")
            return None
        points.append((float(item[0]), float(item[1])))
    times = [p[0] for p in points]
    weights = [p[1] for p in points]
    if any(b < a for a, b in zip(times, times[1:])):
        errors.append("signals.drift.schedule: iteration breakpoints must be non-decreasing")
    if any(w < 0 or w > 1 for w in weights):
        errors.append("signals.drift.schedule: weights must lie in [0, 1]")
    return DriftConfig(delta_std=float(delta_std), schedule=tuple(points))


def _check_semantics(config: ExperimentConfig) -> None:
    """Cross-field rules that need the resolved values."""
    errors: list[str] = []
    if config.problem_kind == "mmse" and config.sources is not None:
        bad = [q for q in config.filter_widths if q != config.sources]
        if bad:
            errors.append(
                f"signals.sources: {config.sources} conflicts with problem.n_filters "
                f"{bad[0]} (the estimation target provides one row per filter)")
    if config.drift is not None:
        if config.problem_kind != "mmse":
            errors.append("signals.drift: tracking drift is only supported with problem.kind mmse")
        if any(q != 1 for q in config.filter_widths):
            errors.append("problem.n_filters: drift tracking uses a single steering vector, width must be 1")
        if config.sample_mode != "adaptive":
            errors.append("run.mode: a drift schedule needs adaptive mode (fresh batch per iteration)")
    if errors:
        raise ConfigError(errors)
    widest = max(config.filter_widths)
    local_dim_bound = max(config.channels) + widest * (config.nodes - 1)
    if config.samples < local_dim_bound:
        warnings.warn(
            f"run.samples = {config.samples} is below the largest possible local "
            f"dimension {local_dim_bound}; covariance estimates may be rank deficient",
            RuntimeWarning,
            stacklevel=2,
        )


# --------------------------------------------------------------------------
# study execution


@dataclass
class StudyResult:
    """Aggregated outcome of one study (one problem, one filter width).

    epsilon rows are completed runs; column j is the error of the filter
    after j updates, so column 0 is the initial point. Aggregates are taken
    across completed runs only.
    """

    config: ExperimentConfig
    n_filters: int
    run_results: list[RunResult]
    run_indices: tuple[int, ...]
    failed: tuple[tuple[int, str], ...]
    epsilon: np.ndarray
    epsilon_median: np.ndarray
    epsilon_mean: np.ndarray
    epsilon_sem: np.ndarray
    engine_variant: str

    @property
    def run_count(self) -> int:
        return len(self.run_indices)

    def final_epsilons(self) -> np.ndarray:
        return self.epsilon[:, -1]


def _build_graph(config: ExperimentConfig, rng) -> net.NetworkGraph:
    seed = config.graph_seed if config.graph_seed is not None else rng
    if config.topology == "fully_connected":
        return net.make_fully_connected(config.nodes, config.channels)
    if config.topology == "path":
        return net.make_path(config.nodes, config.channels)
    if config.topology == "erdos_renyi":
        return net.make_erdos_renyi(config.nodes, config.channels, config.edge_prob, seed)
    if config.topology == "random_tree":
        return net.make_random_tree(config.nodes, config.channels, seed)
    raise ValueError(f"unknown topology {config.topology!r}")


def _build_problem(config: ExperimentConfig, n_filters: int) -> SfoProblem:
    """Deterministic problem data shared by every Monte-Carlo run."""
    m = config.total_channels
    if config.problem_kind == "mmse":
        return MmseProblem(n_filters=n_filters)
    if config.problem_kind == "tro":
        return TroProblem(n_filters=n_filters)
    rng = np.random.default_rng(config.term_seed)
    linear = rng.standard_normal((m, n_filters))
    if config.problem_kind == "scqp":
        return ScqpProblem(n_filters=n_filters, linear_term=linear)
    gain = rng.standard_normal(m)
    target = rng.standard_normal(n_filters)
    radius = config.radius_scale * float(np.linalg.norm(target) / np.linalg.norm(gain))
    return QcqpProblem(
        n_filters=n_filters,
        linear_term=linear,
        gain_vector=gain,
        target_response=target,
        radius=radius,
    )


def _build_model(config: ExperimentConfig, n_filters: int, rng) -> SignalModel:
    m = config.total_channels
    if config.drift is not None:
        times = tuple(t * config.samples for t, _ in config.drift.schedule)
        weights = tuple(w for _, w in config.drift.schedule)
        spec = DriftSpec(
            p0=rng.uniform(-config.mix_scale, config.mix_scale, m),
            delta=rng.normal(0.0, config.drift.delta_std, m),
            schedule=LambdaSchedule(times, weights),
        )
        return SignalModel(channels=config.channels, source_var=config.source_var,
                           noise_var=config.noise_var, drift=spec)
    sources = config.sources if config.sources is not None else n_filters
    mix_y = rng.uniform(-config.mix_scale, config.mix_scale, (m, sources))
    mix_v = None
    if config.problem_kind == "tro":
        interferers = config.interferers if config.interferers is not None else sources
        mix_v = rng.uniform(-config.mix_scale, config.mix_scale, (m, interferers))
    return SignalModel(channels=config.channels, source_var=config.source_var,
                       noise_var=config.noise_var, mix_y=mix_y, mix_v=mix_v)


def tracking_reference(model: SignalModel, t0: int, n_samples: int) -> np.ndarray:
    """Closed-form estimator target for the drifting model over one batch
    window: the average true covariance and cross-correlation across the
    window's sample times, solved directly."""
    tau = np.arange(t0, t0 + n_samples)
    lam = model.drift.schedule(tau)
    p = model.drift.p0[:, None] + lam[None, :] * model.drift.delta[:, None]
    m = p.shape[0]
    cov = model.source_var * (p @ p.T) / n_samples + model.noise_var * np.eye(m)
    cross = model.source_var * p.mean(axis=1)[:, None]
    return sla.solve(cov, cross, assume_a="pos")


def _single_run(config: ExperimentConfig, n_filters: int, run_index: int,
                seed_seq: np.random.SeedSequence) -> tuple[RunResult, np.ndarray]:
    """One Monte-Carlo run; returns the run plus its error trace including
    the initial point."""
    rng = np.random.default_rng(seed_seq)
    graph = _build_graph(config, rng)
    problem = _build_problem(config, n_filters)
    model = _build_model(config, n_filters, rng)
    variant = "fc" if graph.is_complete() else "ti"
    n = config.samples

    if config.drift is not None:
        def reference(i):
            return tracking_reference(model, i * n, n)

        def batch(i):
            return sample_adaptive(model, i * n, n, rng)

        eps0_ref = reference(0)
    elif config.sample_mode == "adaptive":
        # stationary statistics: the reference comes from one independent
        # batch of the same size, so the error floors at estimation level
        fit_batch = sample_stationary(model, 0, n, rng)
        reference = solve_centralized(problem, fit_batch).x

        def batch(i):
            return sample_stationary(model, 0, n, rng)

        eps0_ref = None
    else:
        batch = sample_stationary(model, 0, n, rng)
        reference = solve_centralized(problem, batch).x
        eps0_ref = None

    x0 = problem.random_feasible(graph.total_channels, rng)
    result = dasf_run(
        problem, graph, batch, config.iterations, mode=variant, x0=x0,
        reference=reference, run_index=run_index, warn_on_bound=(run_index == 0),
    )
    if eps0_ref is None:
        eps0_ref = result.reference   # symmetry-aligned fixed reference
    eps0 = normalized_error(result.x_history[0], eps0_ref)
    eps_full = np.concatenate([[eps0], result.epsilon_trace()])
    return result, eps_full


def _run_worker(args) -> tuple[int, RunResult | None, np.ndarray | None, str | None]:
    config, n_filters, run_index, seed_seq = args
    try:
        result, eps = _single_run(config, n_filters, run_index, seed_seq)
        return run_index, result, eps, None
    except (SolverError, net.GraphConnectivityError, np.linalg.LinAlgError) as exc:
        return run_index, None, None, f"{type(exc).__name__}: {exc}"


def _run_variant(config: ExperimentConfig, n_filters: int) -> StudyResult:
    master = np.random.SeedSequence(config.seed)
    children = master.spawn(config.runs)
    payloads = [(config, n_filters, idx, children[idx]) for idx in range(config.runs)]

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_worker, payloads))
    else:
        outcomes = [_run_worker(p) for p in payloads]

    results: list[RunResult] = []
    indices: list[int] = []
    eps_rows: list[np.ndarray] = []
    failed: list[tuple[int, str]] = []
    for idx, result, eps, error in outcomes:
        if error is not None:
            logger.warning("run %d failed: %s", idx, error)
            failed.append((idx, error))
            continue
        results.append(result)
        indices.append(idx)
        eps_rows.append(eps)
    if not results:
        raise RuntimeError(
            "every Monte-Carlo run failed; first error: " + failed[0][1])

    epsilon = np.vstack(eps_rows)
    n_done = epsilon.shape[0]
    if n_done > 1:
        sem = epsilon.std(axis=0, ddof=1) / math.sqrt(n_done)
    else:
        sem = np.zeros(epsilon.shape[1])
    return StudyResult(
        config=config,
        n_filters=n_filters,
        run_results=results,
        run_indices=tuple(indices),
        failed=tuple(failed),
        epsilon=epsilon,
        epsilon_median=np.median(epsilon, axis=0),
        epsilon_mean=epsilon.mean(axis=0),
        epsilon_sem=sem,
        engine_variant="fc" if config.topology == "fully_connected" else "ti",
    )


def run_study(config: ExperimentConfig, write: bool = True):
    """Execute the Monte-Carlo study described by the config.

    Returns one StudyResult, or a list of them when the config sweeps
    several filter widths (each sweep value writes into ``q<width>/`` under
    the output directory). Drift configs are dispatched to run_tracking.
    """
    if config.drift is not None:
        return run_tracking(config, write=write)
    variants = config.expand_filter_sweep()
    studies = []
    for variant_config in variants:
        study = _run_variant(variant_config, variant_config.n_filters)
        if write:
            out = Path(config.out_dir)
            if len(variants) > 1:
                out = out / f"q{variant_config.n_filters}"
            write_study_outputs(study, out)
        studies.append(study)
    return studies[0] if len(studies) == 1 else studies


def run_tracking(config: ExperimentConfig, write: bool = True) -> StudyResult:
    """Tracking study: drifting steering vector, per-iteration closed-form
    reference, error medians across runs."""
    errors = []
    if config.problem_kind != "mmse":
        errors.append("problem.kind: tracking needs the mmse family")
    if config.drift is None:
        errors.append("signals.drift: required for a tracking study")
    if errors:
        raise ConfigError(errors)
    study = _run_variant(config, config.n_filters)
    if write:
        write_study_outputs(study, Path(config.out_dir))
    return study


# --------------------------------------------------------------------------
# output emission


def _fmt(x: float) -> str:
    return repr(float(x))


def write_study_outputs(study: StudyResult, out_dir: Path) -> None:
    """Emit run_<idx>.csv per run, aggregate.csv, study.meta, and the
    gnuplot pair epsilon.dat / epsilon.gp (plus lambda.dat when tracking)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for idx, result in zip(study.run_indices, study.run_results):
        result.to_csv(out_dir / f"run_{idx}.csv")

    header = "iter,epsilon_median,epsilon_mean,epsilon_sem"
    lines = [header]
    for j in range(study.epsilon.shape[1]):
        lines.append(",".join([
            str(j),
            _fmt(study.epsilon_median[j]),
            _fmt(study.epsilon_mean[j]),
            _fmt(study.epsilon_sem[j]),
        ]))
    (out_dir / "aggregate.csv").write_text("\n".join(lines) + "\n")

    meta = {
        "resolved_config": study.config.resolved_dict(),
        "n_filters": study.n_filters,
        "engine_variant": study.engine_variant,
        "completed_runs": study.run_count,
        "failed_runs": [[idx, msg] for idx, msg in study.failed],
    }
    (out_dir / "study.meta").write_text(yaml.safe_dump(meta, sort_keys=True))

    dat = ["# iter epsilon_median epsilon_mean epsilon_sem"]
    for j in range(study.epsilon.shape[1]):
        dat.append(" ".join([
            str(j),
            _fmt(study.epsilon_median[j]),
            _fmt(study.epsilon_mean[j]),
            _fmt(study.epsilon_sem[j]),
        ]))
    (out_dir / "epsilon.dat").write_text("\n".join(dat) + "\n")

    tracking = study.config.drift is not None
    if tracking:
        model_times = [t for t, _ in study.config.drift.schedule]
        weights = [w for _, w in study.config.drift.schedule]
        lam = np.interp(np.arange(study.epsilon.shape[1]), model_times, weights)
        lam_lines = ["# iter lambda"]
        lam_lines += [f"{j} {_fmt(lam[j])}" for j in range(lam.size)]
        (out_dir / "lambda.dat").write_text("\n".join(lam_lines) + "\n")

    gp = [
        "set logscale y",
        "set xlabel 'iteration'",
        "set ylabel 'normalized error'",
        "set key top right",
    ]
    if tracking:
        gp += [
            "set y2label 'mixing weight'",
            "set y2range [0:1.1]",
            "set y2tics",
            "plot 'epsilon.dat' using 1:2 with lines title 'median', \\",
            "     'epsilon.dat' using 1:3 with lines title 'mean', \\",
            "     'lambda.dat' using 1:2 axes x1y2 with lines title 'lambda'",
        ]
    else:
        gp += [
            "plot 'epsilon.dat' using 1:2 with lines title 'median', \\",
            "     'epsilon.dat' using 1:3 with lines title 'mean'",
        ]
    (out_dir / "epsilon.gp").write_text("\n".join(gp) + "\n")
