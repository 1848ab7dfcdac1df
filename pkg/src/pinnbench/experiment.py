"""Scenario runner and metrics: wires solver, network, loss, and optimizers
into end-to-end benchmark runs and emits the results table.

A scenario is fully determined by its config (same config, same build =>
identical metrics).  Each run times three phases separately -- reference
data generation, training, and a single full-field inference -- and
evaluates the relative L2 error of the trained network against the *clean*
reference field at the final time.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._version import __version__
from .domain import (DomainSpec, GridSpec, GridSolution, NoiseSpec,
                     add_field_noise, check_stability, solve_fdm)
from .fieldio import write_snapshot, write_solution
from .loss import LossWeights, SamplingPlan, TrainingData, make_loss_grad_fn
from .network import NetworkConfig, NetworkParams, forward_batch, init_params, save_checkpoint
from .optimizer import AdamConfig, LbfgsConfig, OptimTrace, adam_run, two_stage_run
from .rng import derive_seed

__all__ = [
    "ScenarioConfig",
    "ScenarioResult",
    "DegenerateReference",
    "relative_l2_error",
    "infer_field",
    "run_scenario",
    "benchmark_suite",
    "RESULTS_COLUMNS",
]

RESULTS_COLUMNS = ["name", "arch", "optimizer", "iterations", "lr", "final_loss",
                   "rel_l2", "train_s", "fdm_s", "infer_s", "status"]

OPTIMIZER_CHOICES = ("adam", "adamw", "adam+lbfgs")


class DegenerateReference(ValueError):
    """Reference field has zero norm; relative error is undefined."""


def relative_l2_error(pred: np.ndarray, ref: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref.ravel())
    if denom == 0.0:
        raise DegenerateReference("reference field has zero L2 norm")
    return float(np.linalg.norm((pred - ref).ravel()) / denom)


def infer_field(params: NetworkParams, spec: DomainSpec, grid: GridSpec,
                t: float) -> tuple[np.ndarray, float]:
    """Network prediction over the full (nx, ny) grid at time t.

    Returns (field, wall seconds of the evaluation only).  Times beyond
    t_final are allowed for extrapolation studies but flagged with a warning.
    """
    if t < 0.0 or t > spec.t_final:
        warnings.warn(f"inference time {t} outside [0, {spec.t_final}] (extrapolating)")
    _, xs, ys = grid.axes(spec)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([np.full(X.size, t), X.ravel(), Y.ravel()], axis=1)
    pts = pts.astype(params.config.dtype)
    t0 = time.perf_counter()
    u = forward_batch(params, pts)
    elapsed = time.perf_counter() - t0
    return u.astype(np.float64).reshape(grid.nx, grid.ny), elapsed


def canonical_name(net: NetworkConfig, optimizer: str, iterations: int, lr: float) -> str:
    return f"{net.arch_label}/{optimizer.upper()}/{iterations}/lr{lr:g}"


@dataclass
class ScenarioConfig:
    """One row of the benchmark matrix; fully determines a run."""

    domain: DomainSpec = field(default_factory=DomainSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    plan: SamplingPlan = field(default_factory=SamplingPlan)
    optimizer: str = "adam"
    adam: AdamConfig = field(default_factory=AdamConfig)
    lbfgs: LbfgsConfig | None = None
    master_seed: int = 0
    init_seed: int = 0
    name: str = ""
    deterministic: bool = True

    def __post_init__(self):
        if self.optimizer not in OPTIMIZER_CHOICES:
            raise ValueError(f"optimizer must be one of {OPTIMIZER_CHOICES}")
        if not self.name:
            self.name = canonical_name(self.network, self.optimizer,
                                       self.adam.iterations, self.adam.lr)

    @classmethod
    def from_master_seed(cls, master_seed: int, **kwargs) -> "ScenarioConfig":
        """Fan the master seed out to noise / sampling / init child seeds."""
        noise = kwargs.pop("noise", NoiseSpec())
        plan = kwargs.pop("plan", SamplingPlan())
        from dataclasses import replace
        noise = replace(noise, seed=derive_seed(master_seed, "noise"))
        plan = replace(plan, seed=derive_seed(master_seed, "sampling"))
        return cls(
            noise=noise,
            plan=plan,
            master_seed=master_seed,
            init_seed=derive_seed(master_seed, "init"),
            **kwargs,
        )

    @property
    def file_tag(self) -> str:
        return self.name.replace("/", "-").replace(" ", "_")


@dataclass
class ScenarioResult:
    name: str
    arch: str
    optimizer: str
    iterations: int
    lr: float
    final_loss: float            # selected (best-seen) loss
    last_loss: float             # last-iteration loss, logged alongside
    rel_l2_error: float
    ic_mse: float
    train_time: float
    fdm_time: float
    inference_time: float
    status: str = "ok"
    trace_paths: list = field(default_factory=list)
    snapshot_paths: list = field(default_factory=list)
    checkpoint_path: str | None = None

    def as_row(self) -> list[str]:
        def fmt(v):
            return "" if (isinstance(v, float) and math.isnan(v)) else f"{v:.17g}"
        return [self.name, self.arch, self.optimizer, str(self.iterations),
                f"{self.lr:g}", fmt(self.final_loss), fmt(self.rel_l2_error),
                fmt(self.train_time), fmt(self.fdm_time),
                fmt(self.inference_time), self.status]


def _train(cfg: ScenarioConfig, params0: NetworkParams, loss_grad_fn,
           state=None, start_iteration: int = 0, initial_best=None):
    """Dispatch on optimizer choice.

    Returns (selected theta, selected loss, traces): the selected iterate is
    the best-seen one (lowest recorded loss); the last iterate stays in the
    trace for logging.
    """
    if cfg.optimizer in ("adam", "adamw"):
        adam_cfg = cfg.adam
        if start_iteration:
            from dataclasses import replace
            adam_cfg = replace(adam_cfg, iterations=max(
                0, adam_cfg.iterations - start_iteration))
        theta, trace = adam_run(params0.theta, loss_grad_fn, adam_cfg,
                                state=state, start_iteration=start_iteration,
                                initial_best=initial_best)
        if trace.best_theta is not None:
            return trace.best_theta, float(trace.best_loss_seen), [trace]
        final_loss = loss_grad_fn(theta, 1)[0]  # 0-iter run: report the fresh value
        return theta, float(final_loss), [trace]
    result = two_stage_run(params0.theta, loss_grad_fn, cfg.adam, cfg.lbfgs)
    traces = [result.adam_trace]
    if result.lbfgs_trace.records or cfg.lbfgs is not None:
        traces.append(result.lbfgs_trace)
    return result.params, float(result.selected_loss), traces


def run_scenario(cfg: ScenarioConfig, out_dir: Path | str | None = None,
                 force: bool = False, resume_from=None) -> ScenarioResult:
    """Full pipeline: reference data, training, inference, metrics, artifacts.

    When ``out_dir`` is given, per-stage trace CSVs, the four comparison
    snapshots (clean IC, PINN IC, clean FDM and PINN at t_final), and the
    trained checkpoint are written there; whatever was produced before an
    error is kept on disk.  ``resume_from`` continues an adam/adamw run from
    a checkpoint base, preserving moment state and iteration numbering.
    """
    report = check_stability(cfg.domain, cfg.grid)
    if not report.passed and not force:
        from .domain import StabilityViolation
        raise StabilityViolation(report)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    clean = solve_fdm(cfg.domain, cfg.grid, force=force)
    fdm_time = time.perf_counter() - t0

    noisy = add_field_noise(clean, cfg.noise)
    data = TrainingData(clean, noisy)

    state = None
    start_iteration = 0
    initial_best = None
    if resume_from is not None:
        if cfg.optimizer not in ("adam", "adamw"):
            raise ValueError("resume is only supported for adam/adamw scenarios")
        from .network import load_checkpoint
        from .optimizer import load_optim_state
        best_params, _ = load_checkpoint(resume_from)  # the selected iterate
        if best_params.config != cfg.network:
            raise ValueError("checkpoint architecture differs from the configured network")
        state, final_theta, best_loss = load_optim_state(
            resume_from, dtype=best_params.config.dtype)
        if final_theta is None:
            raise ValueError("checkpoint lacks the resume iterate (old format?)")
        params0 = best_params.with_theta(final_theta)
        if best_loss is not None:
            initial_best = (best_loss, best_params.theta)
        start_iteration = state.t
    else:
        params0 = init_params(cfg.network, cfg.init_seed)

    loss_grad_fn = make_loss_grad_fn(params0, cfg.domain, data, cfg.plan,
                                     cfg.noise, cfg.weights)

    trace_paths: list = []
    try:
        t0 = time.perf_counter()
        theta, final_loss, traces = _train(cfg, params0, loss_grad_fn,
                                           state=state,
                                           start_iteration=start_iteration,
                                           initial_best=initial_best)
        train_time = time.perf_counter() - t0
    except Exception as err:
        trace = getattr(err, "trace", None)
        if trace is not None and out is not None:
            p = out / f"trace_{cfg.file_tag}_{trace.stage}.csv"
            trace.write_csv(p)
            trace_paths.append(str(p))
        raise

    params = params0.with_theta(theta)

    # warm-up excludes one-time allocation effects from the timed inference
    infer_field(params, cfg.domain, cfg.grid, cfg.domain.t_final)
    pinn_tfinal, inference_time = infer_field(params, cfg.domain, cfg.grid,
                                              cfg.domain.t_final)
    pinn_ic, _ = infer_field(params, cfg.domain, cfg.grid, 0.0)

    rel_l2 = relative_l2_error(pinn_tfinal, clean.values[-1])
    ic_mse = float(np.mean((pinn_ic - clean.values[0]) ** 2))

    snapshot_paths: list = []
    checkpoint_path = None
    if out is not None:
        for trace in traces:
            p = out / f"trace_{cfg.file_tag}_{trace.stage}.csv"
            trace.write_csv(p)
            trace_paths.append(str(p))
            trace.write_loss_csv(out / f"loss_{cfg.file_tag}_{trace.stage}.csv")
        snaps = [
            ("clean_ic", clean.values[0], 0.0),
            ("pinn_ic", pinn_ic, 0.0),
            ("fdm_tfinal", clean.values[-1], cfg.domain.t_final),
            ("pinn_tfinal", pinn_tfinal, cfg.domain.t_final),
        ]
        for tag, fld, t in snaps:
            base = out / f"field_{cfg.file_tag}_{tag}"
            meta_p, _ = write_snapshot(fld, t, cfg.domain, base)
            snapshot_paths.append(str(meta_p).replace(".meta.json", ""))
        ckpt_base = out / f"ckpt_{cfg.file_tag}"
        save_checkpoint(
            params, ckpt_base,
            seed_lineage={"master_seed": cfg.master_seed, "init_seed": cfg.init_seed,
                          "noise_seed": cfg.noise.seed, "sampling_seed": cfg.plan.seed},
            extra={"scenario": cfg.name, "iterations": cfg.adam.iterations},
        )
        if cfg.optimizer in ("adam", "adamw") and traces[0].final_state is not None:
            from .optimizer import save_optim_state
            save_optim_state(traces[0].final_state, ckpt_base,
                             final_theta=traces[0].final_theta,
                             best_loss=traces[0].best_loss_seen)
        checkpoint_path = str(ckpt_base)

    last_loss = traces[-1].final_loss if traces[-1].records else final_loss

    return ScenarioResult(
        name=cfg.name,
        arch=cfg.network.arch_label,
        optimizer=cfg.optimizer.upper(),
        iterations=cfg.adam.iterations,
        lr=cfg.adam.lr,
        final_loss=final_loss,
        last_loss=last_loss,
        rel_l2_error=rel_l2,
        ic_mse=ic_mse,
        train_time=train_time,
        fdm_time=fdm_time,
        inference_time=inference_time,
        trace_paths=trace_paths,
        snapshot_paths=snapshot_paths,
        checkpoint_path=checkpoint_path,
    )


def write_results_csv(results: list[ScenarioResult], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_COLUMNS)
        for r in results:
            writer.writerow(r.as_row())
    return path


def environment_metadata(precisions: list[str]) -> dict:
    return {
        "hardware": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "tool_version": __version__,
        "precision": sorted(set(precisions)),
    }


def benchmark_suite(configs: list[ScenarioConfig], out_dir: Path | str,
                    force: bool = False) -> list[ScenarioResult]:
    """Run every scenario, tolerating per-scenario failures.

    Writes ``results.csv`` plus an ``environment.json`` sidecar describing
    the host; failed scenarios appear as rows with an error status.
    """
    if not configs:
        raise ValueError("benchmark suite needs at least one scenario")
    names = [c.name for c in configs]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ValueError(f"duplicate scenario names: {sorted(dupes)}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results: list[ScenarioResult] = []
    for cfg in configs:
        try:
            results.append(run_scenario(cfg, out / cfg.file_tag, force=force))
        except Exception as err:  # keep the suite going, record the failure
            results.append(ScenarioResult(
                name=cfg.name,
                arch=cfg.network.arch_label,
                optimizer=cfg.optimizer.upper(),
                iterations=cfg.adam.iterations,
                lr=cfg.adam.lr,
                final_loss=math.nan,
                last_loss=math.nan,
                rel_l2_error=math.nan,
                ic_mse=math.nan,
                train_time=math.nan,
                fdm_time=math.nan,
                inference_time=math.nan,
                status=f"error: {err}",
            ))
    write_results_csv(results, out / "results.csv")
    (out / "environment.json").write_text(json.dumps(
        environment_metadata([c.network.precision for c in configs]), indent=2) + "\n")
    return results
