"""Flat-vector optimizers: Adam/AdamW and an L-BFGS refiner.

All optimizers drive a callback ``loss_grad_fn(theta, iteration)`` that
returns ``(loss, grad)`` or ``(loss, grad, LossBreakdown)``.  The iteration
index is the global training step (1-based) so stochastic objectives can
key their per-iteration sampling on it; deterministic objectives simply
ignore it.  L-BFGS always calls with iteration 0 -- a line search needs a
single consistent objective, so callers freeze any stochastic sampling
before handing the function over (see ``two_stage_run``).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "AdamConfig",
    "LbfgsConfig",
    "AdamState",
    "TraceRecord",
    "OptimTrace",
    "DivergenceDetected",
    "adam_run",
    "lbfgs_run",
    "two_stage_run",
    "TwoStageResult",
]


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0   # decoupled (AdamW); 0 reduces exactly to Adam
    iterations: int = 10000

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must be in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iterations: int = 500
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    grad_tol: float = 1e-8
    max_evals_per_step: int = 25

    def __post_init__(self):
        if not (0 < self.wolfe_c1 < self.wolfe_c2 < 1):
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class AdamState:
    """First/second moments and step counter, serializable for resume."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, theta: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(theta), v=np.zeros_like(theta), t=0)


@dataclass
class TraceRecord:
    iteration: int
    loss: float
    components: dict | None
    grad_norm: float
    step_size: float
    wall_ms: float
    # strong-Wolfe certification data for accepted L-BFGS steps:
    # (f0, dphi0, alpha, f_alpha, dphi_alpha)
    wolfe: tuple | None = None


@dataclass
class OptimTrace:
    stage: str
    records: list[TraceRecord] = field(default_factory=list)
    final_theta: np.ndarray | None = None
    final_state: AdamState | None = None
    stopped_reason: str = ""
    # best-seen iterate: the lowest recorded loss and the parameters that
    # produced it ("final selected loss" reporting uses these, the last
    # iterate stays available through final_theta / the trace itself)
    best_loss_seen: float = math.inf
    best_theta: np.ndarray | None = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else math.nan

    def best_loss(self) -> float:
        return float(self.losses.min()) if self.records else math.nan

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,loss,physics,ic,data,grad_norm,step_size,wall_ms\n")
            for r in self.records:
                c = r.components or {}
                fh.write(
                    f"{r.iteration},{r.loss:.17g},"
                    f"{c.get('physics', '')},{c.get('ic', '')},{c.get('data', '')},"
                    f"{r.grad_norm:.17g},{r.step_size:.17g},{r.wall_ms:.6g}\n"
                )

    def write_loss_csv(self, path) -> None:
        """Per-iteration loss breakdown only (the training-log format)."""
        with open(path, "w") as fh:
            fh.write("iter,physics,ic,data,total,wall_ms\n")
            for r in self.records:
                c = r.components or {}
                fh.write(
                    f"{r.iteration},{c.get('physics', '')},{c.get('ic', '')},"
                    f"{c.get('data', '')},{r.loss:.17g},{r.wall_ms:.6g}\n"
                )


def save_optim_state(state: AdamState, base, final_theta: np.ndarray | None = None,
                     best_loss: float | None = None) -> None:
    """Optimizer-state blob next to a network checkpoint: json + raw f64.

    The checkpoint itself stores the *selected* (best-seen) parameters; this
    blob additionally stores the moments, the step counter, the *final*
    iterate (the point stepping must continue from), and the best-seen loss,
    so a resumed run behaves exactly like an uninterrupted one.
    """
    base = Path(base)
    arrays = [state.m.astype("<f8"), state.v.astype("<f8")]
    meta = {"format": "pinnbench-adam-state", "t": state.t, "n": int(state.m.size)}
    if final_theta is not None:
        meta["has_final_theta"] = True
        arrays.append(np.asarray(final_theta).astype("<f8"))
    if best_loss is not None and math.isfinite(best_loss):
        meta["best_loss"] = float(best_loss)
    raw = np.concatenate(arrays).tobytes()
    base.with_suffix(base.suffix + ".optim.json").write_text(json.dumps(meta) + "\n")
    base.with_suffix(base.suffix + ".optim.f64").write_bytes(raw)


def load_optim_state(base, dtype=np.float64):
    """Returns (AdamState, final_theta | None, best_loss | None)."""
    base = Path(base)
    meta = json.loads(base.with_suffix(base.suffix + ".optim.json").read_text())
    if meta.get("format") != "pinnbench-adam-state":
        raise ValueError(f"{base}: not an optimizer-state blob")
    raw = np.frombuffer(base.with_suffix(base.suffix + ".optim.f64").read_bytes(), dtype="<f8")
    n = meta["n"]
    state = AdamState(m=raw[:n].astype(dtype), v=raw[n:2 * n].astype(dtype), t=meta["t"])
    final_theta = raw[2 * n:3 * n].astype(dtype) if meta.get("has_final_theta") else None
    return state, final_theta, meta.get("best_loss")


class DivergenceDetected(RuntimeError):
    """Loss went non-finite; the partial trace and last params are attached."""

    def __init__(self, iteration: int, trace: OptimTrace, theta: np.ndarray):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration
        self.trace = trace
        self.theta = theta


def _call(loss_grad_fn, theta, iteration):
    out = loss_grad_fn(theta, iteration)
    if len(out) == 2:
        loss, grad = out
        comp = None
    else:
        loss, grad, breakdown = out
        comp = breakdown.as_dict() if hasattr(breakdown, "as_dict") else dict(breakdown)
    return float(loss), grad, comp


def adam_run(theta0: np.ndarray, loss_grad_fn, cfg: AdamConfig,
             state: AdamState | None = None,
             start_iteration: int = 0,
             initial_best: "tuple[float, np.ndarray] | None" = None) -> tuple[np.ndarray, OptimTrace]:
    """Adam with bias correction; decoupled decay first when weight_decay > 0.

    Runs ``cfg.iterations`` steps numbered ``start_iteration + 1`` onward
    (resume keeps the moment state, the iteration numbering, and -- via
    ``initial_best`` -- the best-seen iterate).
    """
    theta = np.array(theta0, copy=True)
    st = state if state is not None else AdamState.fresh(theta)
    trace = OptimTrace(stage="adam")
    if initial_best is not None:
        trace.best_loss_seen = float(initial_best[0])
        trace.best_theta = np.array(initial_best[1], copy=True)
    for k in range(cfg.iterations):
        iteration = start_iteration + k + 1
        t0 = time.perf_counter()
        loss, grad, comp = _call(loss_grad_fn, theta, iteration)
        if not math.isfinite(loss):
            trace.final_theta = theta
            trace.final_state = st
            trace.stopped_reason = "divergence"
            raise DivergenceDetected(iteration, trace, theta)
        if loss < trace.best_loss_seen:
            trace.best_loss_seen = loss
            trace.best_theta = theta.copy()  # pre-update iterate produced this loss
        if cfg.weight_decay > 0.0:
            theta -= cfg.lr * cfg.weight_decay * theta
        st.t += 1
        st.m += (1.0 - cfg.beta1) * (grad - st.m)
        st.v += (1.0 - cfg.beta2) * (grad * grad - st.v)
        bc1 = 1.0 - cfg.beta1 ** st.t   # python floats: double precision
        bc2 = 1.0 - cfg.beta2 ** st.t
        step = (cfg.lr / bc1) * st.m / (np.sqrt(st.v / bc2) + cfg.epsilon)
        theta -= step.astype(theta.dtype, copy=False)
        trace.records.append(TraceRecord(
            iteration=iteration,
            loss=loss,
            components=comp,
            grad_norm=float(np.linalg.norm(np.asarray(grad, dtype=np.float64))),
            step_size=cfg.lr,
            wall_ms=(time.perf_counter() - t0) * 1e3,
        ))
    trace.final_theta = theta
    trace.final_state = st
    trace.stopped_reason = trace.stopped_reason or "max_iterations"
    return theta, trace


# ---------------------------------------------------------------------------
# L-BFGS
# ---------------------------------------------------------------------------

def _cubic_minimizer(a, fa, da, b, fb, db):
    """Minimizer of the cubic through (a, fa, da), (b, fb, db); nan if bad."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0.0:
        return math.nan
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0.0:
        return math.nan
    return b - (b - a) * (db + d2 - d1) / denom


def _wolfe_line_search(evaluate, f0, dphi0, c1, c2, max_evals):
    """Strong-Wolfe search with bracketing + cubic-interpolation zoom.

    ``evaluate(alpha) -> (f, dphi)``; returns
    (alpha, f, dphi, evals_used, satisfied).
    """
    if dphi0 >= 0.0:
        return 0.0, f0, dphi0, 0, False
    evals = 0
    alpha_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    alpha = 1.0
    best = (0.0, f0, dphi0)
    bracket = None
    for _ in range(max_evals):
        f, dphi = evaluate(alpha)
        evals += 1
        if f < best[1]:
            best = (alpha, f, dphi)
        if f > f0 + c1 * alpha * dphi0 or (evals > 1 and f >= f_prev):
            bracket = (alpha_prev, f_prev, dphi_prev, alpha, f, dphi)
            break
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, dphi, evals, True
        if dphi >= 0.0:
            bracket = (alpha, f, dphi, alpha_prev, f_prev, dphi_prev)
            break
        alpha_prev, f_prev, dphi_prev = alpha, f, dphi
        alpha *= 2.0
    if bracket is None:
        a, f, d = best
        return a, f, d, evals, False

    lo, f_lo, d_lo, hi, f_hi, d_hi = bracket
    while evals < max_evals:
        alpha = _cubic_minimizer(lo, f_lo, d_lo, hi, f_hi, d_hi)
        width = abs(hi - lo)
        if not math.isfinite(alpha) or not (min(lo, hi) + 0.1 * width
                                            <= alpha <= max(lo, hi) - 0.1 * width):
            alpha = 0.5 * (lo + hi)
        f, dphi = evaluate(alpha)
        evals += 1
        if f < best[1]:
            best = (alpha, f, dphi)
        if f > f0 + c1 * alpha * dphi0 or f >= f_lo:
            hi, f_hi, d_hi = alpha, f, dphi
        else:
            if abs(dphi) <= -c2 * dphi0:
                return alpha, f, dphi, evals, True
            if dphi * (hi - lo) >= 0.0:
                hi, f_hi, d_hi = lo, f_lo, d_lo
            lo, f_lo, d_lo = alpha, f, dphi
        if width < 1e-14:
            break
    a, f, d = best
    return a, f, d, evals, False


def lbfgs_run(theta0: np.ndarray, loss_grad_fn, cfg: LbfgsConfig) -> tuple[np.ndarray, OptimTrace]:
    """Two-loop-recursion L-BFGS with a strong-Wolfe line search.

    The objective is always evaluated at iteration index 0 (it must be
    deterministic in theta).  Curvature pairs with non-positive s.y are
    skipped; the search direction falls back to steepest descent if the
    recursion ever loses descent.  Returns the best-seen iterate, which is
    the starting point itself if no step improved on it.
    """
    trace = OptimTrace(stage="lbfgs")
    x = np.array(theta0, copy=True, dtype=np.float64)

    def eval_fg(z):
        loss, grad, comp = _call(loss_grad_fn, z.astype(theta0.dtype, copy=False), 0)
        return loss, np.asarray(grad, dtype=np.float64), comp

    f, g, _ = eval_fg(x)
    best_f, best_x = f, x.copy()
    trace.best_loss_seen = f
    trace.best_theta = x.astype(theta0.dtype, copy=True)
    comp = None
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    rho_list: list[float] = []

    gnorm = float(np.linalg.norm(g))
    if gnorm <= cfg.grad_tol:
        trace.final_theta = x.astype(theta0.dtype, copy=False)
        trace.stopped_reason = "grad_tol"
        return trace.final_theta, trace

    for k in range(cfg.max_iterations):
        t0 = time.perf_counter()
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_list:
            gamma = (s_list[-1] @ y_list[-1]) / (y_list[-1] @ y_list[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        if float(g @ d) >= 0.0:
            d = -g

        scale = min(1.0, 1.0 / max(gnorm, 1e-30)) if k == 0 else 1.0
        dphi0 = float(g @ d) * scale
        cache: dict[float, tuple] = {}

        def phi(alpha, _x=x, _d=d, _scale=scale, _cache=cache):
            fz, gz, cz = eval_fg(_x + (alpha * _scale) * _d)
            _cache[alpha] = (fz, gz, cz)
            return fz, float(gz @ _d) * _scale

        alpha, f_new, dphi_new, evals, ok = _wolfe_line_search(
            phi, f, dphi0, cfg.wolfe_c1, cfg.wolfe_c2, cfg.max_evals_per_step
        )
        if alpha == 0.0 or not (f_new < f):
            trace.stopped_reason = "line_search_failed"
            break

        step = alpha * scale
        x_new = x + step * d
        if alpha in cache:
            _, g_new, comp = cache[alpha]
        else:
            _, g_new, comp = eval_fg(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 0.0:
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > cfg.memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        certification = (f, dphi0, alpha, f_new, dphi_new)
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        if f < best_f:
            best_f, best_x = f, x.copy()
        trace.records.append(TraceRecord(
            iteration=k + 1,
            loss=f,
            components=comp,
            grad_norm=gnorm,
            step_size=step,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            wolfe=certification if ok else None,
        ))
        if gnorm <= cfg.grad_tol:
            trace.stopped_reason = "grad_tol"
            break
        if not ok:
            trace.stopped_reason = "line_search_failed"
            break
    else:
        trace.stopped_reason = trace.stopped_reason or "max_iterations"

    theta_best = best_x.astype(theta0.dtype, copy=False)
    trace.final_theta = theta_best
    trace.best_loss_seen = best_f
    trace.best_theta = theta_best
    return theta_best, trace


@dataclass
class TwoStageResult:
    params: np.ndarray
    adam_trace: OptimTrace
    lbfgs_trace: OptimTrace
    selected_stage: str
    selected_loss: float


def two_stage_run(theta0: np.ndarray, loss_grad_fn, adam_cfg: AdamConfig,
                  lbfgs_cfg: LbfgsConfig | None) -> TwoStageResult:
    """Adam, then L-BFGS started from the Adam endpoint; best-seen wins.

    The refiner needs a deterministic objective, so the stochastic sampling
    index is frozen at ``adam_cfg.iterations + 1`` (a fresh draw Adam never
    stepped on).  Selection is by lowest recorded loss across both stages
    (the L-BFGS candidate includes its own starting point, the Adam
    endpoint, evaluated on the frozen objective).
    """
    theta_adam, adam_trace = adam_run(theta0, loss_grad_fn, adam_cfg)

    if lbfgs_cfg is None or lbfgs_cfg.max_iterations == 0:
        params = adam_trace.best_theta if adam_trace.best_theta is not None else theta_adam
        return TwoStageResult(
            params=params,
            adam_trace=adam_trace,
            lbfgs_trace=OptimTrace(stage="lbfgs", final_theta=theta_adam),
            selected_stage="adam",
            selected_loss=adam_trace.best_loss_seen,
        )

    frozen_iter = adam_cfg.iterations + 1

    def frozen(theta, _iteration):
        return loss_grad_fn(theta, frozen_iter)

    f_endpoint, _, _ = _call(frozen, theta_adam, 0)
    _, lbfgs_trace = lbfgs_run(theta_adam, frozen, lbfgs_cfg)

    candidates = []
    if adam_trace.best_theta is not None:
        candidates.append(("adam", adam_trace.best_loss_seen, adam_trace.best_theta))
    candidates.append(("adam", f_endpoint, theta_adam))
    if lbfgs_trace.best_theta is not None:
        candidates.append(("lbfgs", lbfgs_trace.best_loss_seen, lbfgs_trace.best_theta))

    stage, loss, params = candidates[0]
    for s, l, p in candidates[1:]:
        if math.isfinite(l) and not (l >= loss):
            stage, loss, params = s, l, p
    return TwoStageResult(params, adam_trace, lbfgs_trace, stage, loss)
