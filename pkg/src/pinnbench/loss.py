"""The three-term training objective and all of its sampling.

Total objective:  physics + w_ic * ic_data + w_data * field_data, where

* physics     -- mean squared PDE residual at Latin-hypercube collocation
                 points, plus mean squared boundary residual against noisy
                 zero targets, plus mean squared symbolic-IC residual
                 against the multiplicatively noised release profile;
* ic_data     -- MSE against the *clean* initial condition at grid nodes;
* field_data  -- MSE against the *noisy* reference field at space-time nodes.

Collocation points and the symbolic BC/IC noise are redrawn every iteration
from streams deterministic in (plan.seed, iteration); the noisy data field
itself is drawn once per run (in domain.add_field_noise).  Mini-batches are
sampled uniformly without replacement, independently across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import network
from .domain import DomainSpec, GridSolution, NoiseSpec, initial_condition
from .network import NetworkParams, loss_and_param_gradient
from .rng import Xoshiro256pp, derive_seed

__all__ = [
    "LossWeights",
    "SamplingPlan",
    "TrainingData",
    "LossBreakdown",
    "pde_residual",
    "sample_collocation_lhs",
    "physics_loss",
    "ic_data_loss",
    "field_data_loss",
    "total_loss",
    "make_loss_grad_fn",
]


@dataclass(frozen=True)
class LossWeights:
    w_ic: float = 500.0
    w_data: float = 10.0

    def __post_init__(self):
        if self.w_ic < 0 or self.w_data < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True)
class SamplingPlan:
    """Counts and seed for every stochastic element of the objective."""

    n_collocation: int = 200
    n_bc_per_edge: int = 64
    n_ic_symbolic: int = 256
    data_batch: int = 1024
    ic_batch: int = 1024
    seed: int = 0

    def __post_init__(self):
        counts = (self.n_collocation, self.n_bc_per_edge,
                  self.n_ic_symbolic, self.data_batch, self.ic_batch)
        if min(counts) < 1:
            raise ValueError("all sampling counts must be >= 1")


@dataclass
class LossBreakdown:
    physics: float
    ic: float
    data: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {"physics": self.physics, "ic": self.ic,
                "data": self.data, "total": self.total}


class TrainingData:
    """Flattened training targets: the noisy field and the clean IC slice."""

    def __init__(self, clean: GridSolution, noisy_field: GridSolution):
        if noisy_field.values.shape != clean.values.shape:
            raise ValueError("clean and noisy solutions must share a grid")
        self.noisy_field = noisy_field
        self.clean_ic = clean.values[0].copy()
        grid, spec = clean.grid, clean.spec
        times, xs, ys = grid.axes(spec)
        T, X, Y = np.meshgrid(times, xs, ys, indexing="ij")
        self.data_points = np.stack([T.ravel(), X.ravel(), Y.ravel()], axis=1)
        self.data_values = noisy_field.values.ravel().copy()
        X0, Y0 = np.meshgrid(xs, ys, indexing="ij")
        zeros = np.zeros(X0.size)
        self.ic_points = np.stack([zeros, X0.ravel(), Y0.ravel()], axis=1)
        self.ic_values = self.clean_ic.ravel().copy()

    @property
    def n_data(self) -> int:
        return self.data_points.shape[0]

    @property
    def n_ic(self) -> int:
        return self.ic_points.shape[0]


def pde_residual(jet, spec: DomainSpec):
    """Advection-diffusion residual of a jet (arrays, floats, or tape Vars)."""
    return (
        jet.du_dt
        + spec.vel_x * jet.du_dx
        + spec.vel_y * jet.du_dy
        - spec.diffusion_d * (jet.d2u_dx2 + jet.d2u_dy2)
    )


def sample_collocation_lhs(n: int, spec: DomainSpec, seed: int) -> np.ndarray:
    """n Latin-hypercube points in [0,t_final] x [0,x_max] x [0,y_max].

    Per axis (order t, x, y): a Fisher-Yates permutation assigns one sample
    to each of n equal-width strata, then a uniform jitter places it inside
    its stratum.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = Xoshiro256pp(seed)
    pts = np.empty((n, 3), dtype=np.float64)
    for axis, hi in enumerate((spec.t_final, spec.x_max, spec.y_max)):
        perm = gen.permutation(n)
        jitter = gen.uniforms(n)
        pts[:, axis] = (perm + jitter) / n * hi
    return pts


# ---------------------------------------------------------------------------
# per-iteration sample draws
# ---------------------------------------------------------------------------

@dataclass
class PhysicsBatch:
    collocation: np.ndarray     # (n_collocation, 3)
    bc_points: np.ndarray       # (4 * n_bc_per_edge, 3)
    bc_targets: np.ndarray      # noisy zeros
    ic_points: np.ndarray       # (n_ic_symbolic, 3) with t = 0
    ic_targets: np.ndarray      # noisy release profile
    field_data: "np.ndarray | None" = None


def sample_physics_batch(spec: DomainSpec, plan: SamplingPlan,
                         noise: NoiseSpec, iteration: int) -> PhysicsBatch:
    col = sample_collocation_lhs(
        plan.n_collocation, spec,
        derive_seed(plan.seed, f"collocation:{iteration}"),
    )

    # boundary points on the four edges, in the order y=0, y=y_max, x=0, x=x_max
    gen = Xoshiro256pp(derive_seed(plan.seed, f"bc:{iteration}"))
    m = plan.n_bc_per_edge
    bc_pts = np.empty((4 * m, 3), dtype=np.float64)
    for e in range(4):
        u = gen.uniforms(2 * m)
        ts = u[0::2] * spec.t_final
        s = u[1::2]
        block = bc_pts[e * m:(e + 1) * m]
        block[:, 0] = ts
        if e == 0:
            block[:, 1] = s * spec.x_max
            block[:, 2] = 0.0
        elif e == 1:
            block[:, 1] = s * spec.x_max
            block[:, 2] = spec.y_max
        elif e == 2:
            block[:, 1] = 0.0
            block[:, 2] = s * spec.y_max
        else:
            block[:, 1] = spec.x_max
            block[:, 2] = s * spec.y_max
    bc_targets = noise.bc_abs_sigma * gen.normals(4 * m)

    gen = Xoshiro256pp(derive_seed(plan.seed, f"ic-symbolic:{iteration}"))
    k = plan.n_ic_symbolic
    u = gen.uniforms(2 * k)
    ic_pts = np.zeros((k, 3), dtype=np.float64)
    ic_pts[:, 1] = u[0::2] * spec.x_max
    ic_pts[:, 2] = u[1::2] * spec.y_max
    eps_ic = gen.normals(k)
    ic_targets = initial_condition(ic_pts[:, 1], ic_pts[:, 2]) * (1.0 + noise.ic_rel_sigma * eps_ic)

    return PhysicsBatch(col, bc_pts, bc_targets, ic_pts, ic_targets)


def sample_ic_batch(data: TrainingData, plan: SamplingPlan, iteration: int) -> np.ndarray:
    if plan.ic_batch > data.n_ic:
        raise ValueError("ic_batch exceeds available IC grid nodes")
    gen = Xoshiro256pp(derive_seed(plan.seed, f"ic-batch:{iteration}"))
    return gen.index_sample(data.n_ic, plan.ic_batch)


def sample_data_batch(data: TrainingData, plan: SamplingPlan, iteration: int) -> np.ndarray:
    if plan.data_batch > data.n_data:
        raise ValueError("data_batch exceeds available field nodes")
    gen = Xoshiro256pp(derive_seed(plan.seed, f"data-batch:{iteration}"))
    return gen.index_sample(data.n_data, plan.data_batch)


# ---------------------------------------------------------------------------
# value-only loss terms (model = NetworkParams or a value/jet object)
# ---------------------------------------------------------------------------

def _resolve_model(model):
    """(value_fn, jet_fn, dtype): dtype is the reduction precision.

    NetworkParams evaluate in their configured precision (targets are cast
    to match so standalone values agree bit-for-bit with the components the
    training objective logs); oracle models with value()/jet() run double.
    """
    if isinstance(model, NetworkParams):
        return (lambda pts: network.forward_batch(model, pts),
                lambda pts: network.jet_batch(model, pts),
                model.config.dtype)
    if hasattr(model, "value") and hasattr(model, "jet"):
        return model.value, model.jet, np.dtype(np.float64)
    raise TypeError("model must be NetworkParams or provide value()/jet()")


def physics_loss(model, spec: DomainSpec, plan: SamplingPlan,
                 noise: NoiseSpec, iteration: int) -> float:
    """Residual MSE + boundary MSE + symbolic-IC MSE for one iteration."""
    value_fn, jet_fn, dtype = _resolve_model(model)
    batch = sample_physics_batch(spec, plan, noise, iteration)
    res = pde_residual(jet_fn(batch.collocation), spec)
    bc_err = value_fn(batch.bc_points) - batch.bc_targets.astype(dtype)
    ic_err = value_fn(batch.ic_points) - batch.ic_targets.astype(dtype)
    return float(np.mean(res ** 2) + np.mean(bc_err ** 2) + np.mean(ic_err ** 2))


def ic_data_loss(model, data: TrainingData, plan: SamplingPlan, iteration: int) -> float:
    """MSE against the clean IC at a without-replacement node batch."""
    value_fn, _, dtype = _resolve_model(model)
    idx = sample_ic_batch(data, plan, iteration)
    err = value_fn(data.ic_points[idx]) - data.ic_values[idx].astype(dtype)
    return float(np.mean(err ** 2))


def field_data_loss(model, data: TrainingData, plan: SamplingPlan, iteration: int) -> float:
    """MSE against the noisy field at a without-replacement node batch."""
    value_fn, _, dtype = _resolve_model(model)
    idx = sample_data_batch(data, plan, iteration)
    err = value_fn(data.data_points[idx]) - data.data_values[idx].astype(dtype)
    return float(np.mean(err ** 2))


def total_loss(model, spec: DomainSpec, data: TrainingData, plan: SamplingPlan,
               noise: NoiseSpec, weights: LossWeights, iteration: int) -> LossBreakdown:
    phys = physics_loss(model, spec, plan, noise, iteration)
    ic = ic_data_loss(model, data, plan, iteration)
    dat = field_data_loss(model, data, plan, iteration)
    return LossBreakdown(
        physics=phys, ic=ic, data=dat,
        total=phys + weights.w_ic * ic + weights.w_data * dat,
    )


# ---------------------------------------------------------------------------
# trainable objective: value + exact parameter gradient
# ---------------------------------------------------------------------------

def make_loss_grad_fn(params: NetworkParams, spec: DomainSpec, data: TrainingData,
                      plan: SamplingPlan, noise: NoiseSpec, weights: LossWeights):
    """Returns fn(theta, iteration) -> (total, grad, LossBreakdown).

    Sample draws are identical to the value-only operations above at the
    same iteration, so logged components match what the standalone loss
    functions would report.
    """
    dtype = params.config.dtype
    template = params

    def loss_grad(theta: np.ndarray, iteration: int):
        p = template.with_theta(np.asarray(theta, dtype=dtype))
        batch = sample_physics_batch(spec, plan, noise, iteration)
        ic_idx = sample_ic_batch(data, plan, iteration)
        data_idx = sample_data_batch(data, plan, iteration)
        bc_tgt = batch.bc_targets.astype(dtype)
        ic_sym_tgt = batch.ic_targets.astype(dtype)
        ic_tgt = data.ic_values[ic_idx].astype(dtype)
        dat_tgt = data.data_values[data_idx].astype(dtype)
        parts = {}

        def builder(net):
            res = pde_residual(net.jet(batch.collocation), spec)
            physics = (res ** 2).mean() \
                + ((net.forward(batch.bc_points) - bc_tgt) ** 2).mean() \
                + ((net.forward(batch.ic_points) - ic_sym_tgt) ** 2).mean()
            ic = ((net.forward(data.ic_points[ic_idx]) - ic_tgt) ** 2).mean()
            dat = ((net.forward(data.data_points[data_idx]) - dat_tgt) ** 2).mean()
            parts["physics"] = float(physics.value)
            parts["ic"] = float(ic.value)
            parts["data"] = float(dat.value)
            return physics + weights.w_ic * ic + weights.w_data * dat

        total, grad = loss_and_param_gradient(p, builder)
        breakdown = LossBreakdown(parts["physics"], parts["ic"], parts["data"], total)
        return total, grad, breakdown

    return loss_grad
