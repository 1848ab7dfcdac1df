"""Tanh MLP (t, x, y) -> u with an exact derivative engine.

The network is a plain fully connected chain: affine, tanh, repeated, with
a linear scalar output.  Parameters live in one flat vector ``theta`` in a
canonical order that is part of the checkpoint contract:

    layer by layer (input to output): W flattened row-major with shape
    (fan_in, fan_out), then the bias (fan_out,).

Derivatives are computed by forward-mode propagation of six streams per
point -- the value, the three first-order input tangents, and the two
diagonal second-order tangents in x and y -- stacked into one matrix so
each layer costs a single GEMM.  Parameter gradients of any scalar built
from those streams come from reverse accumulation through the same
augmented computation (see ``loss_and_param_gradient``); both directions
are exact to floating-point roundoff, never finite-difference approximations.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Tape, Var
from .rng import stream

__all__ = [
    "NetworkConfig",
    "NetworkParams",
    "Jet",
    "init_params",
    "forward",
    "forward_batch",
    "jet",
    "jet_batch",
    "loss_and_param_gradient",
    "save_checkpoint",
    "load_checkpoint",
]

_DTYPES = {"single": np.float32, "double": np.float64}


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture descriptor; input is fixed at (t, x, y), output at u."""

    hidden_layers: int = 9
    hidden_width: int = 64
    activation: str = "tanh"
    precision: str = "single"

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("need hidden_layers >= 1 and hidden_width >= 1")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be one of {sorted(_DTYPES)}")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(_DTYPES[self.precision])

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [3] + [self.hidden_width] * self.hidden_layers + [1]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims())

    @property
    def arch_label(self) -> str:
        return f"{self.hidden_layers}L-{self.hidden_width}N"


@dataclass
class NetworkParams:
    """Flat parameter vector plus its architecture."""

    config: NetworkConfig
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta)
        if self.theta.shape != (self.config.param_count,):
            raise ValueError(
                f"theta length {self.theta.size} != {self.config.param_count}"
            )
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta contains non-finite entries")

    def with_theta(self, theta: np.ndarray) -> "NetworkParams":
        return NetworkParams(self.config, theta)


@dataclass
class Jet:
    """Network output and the PDE-relevant partials at one or more points."""

    u: object
    du_dt: object
    du_dx: object
    du_dy: object
    d2u_dx2: object
    d2u_dy2: object


def _layers(params: NetworkParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """(W, b) views into theta, W shaped (fan_in, fan_out)."""
    out = []
    offset = 0
    for fi, fo in params.config.layer_dims():
        W = params.theta[offset:offset + fi * fo].reshape(fi, fo)
        offset += fi * fo
        b = params.theta[offset:offset + fo]
        offset += fo
        out.append((W, b))
    return out


def init_params(config: NetworkConfig, seed: int) -> NetworkParams:
    """Glorot-uniform weights, zero biases, deterministic per seed.

    Weight draws are consumed in canonical theta order from the child
    stream ``init`` of the seed; scale per layer is sqrt(6/(fan_in+fan_out)).
    """
    gen = stream(seed, "init")
    theta = np.zeros(config.param_count, dtype=np.float64)
    offset = 0
    for fi, fo in config.layer_dims():
        limit = np.sqrt(6.0 / (fi + fo))
        theta[offset:offset + fi * fo] = limit * (2.0 * gen.uniforms(fi * fo) - 1.0)
        offset += fi * fo + fo  # biases stay zero
    return NetworkParams(config, theta.astype(config.dtype))


# ---------------------------------------------------------------------------
# plain value pass
# ---------------------------------------------------------------------------

def _forward_cached(wbs, pts: np.ndarray):
    """Returns (u values (n,), activations list for the backward pass)."""
    acts = [pts]
    a = pts
    last = len(wbs) - 1
    for k, (W, b) in enumerate(wbs):
        z = a @ W
        z += b
        a = np.tanh(z) if k < last else z
        acts.append(a)
    return a[:, 0], acts


def _forward_vjp(wbs, acts, u_bar: np.ndarray, grad_views) -> None:
    """Accumulate d(sum(u_bar * u))/dtheta into grad views."""
    g = u_bar[:, None].astype(acts[-1].dtype, copy=False)
    for k in range(len(wbs) - 1, -1, -1):
        W, _ = wbs[k]
        gW, gb = grad_views[k]
        gW += acts[k].T @ g
        gb += g.sum(axis=0)
        if k > 0:
            g = g @ W.T
            ak = acts[k]
            g = g * (1.0 - ak * ak)


# ---------------------------------------------------------------------------
# jet pass: six stacked streams [u; d_t; d_x; d_y; d2_xx; d2_yy]
# ---------------------------------------------------------------------------

def _jet_cached(wbs, pts: np.ndarray):
    n = pts.shape[0]
    dtype = pts.dtype
    S = np.zeros((6 * n, 3), dtype=dtype)
    S[:n] = pts
    S[n:2 * n, 0] = 1.0   # d/dt seed
    S[2 * n:3 * n, 1] = 1.0   # d/dx seed
    S[3 * n:4 * n, 2] = 1.0   # d/dy seed
    caches = []
    last = len(wbs) - 1
    for k, (W, b) in enumerate(wbs):
        Z = S @ W
        Z[:n] += b
        if k < last:
            h = np.tanh(Z[:n])
            hp = 1.0 - h * h
            hpp = -2.0 * h * hp
            H = np.empty_like(Z)
            H[:n] = h
            w = Z.shape[1]
            H[n:4 * n] = (Z[n:4 * n].reshape(3, n, w) * hp).reshape(3 * n, w)
            zx = Z[2 * n:3 * n]
            zy = Z[3 * n:4 * n]
            H[4 * n:5 * n] = hpp * zx * zx + hp * Z[4 * n:5 * n]
            H[5 * n:6 * n] = hpp * zy * zy + hp * Z[5 * n:6 * n]
            caches.append((S, Z, h, hp, hpp))
            S = H
        else:
            caches.append((S, Z, None, None, None))
            S = Z
    out = S[:, 0]
    parts = (out[:n], out[n:2 * n], out[2 * n:3 * n], out[3 * n:4 * n],
             out[4 * n:5 * n], out[5 * n:6 * n])
    return parts, caches


def _jet_vjp(wbs, caches, bars, grad_views) -> None:
    """Reverse accumulation through the augmented (jet) computation.

    ``bars`` are the six adjoints (each (n,) or None) of the stacked output
    streams, in the same order as the forward stacking.
    """
    n = caches[0][0].shape[0] // 6
    dtype = caches[0][0].dtype
    Bar = np.zeros((6 * n, 1), dtype=dtype)
    for i, bar in enumerate(bars):
        if bar is not None:
            Bar[i * n:(i + 1) * n, 0] = bar
    for k in range(len(wbs) - 1, -1, -1):
        S, _, _, _, _ = caches[k]
        W, _ = wbs[k]
        gW, gb = grad_views[k]
        gW += S.T @ Bar
        gb += Bar[:n].sum(axis=0)
        if k == 0:
            break
        Ab = Bar @ W.T
        _, pZ, h, hp, hpp = caches[k - 1]
        hppp = -2.0 * (hp * hp + h * hpp)
        zt = pZ[n:2 * n]
        zx = pZ[2 * n:3 * n]
        zy = pZ[3 * n:4 * n]
        zxx = pZ[4 * n:5 * n]
        zyy = pZ[5 * n:6 * n]
        Zb = np.empty_like(Ab)
        v = Ab[:n] * hp
        v += Ab[n:2 * n] * hpp * zt
        v += Ab[2 * n:3 * n] * hpp * zx
        v += Ab[3 * n:4 * n] * hpp * zy
        v += Ab[4 * n:5 * n] * (hppp * zx * zx + hpp * zxx)
        v += Ab[5 * n:6 * n] * (hppp * zy * zy + hpp * zyy)
        Zb[:n] = v
        Zb[n:2 * n] = Ab[n:2 * n] * hp
        Zb[2 * n:3 * n] = Ab[2 * n:3 * n] * hp + Ab[4 * n:5 * n] * (2.0 * hpp * zx)
        Zb[3 * n:4 * n] = Ab[3 * n:4 * n] * hp + Ab[5 * n:6 * n] * (2.0 * hpp * zy)
        Zb[4 * n:5 * n] = Ab[4 * n:5 * n] * hp
        Zb[5 * n:6 * n] = Ab[5 * n:6 * n] * hp
        Bar = Zb


# ---------------------------------------------------------------------------
# public evaluation API
# ---------------------------------------------------------------------------

def _as_points(params: NetworkParams, t, x, y):
    t, x, y = np.broadcast_arrays(
        np.asarray(t, dtype=np.float64),
        np.asarray(x, dtype=np.float64),
        np.asarray(y, dtype=np.float64),
    )
    shape = t.shape
    pts = np.stack(
        [t.ravel(), x.ravel(), y.ravel()], axis=1
    ).astype(params.config.dtype)
    return pts, shape


def forward_batch(params: NetworkParams, pts: np.ndarray) -> np.ndarray:
    """Evaluate u at pts of shape (n, 3) ordered (t, x, y)."""
    pts = np.asarray(pts, dtype=params.config.dtype)
    u, _ = _forward_cached(_layers(params), pts)
    return u


def forward(params: NetworkParams, t, x, y):
    """Evaluate u; scalars in, float out; arrays broadcast elementwise."""
    pts, shape = _as_points(params, t, x, y)
    u = forward_batch(params, pts)
    return float(u[0]) if shape == () else u.reshape(shape)


def jet_batch(params: NetworkParams, pts: np.ndarray) -> Jet:
    """Value and PDE partials at pts of shape (n, 3)."""
    pts = np.asarray(pts, dtype=params.config.dtype)
    parts, _ = _jet_cached(_layers(params), pts)
    return Jet(*parts)


def jet(params: NetworkParams, t, x, y) -> Jet:
    pts, shape = _as_points(params, t, x, y)
    j = jet_batch(params, pts)
    if shape == ():
        return Jet(*(float(getattr(j, f)[0]) for f in _JET_FIELDS))
    return Jet(*(getattr(j, f).reshape(shape) for f in _JET_FIELDS))


_JET_FIELDS = ("u", "du_dt", "du_dx", "du_dy", "d2u_dx2", "d2u_dy2")


class NetworkRecorder:
    """Evaluation context handed to loss builders.

    ``forward``/``jet`` return tape Variables so the builder can compose an
    arbitrary smooth scalar; after ``Tape.backward`` the recorded calls
    replay their vector-Jacobian products into the parameter gradient.
    """

    def __init__(self, params: NetworkParams, tape: Tape):
        self._wbs = _layers(params)
        self._dtype = params.config.dtype
        self._tape = tape
        self._calls = []  # (kind, cache, leaf Vars)

    def forward(self, pts: np.ndarray) -> Var:
        pts = np.asarray(pts, dtype=self._dtype)
        u, acts = _forward_cached(self._wbs, pts)
        leaf = self._tape.leaf(u)
        self._calls.append(("forward", acts, leaf))
        return leaf

    def jet(self, pts: np.ndarray) -> Jet:
        pts = np.asarray(pts, dtype=self._dtype)
        parts, caches = _jet_cached(self._wbs, pts)
        leaves = tuple(self._tape.leaf(p) for p in parts)
        self._calls.append(("jet", caches, leaves))
        return Jet(*leaves)

    def accumulate_param_grad(self, grad: np.ndarray) -> None:
        grad_views = _grad_views(self._wbs, grad)
        for kind, cache, leaves in self._calls:
            if kind == "forward":
                if leaves.grad is None:
                    continue
                _forward_vjp(self._wbs, cache, leaves.grad, grad_views)
            else:
                bars = tuple(v.grad for v in leaves)
                if all(b is None for b in bars):
                    continue
                _jet_vjp(self._wbs, cache, bars, grad_views)


def _grad_views(wbs, grad: np.ndarray):
    views = []
    offset = 0
    for W, b in wbs:
        views.append((
            grad[offset:offset + W.size].reshape(W.shape),
            grad[offset + W.size:offset + W.size + b.size],
        ))
        offset += W.size + b.size
    return views


def loss_and_param_gradient(
    params: NetworkParams,
    loss_builder: Callable[[NetworkRecorder], Var],
) -> tuple[float, np.ndarray]:
    """Exact (loss, dLoss/dtheta) for a builder over forwards/jets.

    The builder receives a recorder and must return a scalar tape Variable
    composed from recorder outputs via smooth operations.
    """
    tape = Tape()
    rec = NetworkRecorder(params, tape)
    result = loss_builder(rec)
    tape.backward(result)
    grad = np.zeros(params.config.param_count, dtype=params.config.dtype)
    rec.accumulate_param_grad(grad)
    return float(result.value), grad


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CKPT_FORMAT = "pinnbench-checkpoint"
_WIRE_DTYPE = {"single": "<f4", "double": "<f8"}


def save_checkpoint(params: NetworkParams, base, seed_lineage: dict | None = None,
                    extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``<base>.ckpt.json`` + ``<base>.ckpt.f32``/``.f64``."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    wire = _WIRE_DTYPE[params.config.precision]
    raw = params.theta.astype(wire).tobytes()
    meta = {
        "format": CKPT_FORMAT,
        "version": 1,
        "network": {
            "hidden_layers": params.config.hidden_layers,
            "hidden_width": params.config.hidden_width,
            "activation": params.config.activation,
            "precision": params.config.precision,
        },
        "seed_lineage": seed_lineage or {},
        "theta_length": int(params.theta.size),
        "dtype": wire,
        "checksum": "sha256:" + hashlib.sha256(raw).hexdigest(),
    }
    if extra:
        meta.update(extra)
    suffix = ".ckpt.f32" if wire == "<f4" else ".ckpt.f64"
    data_path = base.with_suffix(base.suffix + suffix)
    meta_path = base.with_suffix(base.suffix + ".ckpt.json")
    data_path.write_bytes(raw)
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return meta_path, data_path


def load_checkpoint(base) -> tuple[NetworkParams, dict]:
    base = Path(base)
    meta = json.loads(base.with_suffix(base.suffix + ".ckpt.json").read_text())
    if meta.get("format") != CKPT_FORMAT:
        raise ValueError(f"{base}: not a {CKPT_FORMAT} file")
    config = NetworkConfig(**meta["network"])
    suffix = ".ckpt.f32" if meta["dtype"] == "<f4" else ".ckpt.f64"
    raw = base.with_suffix(base.suffix + suffix).read_bytes()
    if meta["checksum"] != "sha256:" + hashlib.sha256(raw).hexdigest():
        raise ValueError(f"{base}: checkpoint checksum mismatch")
    theta = np.frombuffer(raw, dtype=meta["dtype"]).astype(config.dtype)
    if theta.size != meta["theta_length"]:
        raise ValueError(f"{base}: theta length mismatch")
    return NetworkParams(config, theta), meta
