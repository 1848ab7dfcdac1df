"""On-disk field format: JSON sidecar + raw little-endian float64 payload.

A field file pair shares a basename: ``<base>.meta.json`` holds the problem
definition, the stored time levels, and a sha256 of the payload bytes;
``<base>.f64`` is the values array in [time][ix][iy] row-major order.  Full
space-time solutions and single-time snapshots use the same format (a
snapshot is just one stored level).  An optional ``t,x,y,u`` CSV can be
emitted for inspection.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .domain import DomainSpec, GridSpec, GridSolution, NoiseSpec

FORMAT_NAME = "pinnbench-field"
FORMAT_VERSION = 1


class FieldFormatError(ValueError):
    pass


@dataclass
class FieldFile:
    """In-memory view of a stored field: one or more time levels."""

    spec: DomainSpec
    nx: int
    ny: int
    times: np.ndarray
    values: np.ndarray  # shape (len(times), nx, ny), float64
    noise: NoiseSpec | None = None

    def single_level(self) -> np.ndarray:
        if len(self.times) != 1:
            raise FieldFormatError(f"expected one time level, found {len(self.times)}")
        return self.values[0]


def checksum_bytes(raw: bytes) -> str:
    return "sha256:" + hashlib.sha256(raw).hexdigest()


def _write(base: Path, spec: DomainSpec, times, values: np.ndarray,
           noise: NoiseSpec | None, grid: GridSpec | None) -> tuple[Path, Path]:
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    values = np.ascontiguousarray(values, dtype=np.float64)
    raw = values.astype("<f8").tobytes()
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "domain": asdict(spec),
        "grid": asdict(grid) if grid is not None else None,
        "noise": asdict(noise) if noise is not None else None,
        "times": [float(t) for t in np.atleast_1d(times)],
        "shape": list(values.shape),
        "dtype": "<f8",
        "order": "[time][ix][iy] row-major",
        "count": int(values.size),
        "checksum": checksum_bytes(raw),
    }
    data_path = base.with_suffix(base.suffix + ".f64")
    meta_path = base.with_suffix(base.suffix + ".meta.json")
    data_path.write_bytes(raw)
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return meta_path, data_path


def write_solution(sol: GridSolution, base, noise: NoiseSpec | None = None) -> tuple[Path, Path]:
    """Store a full space-time solution; returns (meta path, data path)."""
    times, _, _ = sol.grid.axes(sol.spec)
    return _write(Path(base), sol.spec, times, sol.values, noise, sol.grid)


def write_snapshot(field: np.ndarray, t: float, spec: DomainSpec, base,
                   noise: NoiseSpec | None = None) -> tuple[Path, Path]:
    """Store a single-time (nx, ny) field."""
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise FieldFormatError("snapshot must be a 2-D (nx, ny) field")
    return _write(Path(base), spec, [t], field[None, :, :], noise, None)


def read_field(base) -> FieldFile:
    """Read either a full solution or a snapshot; verifies the checksum."""
    base = Path(base)
    meta_path = base.with_suffix(base.suffix + ".meta.json")
    data_path = base.with_suffix(base.suffix + ".f64")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") != FORMAT_NAME:
        raise FieldFormatError(f"{meta_path} is not a {FORMAT_NAME} file")
    raw = data_path.read_bytes()
    if checksum_bytes(raw) != meta["checksum"]:
        raise FieldFormatError(f"checksum mismatch for {data_path}")
    values = np.frombuffer(raw, dtype="<f8").reshape(meta["shape"]).astype(np.float64)
    spec = DomainSpec(**meta["domain"])
    noise = NoiseSpec(**meta["noise"]) if meta.get("noise") else None
    shape = meta["shape"]
    return FieldFile(
        spec=spec,
        nx=shape[1],
        ny=shape[2],
        times=np.asarray(meta["times"], dtype=np.float64),
        values=values,
        noise=noise,
    )


def read_solution(base) -> GridSolution:
    """Read a full space-time solution back into a GridSolution."""
    base = Path(base)
    meta = json.loads(base.with_suffix(base.suffix + ".meta.json").read_text())
    if not meta.get("grid"):
        raise FieldFormatError(f"{base} has no grid metadata; not a full solution")
    ff = read_field(base)
    grid = GridSpec(**meta["grid"])
    return GridSolution(spec=ff.spec, grid=grid, values=ff.values)


def write_csv(sol: GridSolution, path, level: int | None = None) -> Path:
    """Inspection CSV with header ``t,x,y,u`` (one level or all levels)."""
    path = Path(path)
    times, xs, ys = sol.grid.axes(sol.spec)
    levels = range(sol.grid.nt + 1) if level is None else [level]
    with path.open("w") as fh:
        fh.write("t,x,y,u\n")
        for k in levels:
            t = times[k]
            for i, x in enumerate(xs):
                for j, y in enumerate(ys):
                    fh.write(f"{t:.17g},{x:.17g},{y:.17g},{sol.values[k, i, j]:.17g}\n")
    return path
