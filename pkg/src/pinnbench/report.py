"""Render training-run artifacts to figure files.

Works purely from what a run leaves on disk -- snapshot field pairs and
trace CSVs -- so reports can be regenerated at any time without re-running
anything.  Each scenario gets a four-panel field comparison (clean IC,
network IC, reference and network at the final time) and one loss-history
figure per optimizer stage, written next to the delimited output.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .fieldio import read_field

__all__ = ["render_fields_figure", "render_loss_figure", "render_run_report"]

_PANEL_TAGS = [
    ("clean_ic", "Clean IC (t=0)"),
    ("pinn_ic", "PINN IC (t=0)"),
    ("fdm_tfinal", "FDM (t=t_final)"),
    ("pinn_tfinal", "PINN (t=t_final)"),
]


def render_fields_figure(out_dir: Path, tag: str) -> Path | None:
    """Four-panel comparison for one scenario; None if snapshots are absent."""
    out_dir = Path(out_dir)
    fields = {}
    for suffix, _ in _PANEL_TAGS:
        base = out_dir / f"field_{tag}_{suffix}"
        if base.with_suffix(base.suffix + ".meta.json").exists():
            fields[suffix] = read_field(base)
    if len(fields) < len(_PANEL_TAGS):
        return None

    first = next(iter(fields.values()))
    extent = (0.0, first.spec.x_max, 0.0, first.spec.y_max)
    vmax = max(float(f.values.max()) for f in fields.values())
    fig, axes = plt.subplots(2, 2, figsize=(9, 8), constrained_layout=True)
    for ax, (suffix, title) in zip(axes.ravel(), _PANEL_TAGS):
        ff = fields[suffix]
        im = ax.imshow(ff.single_level().T, origin="lower", extent=extent,
                       vmin=0.0, vmax=vmax, cmap="viridis", aspect="equal")
        ax.set_title(f"{title}  [t={ff.times[0]:g}]", fontsize=10)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.suptitle(tag, fontsize=11)
    path = out_dir / f"report_{tag}_fields.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_loss_figure(trace_csv: Path) -> Path | None:
    """Semilog loss history (total + components) for one optimizer stage."""
    trace_csv = Path(trace_csv)
    iters, total, physics, ic, data = [], [], [], [], []
    with trace_csv.open() as fh:
        for row in csv.DictReader(fh):
            iters.append(int(row["iter"]))
            total.append(float(row["loss"]))
            physics.append(float(row["physics"]) if row["physics"] else np.nan)
            ic.append(float(row["ic"]) if row["ic"] else np.nan)
            data.append(float(row["data"]) if row["data"] else np.nan)
    if not iters:
        return None

    fig, ax = plt.subplots(figsize=(7, 4.5), constrained_layout=True)
    ax.semilogy(iters, total, color="black", lw=1.2, label="total")
    if not all(np.isnan(physics)):
        ax.semilogy(iters, physics, lw=0.8, alpha=0.8, label="physics")
        ax.semilogy(iters, ic, lw=0.8, alpha=0.8, label="ic")
        ax.semilogy(iters, data, lw=0.8, alpha=0.8, label="data")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title(trace_csv.stem, fontsize=10)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    path = trace_csv.with_name(trace_csv.stem.replace("trace_", "report_") + ".png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_run_report(out_dir) -> list[Path]:
    """Render every figure derivable from one output directory (recursively)."""
    out_dir = Path(out_dir)
    produced: list[Path] = []
    tags = set()
    for meta in sorted(out_dir.rglob("field_*_clean_ic.meta.json")):
        name = meta.name[len("field_"):-len("_clean_ic.meta.json")]
        tags.add((meta.parent, name))
    for parent, tag in sorted(tags):
        path = render_fields_figure(parent, tag)
        if path:
            produced.append(path)
    for trace in sorted(out_dir.rglob("trace_*.csv")):
        path = render_loss_figure(trace)
        if path:
            produced.append(path)
    return produced
