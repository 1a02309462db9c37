"""Chart data and rendering for the simulator's CSV outputs.

Everything plotted is derived from the CSV bytes alone; nothing is
recomputed from the simulator. Convergence curves use a trailing moving
average over full windows: with window w and burn-in skip, the k-th smoothed
point is mean(x[skip + k : skip + k + w]) drawn at episode index
skip + k + w - 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

CURVE_COLUMNS = ["episode", "op", "train_reward", "actor_loss", "critic_loss"]

COMPARISON_METRICS = ["reward", "reb_cost", "reb_trips", "served",
                      "mean_rho", "mean_wait_min", "mean_queue"]


class SchemaError(ValueError):
    """Input CSV does not carry the documented columns."""


@dataclass
class PlotSpec:
    inputs: list[str | Path]
    out_path: str | Path
    window: int = 30
    skip: int = 5000
    value_column: str = "train_reward"

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.skip < 0:
            raise ValueError("skip must be >= 0")


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a harness CSV ('#' comment lines allowed) into string columns."""
    lines = [l for l in Path(path).read_text().splitlines()
             if l.strip() and not l.startswith("#")]
    if not lines:
        raise SchemaError(f"{path} holds no data")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    if any(len(r) != len(header) for r in rows):
        raise SchemaError(f"{path} has ragged rows")
    return {name: np.array([r[i] for r in rows]) for i, name in enumerate(header)}


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over full windows; window 1 reproduces the series.

    Computed as the mean of each window slice (not a convolution), so the
    result matches a hand-computed values[k:k+window].mean() bit-for-bit."""
    if len(values) < window:
        return np.empty(0)
    return np.lib.stride_tricks.sliding_window_view(values, window).mean(axis=-1)


def convergence_series(spec: PlotSpec) -> dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]:
    """(input label, operator) -> (episode axis, smoothed values)."""
    series = {}
    for path in spec.inputs:
        table = read_csv(path)
        for col in ("episode", "op", spec.value_column):
            if col not in table:
                raise SchemaError(f"{path} is missing column '{col}'")
        label = Path(path).parent.name or Path(path).stem
        episodes = table["episode"].astype(int)
        values = table[spec.value_column].astype(float)
        for op in sorted(set(table["op"])):
            mask = table["op"] == op
            eps, vals = episodes[mask], values[mask]
            order = np.argsort(eps, kind="stable")
            eps, vals = eps[order], vals[order]
            keep = eps >= spec.skip
            eps, vals = eps[keep], vals[keep]
            smoothed = moving_average(vals, spec.window)
            if smoothed.size == 0:
                raise SchemaError(
                    f"{path}: no data left for operator {op} after skipping "
                    f"{spec.skip} episodes with window {spec.window}")
            axis = eps[spec.window - 1:]
            series[(label, str(op))] = (axis, smoothed)
    return series


def plot_convergence(spec: PlotSpec) -> Path:
    """One smoothed line per (input, operator); returns the image path."""
    series = convergence_series(spec)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for (label, op), (axis, values) in sorted(series.items()):
        ax.plot(axis, values, label=f"{label} op{op}", linewidth=1.4)
    ax.set_xlabel("episode")
    ax.set_ylabel(spec.value_column)
    ax.set_title(f"training curves (window {spec.window}, first {spec.skip} skipped)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=120)
    plt.close(fig)
    return Path(spec.out_path)


def comparison_data(spec: PlotSpec) -> dict[str, dict[str, dict[str, float]]]:
    """metric -> operator label -> {mean, sd} across runs, straight from the CSV."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    for path in spec.inputs:
        table = read_csv(path)
        missing = [m for m in COMPARISON_METRICS + ["op"] if m not in table]
        if missing:
            raise SchemaError(f"{path} is missing columns {missing}")
        for metric in COMPARISON_METRICS:
            values = table[metric].astype(float)
            bucket = out.setdefault(metric, {})
            for op in sorted(set(table["op"])):
                vals = values[table["op"] == op]
                label = op if len(spec.inputs) == 1 else f"{Path(path).parent.name}:{op}"
                bucket[label] = {
                    "mean": float(vals.mean()),
                    "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                }
    return out


def plot_comparison(spec: PlotSpec) -> Path:
    """Grouped bars with sd whiskers, one panel per metric."""
    data = comparison_data(spec)
    metrics = [m for m in COMPARISON_METRICS if m in data]
    cols = 3
    rows = (len(metrics) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.6 * rows), squeeze=False)
    for k, metric in enumerate(metrics):
        ax = axes[k // cols][k % cols]
        labels = sorted(data[metric])
        means = [data[metric][l]["mean"] for l in labels]
        sds = [data[metric][l]["sd"] for l in labels]
        ax.bar(range(len(labels)), means, yerr=sds, capsize=3,
               color="#4878a8", edgecolor="black", linewidth=0.5)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, fontsize=8)
        ax.set_title(metric, fontsize=9)
    for k in range(len(metrics), rows * cols):
        axes[k // cols][k % cols].axis("off")
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=120)
    plt.close(fig)
    return Path(spec.out_path)
