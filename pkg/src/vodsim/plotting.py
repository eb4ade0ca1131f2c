"""Rendering of sweep results to PNG figures next to the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _series_label(row: dict, split_t_r: bool) -> str:
    label = str(row["strategy"])
    if split_t_r and row.get("t_r_max", "") != "":
        label += f" t_r={row['t_r_max']}"
    return label


def render_metric_sweep(rows: list[dict], axis_key: str, metric: str, path) -> bool:
    """Mean +/- stdev of one metric against the swept axis, one line per
    strategy (split further by t_r_max when several were swept)."""
    data = [r for r in rows if r["metric"] == metric and r.get(axis_key, "") != ""]
    if not data:
        return False
    t_r_values = {r.get("t_r_max", "") for r in data}
    split = len(t_r_values) > 1
    series: dict[str, list] = {}
    for row in data:
        series.setdefault(_series_label(row, split), []).append(row)
    if all(len(points) < 2 for points in series.values()):
        return False

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label in sorted(series):
        points = sorted(series[label], key=lambda r: float(r[axis_key]))
        xs = [float(r[axis_key]) for r in points]
        ys = [float(r["mean"]) for r in points]
        errs = [float(r["stdev"] or 0.0) for r in points]
        ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=2.5, label=label)
    ax.set_xlabel(axis_key)
    ax.set_ylabel(metric.replace("_", " "))
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def render_per_content(rows: list[dict], path) -> bool:
    """Per-content loss rate against popularity rank, one line per sweep point."""
    data = [r for r in rows if str(r["metric"]).startswith("content_loss_")]
    if not data:
        return False
    series: dict[str, list] = {}
    for row in data:
        label = f"{row['strategy']} B={row['box_count']}"
        series.setdefault(label, []).append(row)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label in sorted(series):
        points = sorted(series[label], key=lambda r: int(str(r["metric"]).rsplit("_", 1)[1]))
        xs = [int(str(r["metric"]).rsplit("_", 1)[1]) for r in points]
        ys = [float(r["mean"]) for r in points]
        ax.plot(xs, ys, label=label, linewidth=1.0)
    ax.set_xlabel("content popularity rank")
    ax.set_ylabel("loss rate")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True
