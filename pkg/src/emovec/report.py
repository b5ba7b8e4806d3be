"""Experiment report rendering: JSON, aligned text table, CSV, and figures.

`save_report_bundle` writes every format next to each other so one --out
stem produces the machine-readable report, the delimited confusion matrix,
and the rendered PNG figures in a single step.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _fmt_pct(value) -> str:
    return "-" if value is None else f"{value:.2f}"


def render_text_table(report: dict) -> str:
    """Aligned confusion table with per-class and overall accuracy."""
    classes = report["classes"]
    counts = np.asarray(report["confusion"], dtype=np.int64)
    per_class = report["per_class_pct"]

    header = ["true \\ pred"] + classes + ["total", "acc%"]
    rows = [header]
    for i, cls in enumerate(classes):
        rows.append(
            [cls]
            + [str(int(c)) for c in counts[i]]
            + [str(int(counts[i].sum())), _fmt_pct(per_class[i])]
        )
    widths = [max(len(r[j]) for r in rows) for j in range(len(header))]
    lines = [
        f"scheme: {report['scheme']}   overall: {_fmt_pct(report['overall_pct'])}%"
        f"   (n={int(counts.sum())})"
    ]
    for r in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def render_csv(report: dict) -> str:
    """Delimited confusion matrix plus accuracy columns."""
    classes = report["classes"]
    counts = np.asarray(report["confusion"], dtype=np.int64)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["class"] + classes + ["total", "accuracy_pct"])
    for i, cls in enumerate(classes):
        acc = report["per_class_pct"][i]
        writer.writerow(
            [cls] + [int(c) for c in counts[i]] + [int(counts[i].sum()), "" if acc is None else acc]
        )
    writer.writerow(["overall"] + [""] * len(classes) + [int(counts.sum()), report["overall_pct"]])
    return out.getvalue()


def render_figures(report: dict, out_stem: str | Path) -> list[Path]:
    """Confusion heatmap and per-class accuracy bars as PNG files."""
    out_stem = Path(out_stem)
    classes = report["classes"]
    counts = np.asarray(report["confusion"], dtype=np.int64)
    paths = []

    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * len(classes), 0.8 + 0.8 * len(classes)))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(len(classes)), classes, rotation=45, ha="right")
    ax.set_yticks(range(len(classes)), classes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{report['scheme']}: overall {_fmt_pct(report['overall_pct'])}%")
    threshold = counts.max() / 2 if counts.size else 0
    for i in range(len(classes)):
        for j in range(len(classes)):
            ax.text(
                j, i, str(int(counts[i, j])), ha="center", va="center",
                color="white" if counts[i, j] > threshold else "black",
            )
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    confusion_png = out_stem.with_name(out_stem.name + "_confusion.png")
    fig.savefig(confusion_png, dpi=120)
    plt.close(fig)
    paths.append(confusion_png)

    fig, ax = plt.subplots(figsize=(1.5 + 0.7 * len(classes), 3.2))
    values = [p if p is not None else 0.0 for p in report["per_class_pct"]]
    ax.bar(range(len(classes)), values, color="tab:blue")
    ax.set_xticks(range(len(classes)), classes, rotation=45, ha="right")
    ax.set_ylim(0, 105)
    ax.set_ylabel("accuracy (%)")
    ax.set_title("per-class accuracy")
    if report["overall_pct"] is not None:
        ax.axhline(report["overall_pct"], color="tab:red", linestyle="--", linewidth=1,
                   label=f"overall {_fmt_pct(report['overall_pct'])}%")
        ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    accuracy_png = out_stem.with_name(out_stem.name + "_accuracy.png")
    fig.savefig(accuracy_png, dpi=120)
    plt.close(fig)
    paths.append(accuracy_png)
    return paths


def report_json_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()


def strip_timing(report: dict) -> dict:
    """Copy of the report without wall-clock fields (for byte comparisons)."""
    return {k: v for k, v in report.items() if k != "wall_clock_sec"}


def save_report_bundle(report: dict, out_stem: str | Path) -> dict[str, Path]:
    """Write <stem>.json/.txt/.csv plus the PNG figures; returns the paths."""
    out_stem = Path(out_stem)
    out_stem.parent.mkdir(parents=True, exist_ok=True)
    json_path = out_stem.with_suffix(".json")
    json_path.write_bytes(report_json_bytes(report))
    txt_path = out_stem.with_suffix(".txt")
    txt_path.write_text(render_text_table(report))
    csv_path = out_stem.with_suffix(".csv")
    csv_path.write_text(render_csv(report))
    figures = render_figures(report, out_stem)
    return {
        "json": json_path,
        "txt": txt_path,
        "csv": csv_path,
        "confusion_png": figures[0],
        "accuracy_png": figures[1],
    }
