"""Render report figures and delimited companions for summaries, evaluations,
ablations and training histories. Figures go to PNG files; each report also
writes a CSV next to them.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def _short(label: str) -> str:
    return label if len(label) <= 18 else label[:16] + "…"


# ---------------------------------------------------------------------------
# Dataset summary
# ---------------------------------------------------------------------------

def save_summary_report(summary: dict, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    counts = summary["class_counts"]
    labels = list(counts)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.bar(range(len(labels)), [counts[k] for k in labels], color="#4878b0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([_short(k) for k in labels], rotation=30, ha="right")
    ax.set_ylabel("subjects")
    ax.set_title(f"Disorder distribution (n={summary['n_records']})")
    written.append(_finish(fig, outdir / "class_distribution.png"))

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for ax, key, title in (
        (axes[0], "age_hist", "Age"),
        (axes[1], "iq_hist", "IQ"),
    ):
        hist = summary[key]
        edges = np.asarray(hist["edges"])
        ax.bar(edges[:-1], hist["counts"], width=np.diff(edges), align="edge",
               color="#6aa84f", edgecolor="white")
        ax.set_title(title)
        ax.set_ylabel("subjects")
    sex = summary["sex_by_class"]
    x = np.arange(len(labels))
    width = 0.4
    axes[2].bar(x - width / 2, [sex[k]["female"] for k in labels], width, label="female")
    axes[2].bar(x + width / 2, [sex[k]["male"] for k in labels], width, label="male")
    axes[2].set_xticks(x)
    axes[2].set_xticklabels([_short(k)[:8] for k in labels], rotation=45, ha="right", fontsize=7)
    axes[2].set_title("Sex by class")
    axes[2].legend(fontsize=7)
    written.append(_finish(fig, outdir / "demographics.png"))

    brp = summary["band_region_power"]
    bands = list(brp)
    regions = summary["regions"]
    grid = np.array([[brp[b][r] for r in regions] for b in bands])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(grid, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(regions)), regions, rotation=30, ha="right")
    ax.set_yticks(range(len(bands)), bands)
    ax.set_title("Mean band power by region (uV^2)")
    fig.colorbar(im, ax=ax, shrink=0.85)
    written.append(_finish(fig, outdir / "band_region_power.png"))

    csv_path = outdir / "class_counts.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["disorder", "count"])
        for k in labels:
            writer.writerow([k, counts[k]])
    written.append(csv_path)
    return written


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _confusion_figure(report: dict, title: str):
    matrix = np.asarray(report["confusion_matrix"])
    labels = report["labels"]
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(len(labels)), [_short(x) for x in labels], rotation=40, ha="right", fontsize=7)
    ax.set_yticks(range(len(labels)), [_short(x) for x in labels], fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    threshold = matrix.max() / 2 if matrix.max() else 0.5
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, str(matrix[i, j]), ha="center", va="center", fontsize=7,
                    color="white" if matrix[i, j] > threshold else "black")
    ax.set_title(f"{title} (accuracy {report['accuracy']:.3f})")
    fig.colorbar(im, ax=ax, shrink=0.8)
    return fig


def _metric_bars_figure(report: dict, title: str):
    labels = report["labels"]
    x = np.arange(len(labels))
    width = 0.27
    fig, ax = plt.subplots(figsize=(8.5, 4.2))
    for offset, metric in zip((-width, 0.0, width), ("precision", "recall", "f1")):
        vals = [report["per_class"][lab][metric] for lab in labels]
        ax.bar(x + offset, vals, width, label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels([_short(lab) for lab in labels], rotation=30, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title(title)
    return fig


def _metrics_csv(report: dict, path: Path, arm: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["disorder", "precision", "recall", "f1", "support"]
        if arm:
            header.insert(0, "arm")
        writer.writerow(header)
        for lab in report["labels"]:
            stats = report["per_class"][lab]
            row = [lab, f"{stats['precision']:.4f}", f"{stats['recall']:.4f}",
                   f"{stats['f1']:.4f}", stats["support"]]
            if arm:
                row.insert(0, arm)
            writer.writerow(row)


def save_evaluation_report(report: dict, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [
        _finish(_confusion_figure(report, "Confusion matrix"), outdir / "confusion_matrix.png"),
        _finish(_metric_bars_figure(report, "Per-class metrics"), outdir / "metric_bars.png"),
    ]
    csv_path = outdir / "metrics.csv"
    _metrics_csv(report, csv_path)
    written.append(csv_path)
    return written


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

def save_ablation_report(report: dict, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    with_r = report["with_coherence"]
    without_r = report["without_coherence"]

    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].bar(["with", "without"],
                [with_r["accuracy"], without_r["accuracy"]],
                color=["#4878b0", "#b04848"])
    axes[0].set_ylim(0, 1.05)
    axes[0].set_title(f"Accuracy (delta {report['accuracy_delta']:+.3f})")
    labels = with_r["labels"]
    x = np.arange(len(labels))
    axes[1].bar(x - 0.2, [with_r["per_class"][k]["f1"] for k in labels], 0.4, label="with")
    axes[1].bar(x + 0.2, [without_r["per_class"][k]["f1"] for k in labels], 0.4, label="without")
    axes[1].set_xticks(x)
    axes[1].set_xticklabels([_short(k)[:10] for k in labels], rotation=40, ha="right", fontsize=7)
    axes[1].set_ylim(0, 1.05)
    axes[1].set_title("Per-class F1")
    axes[1].legend(fontsize=8)
    written.append(_finish(fig, outdir / "ablation_comparison.png"))

    written.append(
        _finish(_confusion_figure(with_r, "With coherence"), outdir / "confusion_with.png")
    )
    written.append(
        _finish(_confusion_figure(without_r, "Without coherence"), outdir / "confusion_without.png")
    )

    csv_path = outdir / "ablation_metrics.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "disorder", "precision", "recall", "f1", "support"])
        for arm, rep in (("with_coherence", with_r), ("without_coherence", without_r)):
            for lab in rep["labels"]:
                stats = rep["per_class"][lab]
                writer.writerow([arm, lab, f"{stats['precision']:.4f}",
                                 f"{stats['recall']:.4f}", f"{stats['f1']:.4f}",
                                 stats["support"]])
    written.append(csv_path)
    return written


# ---------------------------------------------------------------------------
# Training history
# ---------------------------------------------------------------------------

def save_history_report(history: Sequence[dict], outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    epochs = [h["epoch"] for h in history]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    axes[0].plot(epochs, [h["train_loss"] for h in history], label="train")
    if history and "val_loss" in history[0]:
        axes[0].plot(epochs, [h["val_loss"] for h in history], label="validation")
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("loss")
    axes[0].legend(fontsize=8)
    axes[1].plot(epochs, [h["train_accuracy"] for h in history], label="train")
    if history and "val_accuracy" in history[0]:
        axes[1].plot(epochs, [h["val_accuracy"] for h in history], label="validation")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("accuracy")
    axes[1].set_ylim(0, 1.05)
    axes[1].legend(fontsize=8)
    written = [_finish(fig, outdir / "training_curves.png")]

    csv_path = outdir / "history.csv"
    keys = list(history[0].keys()) if history else ["epoch"]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for h in history:
            writer.writerow([h.get(k, "") for k in keys])
    written.append(csv_path)
    return written
