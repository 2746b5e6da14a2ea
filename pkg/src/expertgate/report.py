"""CSV report writers and the matplotlib figures rendered alongside them."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

MULTI_EXPERT_FOOTNOTE = ("# note: multi-expert mode reports every activated "
                         "expert's label; only the routed task's label is scored")


def write_routing_csv(results, task_names, path) -> None:
    """One row per sample: sample_id, er_*, p_*, selected, activated set."""
    k = len(task_names)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["sample_id"]
                        + [f"er_{name}" for name in task_names]
                        + [f"p_{name}" for name in task_names]
                        + ["selected", "activated"])
        for sample_id, res in enumerate(results):
            d = res.routing
            writer.writerow(
                [sample_id]
                + [f"{e:.8f}" for e in d.errors]
                + [f"{p:.8f}" for p in d.probabilities]
                + [d.selected, "|".join(str(i) for i in d.activated)])


def render_routing_figure(results, task_names, path) -> None:
    """Routing probabilities per sample as a heatmap, argmin marked."""
    probs = np.array([r.routing.probabilities for r in results])
    fig, ax = plt.subplots(figsize=(8, max(2.5, 0.4 * len(task_names))))
    im = ax.imshow(probs.T, aspect="auto", cmap="viridis", vmin=0, vmax=1,
                   interpolation="nearest")
    ax.set_yticks(range(len(task_names)), task_names)
    ax.set_xlabel("sample")
    ax.set_ylabel("gate")
    ax.set_title("routing probabilities")
    fig.colorbar(im, ax=ax, label="p")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_bench_csv(report, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["method"] + report.task_names + ["avg"])
        for method, accs in report.methods.items():
            writer.writerow([method] + [f"{a:.6f}" for a in accs]
                            + [f"{report.average(method):.6f}"])
        writer.writerow(["GateSelection", f"{report.gate_selection_accuracy:.6f}"])
        writer.writerow(["DiscriminativeSelection",
                         f"{report.discriminative_selection_accuracy:.6f}"])
        for size in sorted(report.sweep):
            writer.writerow([f"DiscriminativeSelection@{size}",
                             f"{report.sweep[size]:.6f}"])
        f.write(MULTI_EXPERT_FOOTNOTE + "\n")


def render_bench_figures(report, out_prefix) -> list:
    """Accuracy bars per method plus the stored-sample sweep curve."""
    out_prefix = Path(out_prefix)
    paths = []

    methods = list(report.methods)
    k = len(report.task_names)
    fig, ax = plt.subplots(figsize=(1.6 * k + 3, 4.5))
    width = 0.8 / len(methods)
    xs = np.arange(k)
    for j, method in enumerate(methods):
        ax.bar(xs + j * width, report.methods[method], width, label=method)
    ax.set_xticks(xs + 0.4 - width / 2, report.task_names)
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title("per-task accuracy by method")
    ax.legend(fontsize=8, ncols=2)
    fig.tight_layout()
    p = out_prefix.with_name(out_prefix.stem + "_methods.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    if report.sweep:
        sizes = sorted(report.sweep)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(sizes, [report.sweep[s] for s in sizes], "o-",
                label="discriminative classifier")
        ax.axhline(report.gate_selection_accuracy, color="tab:red", ls="--",
                   label="autoencoder gate")
        ax.set_xscale("log")
        ax.set_xlabel("stored samples per task")
        ax.set_ylabel("task-selection accuracy")
        ax.set_title("gate vs discriminative classifier")
        ax.legend()
        fig.tight_layout()
        p = out_prefix.with_name(out_prefix.stem + "_sweep.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)

    fig, ax = plt.subplots(figsize=(4.5, 4))
    conf = report.gate_confusion
    norm = conf / np.maximum(conf.sum(axis=1, keepdims=True), 1)
    im = ax.imshow(norm, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(k), report.task_names, rotation=45, ha="right")
    ax.set_yticks(range(k), report.task_names)
    ax.set_xlabel("selected")
    ax.set_ylabel("true task")
    ax.set_title("gate confusion")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    p = out_prefix.with_name(out_prefix.stem + "_confusion.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths


def format_report_table(report) -> str:
    """Human-readable accuracy table for stdout."""
    headers = ["method"] + report.task_names + ["avg"]
    rows = [[m] + [f"{a:.3f}" for a in accs] + [f"{report.average(m):.3f}"]
            for m, accs in report.methods.items()]
    widths = [max(len(str(r[i])) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))
    lines.append(f"gate selection accuracy: {report.gate_selection_accuracy:.4f}")
    lines.append("discriminative selection accuracy: "
                 f"{report.discriminative_selection_accuracy:.4f}")
    lines.append(MULTI_EXPERT_FOOTNOTE.lstrip("# "))
    return "\n".join(lines)
