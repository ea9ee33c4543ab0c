"""Render analytics job results to files: delimited summary plus figures.

Each completed job becomes a ``result.csv`` (key,value rows; vector
entries exploded with indexed keys) and, where the result has a natural
picture, a PNG next to it: cluster scatter for k-means, coefficient bars
for the regressions, an F-statistic annotated group chart for ANOVA.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .analytics import render_value  # noqa: E402


def _flatten(prefix: str, value, rows: list):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, value))


def write_result_csv(job: dict, path: str):
    rows: list[tuple[str, object]] = []
    _flatten("", job, rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("key,value\n")
        for key, value in rows:
            text = render_value(value).strip('"')
            if "," in text or '"' in text:
                text = '"' + text.replace('"', '""') + '"'
            fh.write(f"{key},{text}\n")


def _figure_kmeans(result: dict, path: str):
    centroids = result.get("centroids", [])
    assignments = result.get("assignments", [])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if centroids and len(centroids[0]) >= 2:
        xs = [c[0] for c in centroids]
        ys = [c[1] for c in centroids]
        ax.scatter(xs, ys, marker="x", s=120, c="black", label="centroids", zorder=3)
        ax.set_xlabel("dim 0")
        ax.set_ylabel("dim 1")
    counts = {}
    for a in assignments:
        counts[a] = counts.get(a, 0) + 1
    if counts and not (centroids and len(centroids[0]) >= 2):
        ax.bar(list(counts.keys()), list(counts.values()))
        ax.set_xlabel("cluster")
        ax.set_ylabel("points")
    ax.set_title(f"k-means, inertia {result.get('inertia', float('nan')):.6g}")
    if centroids and len(centroids[0]) >= 2:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _figure_coefficients(result: dict, path: str, title: str):
    coefs = result.get("coefficients", [])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.bar(range(len(coefs)), coefs)
    ax.set_xticks(range(len(coefs)))
    ax.set_xticklabels(["intercept"] + [f"b{i}" for i in range(1, len(coefs))])
    ax.axhline(0, color="black", linewidth=0.8)
    ax.set_ylabel("coefficient")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _figure_anova(result: dict, path: str):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    f = result.get("f_statistic")
    p = result.get("p_value")
    ax.bar(["between", "within"],
           [result.get("df_between", 0), result.get("df_within", 0)])
    ax.set_ylabel("degrees of freedom")
    ax.set_title(f"one-way ANOVA: F = {f:.6g}, p = {p:.3g}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_job_report(job: dict, out_dir: str) -> list[str]:
    """Write the delimited summary and figures for a finished job.

    Returns the written paths.  Jobs without a result (still queued,
    running, or failed) only produce the summary.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    csv_path = os.path.join(out_dir, "result.csv")
    write_result_csv(job, csv_path)
    written.append(csv_path)
    result = job.get("result")
    if not result:
        return written
    kind = job.get("kind")
    fig_path = os.path.join(out_dir, f"{kind}.png")
    if kind == "kmeans":
        _figure_kmeans(result, fig_path)
    elif kind in ("ols", "logistic"):
        _figure_coefficients(result, fig_path, kind)
    elif kind == "anova":
        _figure_anova(result, fig_path)
    else:
        return written
    written.append(fig_path)
    return written
