"""Standalone SVG renderers for the metrics CSVs.

Output is byte-deterministic for fixed input: the SVG id hash salt is
pinned and the date metadata is stripped.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "vredge"

import matplotlib.pyplot as plt  # noqa: E402


class SchemaError(Exception):
    """CSV header does not match what the chart kind expects."""


def _read_rows(csv_path: Path) -> tuple[list[str], list[list[str]]]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise SchemaError(f"{csv_path}: empty file")
    return rows[0], rows[1:]


def _require(header: list[str], expected: list[str], kind: str) -> None:
    if header[:len(expected)] != expected:
        raise SchemaError(
            f"{kind} plot expects columns {expected}, got {header}")


def _save(fig, out_svg: Path) -> None:
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_box(csv_path: Path, out_svg: Path) -> None:
    """Per-flow delay boxes with outlier dots, from delay_boxes.csv."""
    header, rows = _read_rows(csv_path)
    _require(header, ["flow_id", "min_us", "q1_us", "median_us", "q3_us",
                      "max_us"], "box")
    stats = []
    for row in rows:
        outliers = [float(x) / 1000.0 for x in row[6:] if x]
        stats.append({
            "label": f"flow {row[0]}",
            "whislo": float(row[1]) / 1000.0,
            "q1": float(row[2]) / 1000.0,
            "med": float(row[3]) / 1000.0,
            "q3": float(row[4]) / 1000.0,
            "whishi": float(row[5]) / 1000.0,
            "fliers": outliers,
        })
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bxp(stats, showfliers=True)
    ax.set_ylabel("one-way delay (ms)")
    ax.set_xlabel("flow")
    ax.grid(True, axis="y", alpha=0.4)
    _save(fig, out_svg)


def plot_cdf(csv_path: Path, out_svg: Path) -> None:
    """Step CDF of per-bin egress load, from load_cdf.csv."""
    header, rows = _read_rows(csv_path)
    _require(header, ["bin_bytes", "cum_fraction"], "cdf")
    xs = [int(r[0]) / 1024.0 for r in rows]
    ys = [float(r[1]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(xs, ys, where="post")
    ax.set_xlabel("bytes per bin (KiB)")
    ax.set_ylabel("cumulative fraction")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.4)
    _save(fig, out_svg)


def plot_bars(csv_path: Path, out_svg: Path) -> None:
    """Grouped satisfaction bars per flow count, from sweep_summary.csv."""
    header, rows = _read_rows(csv_path)
    _require(header, ["cc", "flows", "satisfaction_rate"], "bars")
    by_cc: dict[str, dict[int, float]] = {}
    flow_counts: set[int] = set()
    for row in rows:
        if len(row) < 3 or row[2] == "":
            continue
        cc, flows, rate = row[0], int(row[1]), float(row[2])
        by_cc.setdefault(cc, {})[flows] = rate
        flow_counts.add(flows)
    counts = sorted(flow_counts)
    ccs = sorted(by_cc)
    width = 0.8 / max(len(ccs), 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, cc in enumerate(ccs):
        xs = [c + (i - (len(ccs) - 1) / 2) * width for c in counts]
        ys = [100.0 * by_cc[cc].get(c, 0.0) for c in counts]
        ax.bar(xs, ys, width=width, label=cc)
    ax.set_xticks(counts)
    ax.set_xlabel("concurrent flows")
    ax.set_ylabel("satisfied clients (%)")
    ax.set_ylim(0, 105)
    ax.legend()
    ax.grid(True, axis="y", alpha=0.4)
    _save(fig, out_svg)


PLOTTERS = {"box": plot_box, "cdf": plot_cdf, "bars": plot_bars}


def plot(csv_path: Path, kind: str, out_svg: Path) -> None:
    if kind not in PLOTTERS:
        raise SchemaError(f"unknown plot kind {kind!r}; choose from box|bars|cdf")
    PLOTTERS[kind](Path(csv_path), Path(out_svg))
