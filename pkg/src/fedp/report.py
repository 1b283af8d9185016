"""CSV and figure output for run and throughput reports.

Each report writes a delimited file and a PNG figure next to it and
returns both paths.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import RecordOutcome, RunSummary
from .perf import PerfRow

__all__ = ["write_perf_report", "write_run_report"]


def write_perf_report(
    rows: Sequence[PerfRow], outdir: str | Path, stem: str = "throughput"
) -> tuple[Path, Path]:
    """Throughput comparison: CSV plus a grouped bar chart."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{stem}.csv"
    png_path = outdir / f"{stem}.png"

    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PerfRow._fields)
        for r in rows:
            writer.writerow(r)

    names = []
    for r in rows:
        if r.name not in names:
            names.append(r.name)

    fig, ax = plt.subplots(figsize=(7, 4))
    if len(names) < len(rows):
        # scaling grid: one single-cycle curve per backend over issue width
        for name in names:
            series = [r for r in rows if r.name == name]
            ax.plot(
                [r.flops_per_issue for r in series],
                [r.single_cycle_gflops for r in series],
                marker="o",
                label=name,
            )
        ax.set_xlabel("FLOPs per issue")
        ax.set_title("Single-cycle throughput scaling")
    else:
        x = range(len(rows))
        width = 0.38
        ax.bar(
            [i - width / 2 for i in x],
            [r.single_cycle_gflops for r in rows],
            width,
            label="single-cycle",
        )
        ax.bar(
            [i + width / 2 for i in x],
            [r.filled_gflops for r in rows],
            width,
            label="filled pipeline",
        )
        ax.set_xticks(list(x))
        ax.set_xticklabels(
            [f"{r.name}\n{r.flops_per_issue} FLOP" for r in rows], fontsize=8
        )
        ax.set_title("Dot-product unit throughput")
    ax.set_ylabel("GFLOPS")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return csv_path, png_path


def write_run_report(
    outcomes: Sequence[RecordOutcome],
    summary: RunSummary,
    outdir: str | Path,
    stem: str = "run",
) -> tuple[Path, Path]:
    """Per-record results: CSV plus a deviation histogram."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{stem}.csv"
    png_path = outdir / f"{stem}.png"

    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "got", "expected", "ok", "bit_exact", "lossless", "ulp", "window_rescued"])
        for o in outcomes:
            writer.writerow(
                [o.index, f"{o.got:08x}", f"{o.expected:08x}", int(o.ok), int(o.bit_exact), int(o.lossless), o.ulp, int(o.window_rescued)]
            )

    # power-of-two buckets: deep-cancellation deviations span many decades
    buckets: dict[int, int] = {}
    for o in outcomes:
        if o.ulp >= 1 << 32:
            continue
        buckets[o.ulp.bit_length()] = buckets.get(o.ulp.bit_length(), 0) + 1
    fig, ax = plt.subplots(figsize=(6, 4))
    if buckets:
        keys = sorted(buckets)
        labels = ["exact" if k == 0 else f"<2^{k}" for k in keys]
        ax.bar(range(len(keys)), [buckets[k] for k in keys])
        ax.set_xticks(range(len(keys)))
        ax.set_xticklabels(labels, fontsize=8, rotation=45)
        ax.set_yscale("log")
    ax.set_xlabel("deviation from oracle (steps)")
    ax.set_ylabel("records")
    ax.set_title(
        f"bit-exact {summary.bit_exact_fraction:.2%} of {summary.total}, "
        f"worst {summary.worst_ulp}"
    )
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return csv_path, png_path
