"""Throughput arithmetic for pipeline backends.

Single-cycle throughput is (FLOPs per issue / latency) * Fmax; a filled
pipeline retires one issue per cycle, so its throughput is FLOPs * Fmax.
The reference design point is a 2x2 grid of 4-element units at 306.6 MHz
with 4-cycle latency: 32 FLOPs per issue, 2.4528 GFLOPS single-cycle and
9.8112 GFLOPS filled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

__all__ = [
    "BackendSpec",
    "PerfRow",
    "single_cycle_throughput",
    "filled_pipeline_throughput",
    "tcu_flops_per_issue",
    "comparison_rows",
    "scaling_rows",
    "render_table",
    "REFERENCE_FMAX_HZ",
    "REFERENCE_DESIGN",
    "DEFAULT_BACKENDS",
]

REFERENCE_FMAX_HZ = 306.6e6

# FLOPs per issue for a grid of dot-product units: each unit performs
# n multiplies and n adds per issue.
GRID_UNITS = 4


@dataclass(frozen=True)
class BackendSpec:
    """One backend's shape: issue width, latency and clock."""

    name: str
    latency_cycles: int
    fmax_hz: float
    flops_per_issue: int

    def __post_init__(self) -> None:
        if self.latency_cycles <= 0:
            raise ValueError("latency_cycles must be positive")
        if self.fmax_hz <= 0:
            raise ValueError("fmax_hz must be positive")
        if self.flops_per_issue <= 0:
            raise ValueError("flops_per_issue must be positive")


def tcu_flops_per_issue(n_elements: int, grid_units: int = GRID_UNITS) -> int:
    """FLOPs completed per issue: grid_units units, n multiplies + n adds."""
    return grid_units * 2 * n_elements


def single_cycle_throughput(spec: BackendSpec) -> float:
    """FLOP/s when issuing once per latency window."""
    return spec.flops_per_issue / spec.latency_cycles * spec.fmax_hz


def filled_pipeline_throughput(spec: BackendSpec) -> float:
    """FLOP/s with the pipeline kept full (one issue per cycle)."""
    return spec.flops_per_issue * spec.fmax_hz


REFERENCE_DESIGN = BackendSpec("fused-4cyc", 4, REFERENCE_FMAX_HZ, tcu_flops_per_issue(4))

# Comparable discrete backends evaluated at the same issue shape and
# clock; only the latencies are pinned, per-backend clocks are not.
DEFAULT_BACKENDS = (
    REFERENCE_DESIGN,
    BackendSpec("discrete-13cyc", 13, REFERENCE_FMAX_HZ, tcu_flops_per_issue(4)),
    BackendSpec("dsp-42cyc", 42, REFERENCE_FMAX_HZ, tcu_flops_per_issue(4)),
)


class PerfRow(NamedTuple):
    name: str
    flops_per_issue: int
    latency_cycles: int
    fmax_mhz: float
    single_cycle_gflops: float
    filled_gflops: float


def comparison_rows(specs: Sequence[BackendSpec]) -> list[PerfRow]:
    """Evaluate both throughput figures for each backend."""
    return [
        PerfRow(
            s.name,
            s.flops_per_issue,
            s.latency_cycles,
            s.fmax_hz / 1e6,
            single_cycle_throughput(s) / 1e9,
            filled_pipeline_throughput(s) / 1e9,
        )
        for s in specs
    ]


def scaling_rows(
    fmax_hz: float = REFERENCE_FMAX_HZ,
    n_values: Sequence[int] = (4, 8, 16, 32),
) -> list[PerfRow]:
    """Backend x unit-width throughput grid.

    Evaluates every default backend latency across the unit widths at
    one clock.  Per-backend clocks for the wider configurations are not
    published, so the single clock is an explicit assumption here.
    """
    specs = [
        BackendSpec(base.name, base.latency_cycles, fmax_hz, tcu_flops_per_issue(n))
        for base in DEFAULT_BACKENDS
        for n in n_values
    ]
    return comparison_rows(specs)


def render_table(rows: Sequence[PerfRow]) -> str:
    """Fixed-width text table of throughput figures."""
    header = (
        f"{'backend':<16}{'FLOPs':>7}{'lat':>5}{'Fmax MHz':>10}"
        f"{'1-cycle GFLOPS':>16}{'filled GFLOPS':>15}"
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.name:<16}{r.flops_per_issue:>7}{r.latency_cycles:>5}"
            f"{r.fmax_mhz:>10.1f}{r.single_cycle_gflops:>16.4f}{r.filled_gflops:>15.4f}"
        )
    return "\n".join(lines)
