"""Bit-exact models of the arithmetic building blocks.

All operations work on fixed-width unsigned integers holding two's
complement encodings; correctness is stated modulo 2^width, which is
what the hardware computes.  Negative operands therefore enter as their
W-bit two's complement patterns.

The 4:2 compressor is realized as two cascaded 3:2 compressors (full
adders); inside a reduction row its carry-out vector feeds the row's own
carry-in one bit position up, which is ripple-free because the carry-out
never depends on the carry-in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

__all__ = [
    "CarrySavePair",
    "ReductionTrace",
    "compress_3_2",
    "compress_4_2",
    "csa_reduce_mod4",
    "kogge_stone_add",
    "kogge_stone_add_traced",
    "wallace_multiply",
    "leading_zero_count",
]


class CarrySavePair(NamedTuple):
    """Redundant (sum, carry) vector pair.

    Invariant: (sum_vec + carry_vec) mod 2^width equals the modular sum
    of the operands it was reduced from.
    """

    sum_vec: int
    carry_vec: int
    width: int

    def total(self) -> int:
        return (self.sum_vec + self.carry_vec) & ((1 << self.width) - 1)


@dataclass
class ReductionTrace:
    """Per-level record of one MOD-4 reduction.

    levels[0] is the input operand list; each reduction step appends the
    resulting operand list.  compressor_kinds[l] tags the groups used to
    reduce levels[l] ("4:2", "3:2" or "pass"), and group_boundaries[l]
    gives the group index of each operand in levels[l].
    """

    levels: list[list[int]] = field(default_factory=list)
    compressor_kinds: list[list[str]] = field(default_factory=list)
    group_boundaries: list[list[int]] = field(default_factory=list)


def compress_3_2(a: int, b: int, c: int, width: int) -> CarrySavePair:
    """Full-adder row: three operands in, redundant pair out."""
    mask = (1 << width) - 1
    s = (a ^ b ^ c) & mask
    cy = (((a & b) | (a & c) | (b & c)) << 1) & mask
    return CarrySavePair(s, cy, width)


def compress_4_2(
    a: int, b: int, c: int, d: int, cin_vec: int, width: int
) -> tuple[CarrySavePair, int]:
    """4:2 compressor row built from two chained 3:2 stages.

    Satisfies a+b+c+d+cin_vec == sum_vec+carry_vec+(cout_vec<<1)
    (mod 2^width).  cout_vec depends only on a, b, c, never on cin_vec.
    """
    mask = (1 << width) - 1
    s1 = a ^ b ^ c
    cout = ((a & b) | (a & c) | (b & c)) & mask
    s = (s1 ^ d ^ cin_vec) & mask
    cy = (((s1 & d) | (s1 & cin_vec) | (d & cin_vec)) << 1) & mask
    return CarrySavePair(s, cy, width), cout


def _reduce_level(level: list[int], mask: int) -> list[int]:
    """One MOD-4 level: groups of 4 (remainder last) into 4:2/3:2 rows."""
    nxt: list[int] = []
    n = len(level)
    i = 0
    while i < n:
        left = n - i
        if left >= 4:
            a, b, c, d = level[i], level[i + 1], level[i + 2], level[i + 3]
            s1 = a ^ b ^ c
            cin = (((a & b) | (a & c) | (b & c)) << 1) & mask
            nxt.append((s1 ^ d ^ cin) & mask)
            nxt.append((((s1 & d) | (s1 & cin) | (d & cin)) << 1) & mask)
            i += 4
        elif left == 3:
            a, b, c = level[i], level[i + 1], level[i + 2]
            nxt.append((a ^ b ^ c) & mask)
            nxt.append((((a & b) | (a & c) | (b & c)) << 1) & mask)
            i += 3
        else:
            nxt.extend(level[i:])
            i = n
    return nxt


def csa_reduce_mod4(
    operands: list[int], width: int, want_trace: bool = False
) -> tuple[CarrySavePair, ReductionTrace | None]:
    """Reduce operands to a carry-save pair using MOD-4 grouping.

    Each level partitions its operands into ceil(n/4) groups of at most
    four (remainder group last): groups of four go through a 4:2 row
    with the carry-out self-fed as carry-in, groups of three through a
    3:2 row, and groups of one or two pass through unreduced.  Levels
    repeat until two vectors remain.
    """
    if not operands:
        raise ValueError("cannot reduce an empty operand list")
    mask = (1 << width) - 1
    level = [op & mask for op in operands]
    if not want_trace:
        while len(level) > 2:
            level = _reduce_level(level, mask)
        if len(level) == 1:
            return CarrySavePair(level[0], 0, width), None
        return CarrySavePair(level[0], level[1], width), None

    trace = ReductionTrace([list(level)])
    while len(level) > 2:
        kinds: list[str] = []
        boundaries: list[int] = []
        n = len(level)
        i = 0
        g = 0
        while i < n:
            size = 4 if n - i >= 4 else n - i
            kinds.append("4:2" if size == 4 else "3:2" if size == 3 else "pass")
            boundaries.extend([g] * size)
            i += size
            g += 1
        level = _reduce_level(level, mask)
        trace.levels.append(list(level))
        trace.compressor_kinds.append(kinds)
        trace.group_boundaries.append(boundaries)

    if len(level) == 1:
        pair = CarrySavePair(level[0], 0, width)
    else:
        pair = CarrySavePair(level[0], level[1], width)
    return pair, trace


def _prefix_tree(g: int, p: int, width: int) -> tuple[int, int, list[tuple[int, int]]]:
    """Kogge-Stone generate/propagate recurrence over ceil(log2 W) levels."""
    levels: list[tuple[int, int]] = []
    d = 1
    while d < width:
        g = g | (p & (g << d))
        p = p & ((p << d) | ((1 << d) - 1))
        levels.append((g, p))
        d <<= 1
    return g, p, levels


def kogge_stone_add(a: int, b: int, width: int, cin: int = 0) -> tuple[int, int]:
    """Parallel-prefix addition: returns (sum mod 2^width, carry-out)."""
    mask = (1 << width) - 1
    a &= mask
    b &= mask
    p = a ^ b
    g = a & b
    G, P = g, p
    d = 1
    while d < width:
        G = G | (P & (G << d))
        P = P & ((P << d) | ((1 << d) - 1))
        d <<= 1
    gp = (G | P) if cin else G
    carries = ((gp << 1) | (cin & 1)) & ((mask << 1) | 1)
    return (p ^ carries) & mask, (carries >> width) & 1


def kogge_stone_add_traced(
    a: int, b: int, width: int, cin: int = 0
) -> tuple[int, int, list[tuple[int, int]]]:
    """kogge_stone_add plus the per-level prefix snapshots.

    The length of the returned level list is the structural prefix depth,
    ceil(log2 width).
    """
    mask = (1 << width) - 1
    a &= mask
    b &= mask
    p = a ^ b
    g = a & b
    G, P, levels = _prefix_tree(g, p, width)
    gp = (G | P) if cin else G
    carries = ((gp << 1) | (cin & 1)) & ((mask << 1) | 1)
    return (p ^ carries) & mask, (carries >> width) & 1, levels


def wallace_multiply(a: int, b: int, wa: int | None = None, wb: int | None = None) -> int:
    """Unsigned multiply via an AND-array partial-product tree.

    One partial product per multiplier bit, reduced by the MOD-4
    carry-save tree and summed with the Kogge-Stone prefix recurrence
    (inlined here: this sits inside every pipeline execution).  Exact:
    returns a*b.
    """
    if a < 0 or b < 0:
        raise ValueError("operands must be unsigned")
    if wa is None:
        wa = max(a.bit_length(), 1)
    if wb is None:
        wb = max(b.bit_length(), 1)
    if a >> wa or b >> wb:
        raise ValueError("operand exceeds its stated width")
    wout = wa + wb
    mask = (1 << wout) - 1
    level = [(a << i) if (b >> i) & 1 else 0 for i in range(wb)]
    while len(level) > 2:
        level = _reduce_level(level, mask)
    if len(level) == 1:
        return level[0]
    x, y = level
    p = x ^ y
    G = x & y
    P = p
    d = 1
    while d < wout:
        G = G | (P & (G << d))
        P = P & ((P << d) | ((1 << d) - 1))
        d <<= 1
    return (p ^ (G << 1)) & mask


def leading_zero_count(x: int, width: int) -> int:
    """Zero bits above the most significant 1; width when x == 0."""
    if x < 0 or x >> width:
        raise ValueError(f"0x{x:x} is not a {width}-bit value")
    return width - x.bit_length()
