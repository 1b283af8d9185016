"""Scalar format encode/decode and 32-bit register packing.

Floating-point kinds follow IEEE-754-style field layouts.  The two 8-bit
kinds use the OCP conventions: FP8 is E4M3 (bias 7, no Inf, a single NaN
pattern with exponent and mantissa all ones) and BF8 is E5M2 (bias 15,
standard Inf/NaN rules).

Canonical quiet-NaN patterns produced by re-encoding:
FP32 0x7FC00000, FP16 0x7E00, BF16 0x7FC0, BF8 0x7E, FP8 0x7F.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

__all__ = [
    "FormatKind",
    "FpClass",
    "ScalarFormat",
    "DecodedScalar",
    "PackedWord",
    "FORMATS",
    "FP16",
    "BF16",
    "FP8",
    "BF8",
    "INT8",
    "UINT4",
    "FP32",
    "INT32",
    "decode",
    "encode",
    "encode_fp32",
    "pack",
    "unpack",
    "CANONICAL_NAN",
]


class FormatKind(enum.Enum):
    FP16 = "fp16"
    BF16 = "bf16"
    FP8 = "fp8"
    BF8 = "bf8"
    INT8 = "int8"
    UINT4 = "uint4"
    FP32 = "fp32"
    INT32 = "int32"


class FpClass(enum.Enum):
    ZERO = "zero"
    SUBNORMAL = "subnormal"
    NORMAL = "normal"
    INF = "inf"
    NAN = "nan"


@dataclass(frozen=True)
class ScalarFormat:
    """Descriptor of a numeric encoding.

    For integer kinds exp_bits, man_bits and bias are zero.
    """

    kind: FormatKind
    total_bits: int
    exp_bits: int
    man_bits: int
    bias: int
    signed: bool

    def __post_init__(self) -> None:
        if self.is_float:
            assert self.total_bits == 1 + self.exp_bits + self.man_bits

    @property
    def is_float(self) -> bool:
        return self.exp_bits > 0

    @property
    def is_integer(self) -> bool:
        return self.exp_bits == 0

    @property
    def lane_count(self) -> int:
        return 32 // self.total_bits

    @property
    def exp_mask(self) -> int:
        return (1 << self.exp_bits) - 1

    @property
    def man_mask(self) -> int:
        return (1 << self.man_bits) - 1

    @property
    def has_inf(self) -> bool:
        # E4M3 reclaims the all-ones exponent for normals; every other
        # float kind keeps the IEEE Inf/NaN encodings.
        return self.is_float and self.kind is not FormatKind.FP8


FP16 = ScalarFormat(FormatKind.FP16, 16, 5, 10, 15, True)
BF16 = ScalarFormat(FormatKind.BF16, 16, 8, 7, 127, True)
FP8 = ScalarFormat(FormatKind.FP8, 8, 4, 3, 7, True)
BF8 = ScalarFormat(FormatKind.BF8, 8, 5, 2, 15, True)
INT8 = ScalarFormat(FormatKind.INT8, 8, 0, 0, 0, True)
UINT4 = ScalarFormat(FormatKind.UINT4, 4, 0, 0, 0, False)
FP32 = ScalarFormat(FormatKind.FP32, 32, 8, 23, 127, True)
INT32 = ScalarFormat(FormatKind.INT32, 32, 0, 0, 0, True)

FORMATS: dict[FormatKind, ScalarFormat] = {
    f.kind: f for f in (FP16, BF16, FP8, BF8, INT8, UINT4, FP32, INT32)
}

CANONICAL_NAN: dict[FormatKind, int] = {
    FormatKind.FP32: 0x7FC00000,
    FormatKind.FP16: 0x7E00,
    FormatKind.BF16: 0x7FC0,
    FormatKind.BF8: 0x7E,
    FormatKind.FP8: 0x7F,
}


class DecodedScalar(NamedTuple):
    """One decoded lane.

    significand carries the implicit leading bit for normal floats
    (man_bits+1 wide); for subnormals it is the raw mantissa.  int_value
    is only meaningful for integer kinds.  bits preserves the original
    encoding so packing round-trips NaN payloads untouched.
    """

    sign: int  # +1 or -1
    biased_exp: int
    significand: int
    fp_class: FpClass
    int_value: int
    bits: int


def decode(bits: int, fmt: ScalarFormat) -> DecodedScalar:
    """Decode a raw bit pattern.  Every pattern decodes; nothing raises."""
    if bits >> fmt.total_bits:
        raise ValueError(f"pattern 0x{bits:x} exceeds {fmt.total_bits} bits")

    if fmt.is_integer:
        if fmt.signed and bits >> (fmt.total_bits - 1):
            value = bits - (1 << fmt.total_bits)
        else:
            value = bits
        cls = FpClass.ZERO if value == 0 else FpClass.NORMAL
        return DecodedScalar(-1 if value < 0 else 1, 0, 0, cls, value, bits)

    sign_bit = bits >> (fmt.total_bits - 1)
    exp = (bits >> fmt.man_bits) & fmt.exp_mask
    man = bits & fmt.man_mask
    sign = -1 if sign_bit else 1

    if fmt.kind is FormatKind.FP8:
        # E4M3: exp=15/man=7 is the lone NaN; all other patterns are
        # finite, including exp=15 with man<7.
        if exp == fmt.exp_mask and man == fmt.man_mask:
            return DecodedScalar(sign, exp, man, FpClass.NAN, 0, bits)
    elif exp == fmt.exp_mask:
        cls = FpClass.INF if man == 0 else FpClass.NAN
        return DecodedScalar(sign, exp, man, cls, 0, bits)

    if exp == 0:
        if man == 0:
            return DecodedScalar(sign, 0, 0, FpClass.ZERO, 0, bits)
        return DecodedScalar(sign, 0, man, FpClass.SUBNORMAL, 0, bits)
    sig = (1 << fmt.man_bits) | man
    return DecodedScalar(sign, exp, sig, FpClass.NORMAL, 0, bits)


def encode(d: DecodedScalar, fmt: ScalarFormat) -> int:
    """Re-encode a decoded scalar.  NaNs collapse to the canonical pattern."""
    if fmt.is_integer:
        return d.int_value & ((1 << fmt.total_bits) - 1)

    sign_bit = (1 if d.sign < 0 else 0) << (fmt.total_bits - 1)
    if d.fp_class is FpClass.NAN:
        return CANONICAL_NAN[fmt.kind]
    if d.fp_class is FpClass.INF:
        return sign_bit | (fmt.exp_mask << fmt.man_bits)
    if d.fp_class is FpClass.ZERO:
        return sign_bit
    if d.fp_class is FpClass.SUBNORMAL:
        return sign_bit | (d.significand & fmt.man_mask)
    return sign_bit | (d.biased_exp << fmt.man_bits) | (d.significand & fmt.man_mask)


def encode_fp32(sign: int, unbiased_exp: int, sig27: int) -> int:
    """Round a normalized 27-bit significand to an FP32 pattern.

    sig27 holds a 24-bit significand (leading 1 at bit 26) followed by
    guard, round and sticky bits; sig27 == 0 encodes a zero result.
    sign is the sign bit (1 negative), unbiased_exp the exponent of the
    leading significand bit.  Rounding is to nearest, ties to even.
    Exponent overflow encodes +/-Inf; results whose pre-round exponent
    falls below the normal range flush to signed zero (this unit never
    emits subnormal outputs).
    """
    sign_bit = (sign & 1) << 31
    if sig27 == 0:
        return sign_bit

    be = unbiased_exp + 127
    if be < 1:
        return sign_bit
    if be >= 255:
        return sign_bit | 0x7F800000

    kept = sig27 >> 3
    guard = (sig27 >> 2) & 1
    rest = sig27 & 3
    if guard and (rest or (kept & 1)):
        kept += 1
        if kept == 1 << 24:
            kept >>= 1
            be += 1
            if be >= 255:
                return sign_bit | 0x7F800000
    return sign_bit | (be << 23) | (kept & 0x7FFFFF)


class PackedWord(NamedTuple):
    """A 32-bit register holding lane_count packed scalars, lane 0 at LSB."""

    bits: int
    format: ScalarFormat

    @property
    def lane_count(self) -> int:
        return self.format.lane_count


def pack(lanes: list[DecodedScalar], fmt: ScalarFormat) -> PackedWord:
    """Assemble decoded lanes back into one 32-bit register."""
    if fmt.total_bits > 16:
        raise ValueError(f"{fmt.kind.value} values travel as whole registers")
    if len(lanes) != fmt.lane_count:
        raise ValueError(f"expected {fmt.lane_count} lanes, got {len(lanes)}")
    word = 0
    for i, lane in enumerate(lanes):
        word |= (lane.bits & ((1 << fmt.total_bits) - 1)) << (i * fmt.total_bits)
    return PackedWord(word, fmt)


# Full decode tables for packable kinds, built on first use: lane decode
# is on the hot path of every pipeline execution.
_DECODE_TABLES: dict[FormatKind, list[DecodedScalar]] = {}


def _decode_table(fmt: ScalarFormat) -> list[DecodedScalar]:
    table = _DECODE_TABLES.get(fmt.kind)
    if table is None:
        table = [decode(bits, fmt) for bits in range(1 << fmt.total_bits)]
        _DECODE_TABLES[fmt.kind] = table
    return table


def unpack(word: PackedWord) -> list[DecodedScalar]:
    """Split a packed register into decoded lanes, ascending lane order."""
    fmt = word.format
    if fmt.total_bits > 16:
        raise ValueError(f"{fmt.kind.value} values travel as whole registers")
    table = _decode_table(fmt)
    mask = (1 << fmt.total_bits) - 1
    bits = word.bits
    width = fmt.total_bits
    return [table[(bits >> (i * width)) & mask] for i in range(fmt.lane_count)]
