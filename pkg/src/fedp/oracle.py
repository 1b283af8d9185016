"""Independent exact-arithmetic references for differential testing.

Everything here computes with arbitrary-precision host integers and does
its own bit-field extraction; no arithmetic is shared with the bitmath
or pipeline modules, so a disagreement always points at exactly one
side.

The floating-point reference mirrors the unit's value-handling rules
(they are rules, not approximations):

* subnormal inputs flush to zero when the config says so;
* any NaN input, or Inf*0 after flushing, yields the canonical qNaN;
* Inf inputs (and products whose combined biased exponent exceeds 255)
  act as signed infinities, with opposing infinities yielding NaN;
* with every product zero-valued the addend passes through unharmed, so
  an exact zero sum takes the addend's sign; otherwise an exact zero is
  -0 only when every term carries a negative sign;
* results below the FP32 normal range flush to signed zero.

Within those rules the sum itself is exact: no intermediate rounding,
one final round-to-nearest-even.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

from .formats import FormatKind, ScalarFormat

__all__ = [
    "ExactFixedPoint",
    "exact_dot_fp",
    "exact_dot_int",
    "split_word",
    "round_to_fp32",
    "fp32_word_to_fixed",
    "ulp_distance",
]

_QNAN = 0x7FC00000
_POS_INF = 0x7F800000
_NEG_INF = 0xFF800000

# Local FP32 descriptor so this module never routes values through the
# formats module's decode path.
_FP32 = ScalarFormat(FormatKind.FP32, 32, 8, 23, 127, True)


class ExactFixedPoint(NamedTuple):
    """An exact value mantissa * 2^exp2 with a signed big-int mantissa."""

    mantissa: int
    exp2: int

    def is_zero(self) -> bool:
        return self.mantissa == 0

    def normalized(self) -> "ExactFixedPoint":
        """Canonical form: odd mantissa (or exp2 0 for zero)."""
        if self.mantissa == 0:
            return ExactFixedPoint(0, 0)
        m, e = self.mantissa, self.exp2
        shift = (m & -m).bit_length() - 1
        return ExactFixedPoint(m >> shift, e + shift)


def split_word(word: int, fmt: ScalarFormat) -> list[int]:
    """Shift-and-mask extraction of packed lanes, lane 0 at the LSB."""
    mask = (1 << fmt.total_bits) - 1
    return [(word >> (i * fmt.total_bits)) & mask for i in range(32 // fmt.total_bits)]


# Lane classification tags used internally.
_ZERO, _SUB, _NORM, _INF, _NAN = range(5)


def _classify(bits: int, fmt: ScalarFormat) -> tuple[int, int, int, int]:
    """Return (tag, sign_bit, biased_exp_field, mantissa_field)."""
    sign = (bits >> (fmt.total_bits - 1)) & 1
    exp = (bits >> fmt.man_bits) & ((1 << fmt.exp_bits) - 1)
    man = bits & ((1 << fmt.man_bits) - 1)
    all_ones = (1 << fmt.exp_bits) - 1
    if fmt.kind is FormatKind.FP8:
        if exp == all_ones and man == (1 << fmt.man_bits) - 1:
            return _NAN, sign, exp, man
    elif exp == all_ones:
        return (_INF if man == 0 else _NAN), sign, exp, man
    if exp == 0:
        return (_ZERO if man == 0 else _SUB), sign, exp, man
    return _NORM, sign, exp, man


def _lane_fixed(
    bits: int, fmt: ScalarFormat, flush: bool
) -> tuple[int, int, int, int, int]:
    """Decode a lane to (tag, sign_bit, mantissa, exp2, effective_exp).

    The value is mantissa * 2^exp2 (mantissa unsigned).  Subnormals are
    flushed to zero when flush is set; otherwise they keep their true
    scale (effective biased exponent 1, no implicit bit).
    """
    tag, sign, exp, man = _classify(bits, fmt)
    if tag == _NORM:
        return _NORM, sign, (1 << fmt.man_bits) | man, exp - fmt.bias - fmt.man_bits, exp
    if tag == _SUB and not flush:
        return _SUB, sign, man, 1 - fmt.bias - fmt.man_bits, 1
    if tag in (_SUB, _ZERO):
        return _ZERO, sign, 0, 0, 1
    return tag, sign, 0, 0, 1


# Lane tables per (kind, flush), built on first use; the reference runs
# inside million-record differential loops.
_LANE_TABLES: dict[tuple[FormatKind, bool], list[tuple[int, int, int, int, int]]] = {}


def _lane_table(fmt: ScalarFormat, flush: bool) -> list[tuple[int, int, int, int, int]]:
    key = (fmt.kind, flush)
    table = _LANE_TABLES.get(key)
    if table is None:
        table = [_lane_fixed(b, fmt, flush) for b in range(1 << fmt.total_bits)]
        _LANE_TABLES[key] = table
    return table


def round_to_fp32(sign: int, mantissa: int, exp2: int) -> int:
    """Round the exact value (-1)^sign * mantissa * 2^exp2 to FP32.

    Round-to-nearest-even; exponent overflow gives +/-Inf; values whose
    leading bit falls below 2^-126 flush to signed zero (no subnormal
    outputs).  mantissa must be >= 0.
    """
    sign_bit = (sign & 1) << 31
    if mantissa == 0:
        return sign_bit
    top = mantissa.bit_length() - 1
    e = exp2 + top  # exponent of the leading bit
    be = e + 127
    if be < 1:
        return sign_bit
    if be >= 255:
        return sign_bit | _POS_INF

    shift = top - 23
    if shift > 0:
        kept = mantissa >> shift
        rem = mantissa & ((1 << shift) - 1)
        half = 1 << (shift - 1)
        if rem > half or (rem == half and (kept & 1)):
            kept += 1
            if kept == 1 << 24:
                kept >>= 1
                be += 1
                if be >= 255:
                    return sign_bit | _POS_INF
    else:
        kept = mantissa << -shift
    return sign_bit | (be << 23) | (kept & 0x7FFFFF)


def fp32_word_to_fixed(word: int) -> ExactFixedPoint | None:
    """Exact value of a finite FP32 pattern; None for Inf/NaN."""
    sign = -1 if word >> 31 else 1
    exp = (word >> 23) & 0xFF
    man = word & 0x7FFFFF
    if exp == 0xFF:
        return None
    if exp == 0:
        return ExactFixedPoint(sign * man, -149)
    return ExactFixedPoint(sign * ((1 << 23) | man), exp - 150)


class FpDotResult(NamedTuple):
    exact: ExactFixedPoint
    word: int


def exact_dot_fp(
    a_lanes: Sequence[int],
    b_lanes: Sequence[int],
    c_word: int,
    cfg,
) -> FpDotResult:
    """Exact dot product sum(a_i*b_i) + c with one final FP32 rounding.

    Lanes are raw bit patterns in cfg.mul_format; c_word is a raw FP32
    pattern.  Returns the exact fixed-point sum (zero when a special
    rule fired) and the rounded FP32 word.
    """
    fmt: ScalarFormat = cfg.mul_format
    flush = cfg.subnormal_flush
    table = _lane_table(fmt, flush)
    has_nan = False
    pos_inf = False
    neg_inf = False
    all_negative = True
    products_all_zero = True
    terms: list[tuple[int, int]] = []  # (signed mantissa, exp2)
    exp_limit = 255 - 128 + 2 * fmt.bias  # e_a + e_b above this saturates

    for abits, bbits in zip(a_lanes, b_lanes):
        ta, sa, ma, ea, xa = table[abits]
        tb, sb, mb, eb, xb = table[bbits]
        sign = sa ^ sb
        if not sign:
            all_negative = False
        if ta == _NAN or tb == _NAN:
            has_nan = True
            continue
        if ta == _INF or tb == _INF:
            if (ta == _INF and mb == 0 and tb != _INF) or (
                tb == _INF and ma == 0 and ta != _INF
            ):
                has_nan = True  # Inf * 0 is invalid
            elif sign:
                neg_inf = True
            else:
                pos_inf = True
            continue
        if ma == 0 or mb == 0:
            continue
        # Products whose rebiased exponent exceeds the 8-bit intermediate
        # range saturate to a signed infinity, mirroring the datapath.
        if xa + xb > exp_limit:
            if sign:
                neg_inf = True
            else:
                pos_inf = True
            continue
        m = ma * mb
        products_all_zero = False
        terms.append((-m if sign else m, ea + eb))

    tc, sc, mc, ec, _ = _lane_fixed(c_word, _FP32, flush)
    if not sc:
        all_negative = False
    if tc == _NAN:
        has_nan = True
    elif tc == _INF:
        if sc:
            neg_inf = True
        else:
            pos_inf = True
    elif mc:
        terms.append((-mc if sc else mc, ec))

    if has_nan or (pos_inf and neg_inf):
        return FpDotResult(ExactFixedPoint(0, 0), _QNAN)
    if pos_inf:
        return FpDotResult(ExactFixedPoint(0, 0), _POS_INF)
    if neg_inf:
        return FpDotResult(ExactFixedPoint(0, 0), _NEG_INF)

    if products_all_zero:
        zero_sign = sc
    else:
        zero_sign = 1 if all_negative else 0

    if not terms:
        return FpDotResult(ExactFixedPoint(0, 0), zero_sign << 31)

    base = min(e for _, e in terms)
    acc = 0
    for m, e in terms:
        acc += m << (e - base)
    exact = ExactFixedPoint(acc, base)
    if acc == 0:
        word = zero_sign << 31
    elif acc < 0:
        word = round_to_fp32(1, -acc, base)
    else:
        word = round_to_fp32(0, acc, base)
    return FpDotResult(exact, word)


def exact_dot_int(
    a_lanes: Sequence[int],
    b_lanes: Sequence[int],
    c_word: int,
    cfg,
) -> int:
    """(sum(a_i*b_i) + c) mod 2^32 over the integer lane encodings."""
    fmt: ScalarFormat = cfg.mul_format
    width = fmt.total_bits
    signed = fmt.signed
    half = 1 << (width - 1)
    full = 1 << width
    total = c_word  # adding the raw pattern is exact mod 2^32
    for abits, bbits in zip(a_lanes, b_lanes):
        a = abits - full if signed and abits >= half else abits
        b = bbits - full if signed and bbits >= half else bbits
        total += a * b
    return total & 0xFFFFFFFF


def ulp_distance(a_word: int, b_word: int) -> int:
    """Steps between two patterns on the unit's output lattice.

    The unit never emits subnormals, so the lattice runs 0, min-normal,
    ... max-finite, Inf per sign: zero to min-normal is one step.  +0
    and -0 compare equal; two NaNs compare equal; a NaN against a
    non-NaN is reported as 2^32.  (A subnormal pattern, never produced
    here, counts as one step off zero.)
    """
    a_nan = (a_word & 0x7F800000) == 0x7F800000 and (a_word & 0x7FFFFF) != 0
    b_nan = (b_word & 0x7F800000) == 0x7F800000 and (b_word & 0x7FFFFF) != 0
    if a_nan or b_nan:
        return 0 if (a_nan and b_nan) else 1 << 32

    def ordered(u: int) -> int:
        mag = u & 0x7FFFFFFF
        if mag == 0:
            o = 0
        elif mag < 0x800000:
            o = 1
        else:
            o = mag - 0x7FFFFF
        return -o if u >> 31 else o

    return abs(ordered(a_word) - ordered(b_word))
