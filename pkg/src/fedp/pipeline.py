"""The 4-stage fused dot-product datapath.

Stage 1 multiplies the low-precision lanes (and folds the FP32 addend
into the same intermediate form), stage 2 aligns everything to the
maximum exponent, stage 3 accumulates through a MOD-4 carry-save tree,
and stage 4 normalizes and rounds (or, on the integer path, reassembles
the split addend's upper bits).

Intermediate value convention
-----------------------------
Floating-point terms carry an 8-bit FP32-biased exponent E and a 25-bit
magnitude M with value (-1)^s * (M / 2^24) * 2^(E - 127).  A product of
two normalized significands lies in [0.5, 2) and is placed as the raw
integer product shifted up by 23 - 2*man_bits; the FP32 addend is its
24-bit significand shifted up one place with E equal to its own biased
exponent.  Both fit the 25-bit field exactly.

Accumulator widths
------------------
The nominal accumulator width is 25 + log2(N).  Internally each
magnitude is placed low_guard = log2(N) + 3 bits up inside a wider
two's-complement field so that alignment shifts up to low_guard lose
nothing, and the field carries headroom for N+1 signed terms on top.
Bits shifted below the field collapse into per-term sticky bits; a term
whose shift reaches window_width contributes only its sticky.

Exponent range rules
--------------------
The product exponent E = e_a + e_b + 127 - 2*bias + 1 is clamped to
[0, 255]: a product above the range saturates to a signed infinity, and
one below it is pre-shifted into E = 0 with the shifted-out bits going
to its sticky (both only reachable for BF16 inputs).

Special values resolve before stage 2: any NaN input (or Inf times
zero after subnormal flushing) gives the canonical quiet NaN, opposing
infinities give NaN, and otherwise an infinity input forces a signed
infinity result.  An exact zero sum is -0 only when every term sign is
negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .bitmath import CarrySavePair, ReductionTrace, csa_reduce_mod4, kogge_stone_add, wallace_multiply
from .formats import (
    FP32,
    INT32,
    DecodedScalar,
    FormatKind,
    FpClass,
    ScalarFormat,
    _decode_table,
    decode,
    encode_fp32,
)

__all__ = [
    "FedpConfig",
    "FedpRequest",
    "FedpResult",
    "RawProduct",
    "SignMatrix",
    "PipelineTrace",
    "Stage1Fp",
    "Stage1Int",
    "stage1_multiply",
    "build_sign_matrix",
    "max_exponent_select",
    "stage2_align",
    "stage3_accumulate",
    "stage4_normalize_round",
    "int_addend_split",
    "int_high_fixup",
    "fedp_execute",
]

_QNAN = 0x7FC00000
_POS_INF = 0x7F800000
_NEG_INF = 0xFF800000

_LOW_PRECISION = {
    FormatKind.FP16,
    FormatKind.BF16,
    FormatKind.FP8,
    FormatKind.BF8,
    FormatKind.INT8,
    FormatKind.UINT4,
}


@dataclass(frozen=True)
class FedpConfig:
    """Shape of one dot-product unit instance."""

    n_elements: int
    mul_format: ScalarFormat
    acc_format: ScalarFormat | None = None
    subnormal_flush: bool = True

    # Derived constants, set once in __post_init__ (not dataclass fields):
    # is_integer; log2n; nominal_acc_width (25 + log2 N, the documented
    # width); window_width (nominal + 2 guard + sign); low_guard (bits of
    # lossless alignment room below each placed magnitude); field_width
    # (two's-complement working width: window plus carry headroom);
    # field_mask; lanes_per_vector (8-bit float formats pair two lanes
    # per term, so they consume 2N); words_per_operand.

    def __post_init__(self) -> None:
        if self.n_elements not in (4, 8, 16, 32):
            raise ValueError(f"n_elements must be one of 4/8/16/32, got {self.n_elements}")
        if self.mul_format.kind not in _LOW_PRECISION:
            raise ValueError(f"{self.mul_format.kind.value} is not a multiplier format")
        expected_acc = INT32 if self.mul_format.is_integer else FP32
        if self.acc_format is None:
            object.__setattr__(self, "acc_format", expected_acc)
        elif self.acc_format.kind is not expected_acc.kind:
            raise ValueError(
                f"{self.mul_format.kind.value} requires {expected_acc.kind.value} accumulation"
            )
        put = object.__setattr__
        n = self.n_elements
        log2n = n.bit_length() - 1
        put(self, "is_integer", self.mul_format.is_integer)
        put(self, "log2n", log2n)
        put(self, "nominal_acc_width", 25 + log2n)
        put(self, "window_width", 25 + log2n + 3)
        put(self, "low_guard", log2n + 3)
        # carry headroom for N+1 signed terms: ceil(log2(N+1)) = bitlen(N)
        put(self, "field_width", 25 + (log2n + 3) + n.bit_length() + 1)
        put(self, "field_mask", (1 << self.field_width) - 1)
        paired = self.mul_format.kind in (FormatKind.FP8, FormatKind.BF8)
        lanes = 2 * n if paired else n
        put(self, "lanes_per_vector", lanes)
        per_word = self.mul_format.lane_count
        put(self, "words_per_operand", (lanes + per_word - 1) // per_word)


class RawProduct(NamedTuple):
    """One accumulation term in the shared intermediate form.

    value = (-1)^sign * (magnitude / 2^24) * 2^(biased_exp8 - 127).
    sticky records bits already lost producing this term (exponent
    underflow pre-shift, or 8-bit pair combination truncation).
    """

    sign: int
    biased_exp8: int
    magnitude: int
    sticky: bool = False


class SignMatrix(NamedTuple):
    """Pairwise exponent comparison network.

    diffs[i][j] = exp_i - exp_j and signs[i][j] is its sign bit.  The
    selected index k has signs[k][j] == 0 for every j, i.e. exp_k is not
    below any other exponent.
    """

    signs: tuple[tuple[int, ...], ...]
    diffs: tuple[tuple[int, ...], ...]


class Stage1Fp(NamedTuple):
    terms: list[RawProduct]  # N products then the processed addend
    special: int | None  # resolved special-value word, short-circuits 2-4
    all_negative: bool
    products_all_zero: bool  # every product magnitude is zero

    def zero_sign(self) -> int:
        """Sign bit for an exact-zero sum.

        With every product zero the addend passes through unharmed, so
        its sign wins (a flushed -0-ish addend stays negative); otherwise
        a zero sum is negative only when every term sign is negative.
        """
        if self.products_all_zero:
            return self.terms[-1].sign
        return 1 if self.all_negative else 0


class Stage1Int(NamedTuple):
    products: list[int]
    low25: int
    high7: int


@dataclass
class PipelineTrace:
    """Every intermediate of one execution, for replay and inspection."""

    cfg: FedpConfig
    a_words: tuple[int, ...]
    b_words: tuple[int, ...]
    c_word: int
    # stage 1
    stage1_terms: list[RawProduct] | None = None
    stage1_products: list[int] | None = None
    stage1_addend_split: tuple[int, int] | None = None
    stage1_special: int | None = None
    stage1_all_negative: bool = False
    # stage 2
    stage2_max_exp: int | None = None
    stage2_selector: tuple[int, ...] | None = None
    stage2_shifts: tuple[int, ...] | None = None
    stage2_aligned: list[int] | None = None
    stage2_stickies: list[bool] | None = None
    # stage 3
    stage3_pair: CarrySavePair | None = None
    stage3_raw_sum: int | None = None
    stage3_reduction: ReductionTrace | None = None
    # stage 4
    stage4_lzc: int | None = None
    stage4_pre_round: int | None = None
    stage4_round_up: bool | None = None
    stage4_sticky: bool | None = None
    result_word: int | None = None


class FedpResult(NamedTuple):
    word: int
    lossless: bool  # no sticky anywhere: bit-exact against the oracle
    max_exp: int | None  # stage-2 maximum exponent (FP path only)
    trace: PipelineTrace | None


@dataclass(frozen=True)
class FedpRequest:
    cfg: FedpConfig
    a_words: tuple[int, ...]
    b_words: tuple[int, ...]
    c_word: int


# ---------------------------------------------------------------------------
# stage 1


def _fp_lane_term(
    da: DecodedScalar, db: DecodedScalar, fmt: ScalarFormat, flush: bool
) -> tuple[str, int, int, int, bool]:
    """One lane product -> ('term'|'nan'|'inf', sign, E, magnitude, sticky)."""
    normal = FpClass.NORMAL
    ca, cb = da.fp_class, db.fp_class
    sign = 1 if (da.sign < 0) != (db.sign < 0) else 0

    if ca is normal and cb is normal:
        exp_a = da.biased_exp
        exp_b = db.biased_exp
    else:
        if flush:
            if ca is FpClass.SUBNORMAL:
                ca = FpClass.ZERO
            if cb is FpClass.SUBNORMAL:
                cb = FpClass.ZERO
        if ca is FpClass.NAN or cb is FpClass.NAN:
            return "nan", sign, 0, 0, False
        if ca is FpClass.INF or cb is FpClass.INF:
            if ca is FpClass.ZERO or cb is FpClass.ZERO:
                return "nan", sign, 0, 0, False  # Inf * 0 is invalid
            return "inf", sign, 0, 0, False
        if ca is FpClass.ZERO or cb is FpClass.ZERO:
            return "term", sign, 0, 0, False
        exp_a = da.biased_exp if ca is normal else 1
        exp_b = db.biased_exp if cb is normal else 1

    exp = exp_a + exp_b + 127 - 2 * fmt.bias + 1
    if exp > 255:
        return "inf", sign, 0, 0, False

    mbits = fmt.man_bits + 1
    raw = wallace_multiply(da.significand, db.significand, mbits, mbits)
    mag = raw << (23 - 2 * fmt.man_bits)
    sticky = False
    if exp < 0:
        deficit = -exp
        if mag & ((1 << deficit) - 1):
            sticky = True
        mag >>= deficit
        exp = 0
    return "term", sign, exp, mag, sticky


def _combine_pair(
    t0: tuple[int, int, int, bool], t1: tuple[int, int, int, bool]
) -> RawProduct:
    """Sum two 8-bit lane products into one term, exactly where possible.

    The wide exact sum is renormalized back into the 25-bit magnitude;
    truncated low bits set the term sticky.  An exact cancellation gives
    a positive zero term.
    """
    s0, e0, m0, st0 = t0
    s1, e1, m1, st1 = t1
    sticky = st0 or st1
    if m0 == 0 and m1 == 0:
        return RawProduct(s0 & s1, 0, 0, sticky)
    if m0 == 0:
        return RawProduct(s1, e1, m1, sticky)
    if m1 == 0:
        return RawProduct(s0, e0, m0, sticky)
    base = min(e0, e1)
    total = ((-m0 if s0 else m0) << (e0 - base)) + ((-m1 if s1 else m1) << (e1 - base))
    if total == 0:
        return RawProduct(0, 0, 0, sticky)
    sign = 1 if total < 0 else 0
    mag = -total if sign else total
    excess = mag.bit_length() - 25
    if excess > 0:
        if mag & ((1 << excess) - 1):
            sticky = True
        mag >>= excess
        base += excess
    return RawProduct(sign, base, mag, sticky)


def _fp_addend_term(dc: DecodedScalar, flush: bool) -> tuple[str, RawProduct]:
    """Fold the FP32 addend into the shared intermediate form."""
    sign = 1 if dc.sign < 0 else 0
    cls = dc.fp_class
    if cls is FpClass.NAN:
        return "nan", RawProduct(sign, 0, 0)
    if cls is FpClass.INF:
        return "inf", RawProduct(sign, 0, 0)
    if cls is FpClass.ZERO or (cls is FpClass.SUBNORMAL and flush):
        return "term", RawProduct(sign, 0, 0)
    if cls is FpClass.SUBNORMAL:
        return "term", RawProduct(sign, 1, dc.significand << 1)
    return "term", RawProduct(sign, dc.biased_exp, dc.significand << 1)


def stage1_multiply(
    a_lanes: Sequence[DecodedScalar],
    b_lanes: Sequence[DecodedScalar],
    addend: DecodedScalar,
    cfg: FedpConfig,
) -> Stage1Fp | Stage1Int:
    """Multiply lanes and process the addend into accumulation terms.

    FP path: N RawProduct terms (8-bit formats combine lane pairs) plus
    the converted addend, with NaN/Inf inputs resolved into a special
    result word.  Integer path: exact signed products plus the split
    32-bit addend.
    """
    if cfg.is_integer:
        products = [da.int_value * db.int_value for da, db in zip(a_lanes, b_lanes)]
        low25, high7 = int_addend_split(addend.bits)
        return Stage1Int(products, low25, high7)

    fmt = cfg.mul_format
    flush = cfg.subnormal_flush
    paired = fmt.kind in (FormatKind.FP8, FormatKind.BF8)

    has_nan = False
    pos_inf = False
    neg_inf = False
    all_negative = True
    products_all_zero = True
    lane_terms: list[tuple[int, int, int, bool]] = []

    for da, db in zip(a_lanes, b_lanes):
        kind, sign, exp, mag, sticky = _fp_lane_term(da, db, fmt, flush)
        if not sign:
            all_negative = False
        if mag:
            products_all_zero = False
        if kind == "nan":
            has_nan = True
        elif kind == "inf":
            if sign:
                neg_inf = True
            else:
                pos_inf = True
        else:
            lane_terms.append((sign, exp, mag, sticky))

    akind, aterm = _fp_addend_term(addend, flush)
    if not aterm.sign:
        all_negative = False
    if akind == "nan":
        has_nan = True
    elif akind == "inf":
        if aterm.sign:
            neg_inf = True
        else:
            pos_inf = True

    special: int | None = None
    if has_nan or (pos_inf and neg_inf):
        special = _QNAN
    elif pos_inf:
        special = _POS_INF
    elif neg_inf:
        special = _NEG_INF
    if special is not None:
        return Stage1Fp([], special, all_negative, products_all_zero)

    if paired:
        terms = [
            _combine_pair(lane_terms[2 * k], lane_terms[2 * k + 1])
            for k in range(cfg.n_elements)
        ]
    else:
        terms = [RawProduct(*t) for t in lane_terms]
    terms.append(aterm)
    return Stage1Fp(terms, None, all_negative, products_all_zero)


# ---------------------------------------------------------------------------
# stage 2


def build_sign_matrix(exps: Sequence[int]) -> SignMatrix:
    """All pairwise exponent differences and their sign bits."""
    diffs = tuple(tuple(ei - ej for ej in exps) for ei in exps)
    signs = tuple(tuple(1 if d < 0 else 0 for d in row) for row in diffs)
    return SignMatrix(signs, diffs)


def max_exponent_select(
    exps: Sequence[int],
) -> tuple[int, tuple[int, ...], tuple[int, ...]]:
    """Pick the maximum exponent per the pairwise sign-matrix selection.

    Returns (max_exp, one-hot selector, shift amounts).  The selected
    index is the lowest one whose sign-matrix row carries no negative
    difference (i.e. the first maximum -- a linear scan computes the
    identical selection, which the structural tests cross-check against
    build_sign_matrix).  Shift amounts are the negated precomputed
    differences against the selected entry, each >= 0.
    """
    if not exps:
        raise ValueError("empty exponent list")
    k = 0
    best = exps[0]
    for i in range(1, len(exps)):
        if exps[i] > best:
            k = i
            best = exps[i]
    selector = tuple(1 if i == k else 0 for i in range(len(exps)))
    shifts = tuple(best - e for e in exps)
    return best, selector, shifts


def stage2_align(
    terms: Sequence[RawProduct],
    shift_amounts: Sequence[int],
    cfg: FedpConfig,
) -> tuple[list[int], list[bool]]:
    """Place magnitudes in the accumulator field and shift into position.

    Each magnitude enters low_guard bits up, is right-shifted by its
    shift amount, and is two's-complemented when negative.  Bits shifted
    below the field OR into that term's sticky; a shift of window_width
    or more leaves only the sticky.
    """
    mask = cfg.field_mask
    glow = cfg.low_guard
    aligned: list[int] = []
    stickies: list[bool] = []
    for term, shift in zip(terms, shift_amounts):
        x = term.magnitude << glow
        sticky = term.sticky
        if shift:
            if x & ((1 << shift) - 1):
                sticky = True
            x >>= shift
        if term.sign:
            x = -x & mask
        aligned.append(x)
        stickies.append(sticky)
    return aligned, stickies


# ---------------------------------------------------------------------------
# stage 3


def stage3_accumulate(
    aligned: Sequence[int], cfg: FedpConfig, want_trace: bool = False
) -> tuple[CarrySavePair, int, ReductionTrace | None]:
    """MOD-4 carry-save reduction plus the final prefix addition."""
    pair, rtrace = csa_reduce_mod4(list(aligned), cfg.field_width, want_trace)
    raw_sum, _ = kogge_stone_add(pair.sum_vec, pair.carry_vec, cfg.field_width)
    return pair, raw_sum, rtrace


# ---------------------------------------------------------------------------
# stage 4


class Stage4Result(NamedTuple):
    word: int
    lzc: int
    pre_round: int
    round_up: bool


def stage4_normalize_round(
    raw_sum: int,
    max_exp: int,
    sticky: bool,
    cfg: FedpConfig,
    zero_sign: int = 0,
) -> Stage4Result:
    """Normalize the accumulated sum and round to an FP32 word.

    The field value raw_sum carries the result at the scale
    2^(max_exp - 151 - low_guard) per unit.  Exponent overflow gives a
    signed infinity; a pre-round exponent below the FP32 normal range
    flushes to signed zero.  zero_sign is the sign bit used when the sum
    is exactly zero (see Stage1Fp.zero_sign).
    """
    width = cfg.field_width
    signed = raw_sum - (1 << width) if raw_sum >> (width - 1) else raw_sum
    if signed == 0:
        word = 0x80000000 if zero_sign else 0
        return Stage4Result(word, width, 0, False)

    sign = 1 if signed < 0 else 0
    mag = -signed if sign else signed
    top = mag.bit_length() - 1
    lzc = width - 1 - top
    be = max_exp + top - 24 - cfg.low_guard

    shift = top - 23
    if shift > 0:
        kept = mag >> shift
        rem = mag & ((1 << shift) - 1)
        guard = (rem >> (shift - 1)) & 1
        low_rest = (rem & ((1 << (shift - 1)) - 1)) != 0 if shift > 1 else False
        tail = 1 if (low_rest or sticky) else 0
    else:
        kept = mag << -shift
        guard = 0
        tail = 1 if sticky else 0

    round_up = bool(guard and (tail or (kept & 1)))
    word = encode_fp32(sign, be - 127, (kept << 3) | (guard << 2) | tail)
    return Stage4Result(word, lzc, kept, round_up)


# ---------------------------------------------------------------------------
# integer addend path


def int_addend_split(c: int) -> tuple[int, int]:
    """Split the 32-bit addend: low 25 bits accumulate, high 7 propagate."""
    return c & 0x1FFFFFF, (c >> 25) & 0x7F


def int_high_fixup(low_sum: int, high7: int, cfg: FedpConfig) -> int:
    """Assemble the integer result from the split accumulation.

    The carry into the high part is the field bits above bit 24 of the
    stage-3 two's-complement sum, read as a signed quantity (i.e. the
    sum arithmetically shifted right by 25).  The result equals
    (sum of products + c) mod 2^32.
    """
    width = cfg.field_width
    signed = low_sum - (1 << width) if low_sum >> (width - 1) else low_sum
    carry = signed >> 25
    low = signed & 0x1FFFFFF
    return (((high7 + carry) & 0x7F) << 25) | low


# ---------------------------------------------------------------------------
# full pipeline


def _decode_lanes(
    words: Sequence[int], fmt: ScalarFormat, count: int
) -> list[DecodedScalar]:
    # flat variant of formats.unpack over multiple words (hot path)
    table = _decode_table(fmt)
    width = fmt.total_bits
    mask = (1 << width) - 1
    per = fmt.lane_count
    lanes: list[DecodedScalar] = []
    append = lanes.append
    for w in words:
        for _ in range(per):
            append(table[w & mask])
            w >>= width
    del lanes[count:]
    return lanes


def fedp_execute(req: FedpRequest, want_trace: bool = True) -> FedpResult:
    """Run the full 4-stage pipeline on one request.

    Pure function of the request; the trace (when requested) records
    every stage's intermediates so any stage can be replayed.
    """
    cfg = req.cfg
    fmt = cfg.mul_format
    lanes = cfg.lanes_per_vector
    need = cfg.words_per_operand
    if len(req.a_words) != need or len(req.b_words) != need:
        raise ValueError(
            f"{fmt.kind.value} N={cfg.n_elements} needs {need} words per operand, "
            f"got {len(req.a_words)}/{len(req.b_words)}"
        )
    spread = req.c_word
    for w in req.a_words:
        spread |= w
    for w in req.b_words:
        spread |= w
    if spread >> 32:
        raise ValueError("request contains a word wider than 32 bits")

    trace = (
        PipelineTrace(cfg, tuple(req.a_words), tuple(req.b_words), req.c_word)
        if want_trace
        else None
    )

    if cfg.is_integer:
        return _execute_int(req, trace)
    return _execute_fp(req, trace, lanes)


def _execute_int(req: FedpRequest, trace: PipelineTrace | None) -> FedpResult:
    cfg = req.cfg
    fmt = cfg.mul_format
    width = fmt.total_bits
    lane_mask = (1 << width) - 1
    half = 1 << (width - 1)
    full = 1 << width
    signed_fmt = fmt.signed
    n = cfg.n_elements
    per_word = fmt.lane_count

    products: list[int] = []
    remaining = n
    for wi in range(len(req.a_words)):
        aw = req.a_words[wi]
        bw = req.b_words[wi]
        for _ in range(min(per_word, remaining)):
            a = aw & lane_mask
            b = bw & lane_mask
            aw >>= width
            bw >>= width
            if signed_fmt:
                if a >= half:
                    a -= full
                if b >= half:
                    b -= full
            products.append(a * b)
        remaining -= per_word
        if remaining <= 0:
            break

    low25, high7 = int_addend_split(req.c_word)
    mask = cfg.field_mask
    aligned = [p & mask for p in products]
    aligned.append(low25)

    want_trace = trace is not None
    pair, raw_sum, rtrace = stage3_accumulate(aligned, cfg, want_trace)
    word = int_high_fixup(raw_sum, high7, cfg)

    if trace is not None:
        trace.stage1_products = products
        trace.stage1_addend_split = (low25, high7)
        trace.stage2_aligned = aligned
        trace.stage2_stickies = [False] * len(aligned)
        trace.stage3_pair = pair
        trace.stage3_raw_sum = raw_sum
        trace.stage3_reduction = rtrace
        trace.result_word = word
    return FedpResult(word, True, None, trace)


def _execute_fp(
    req: FedpRequest, trace: PipelineTrace | None, lanes: int
) -> FedpResult:
    cfg = req.cfg
    fmt = cfg.mul_format
    a_lanes = _decode_lanes(req.a_words, fmt, lanes)
    b_lanes = _decode_lanes(req.b_words, fmt, lanes)
    c_dec = decode(req.c_word, FP32)

    s1 = stage1_multiply(a_lanes, b_lanes, c_dec, cfg)
    if trace is not None:
        trace.stage1_terms = s1.terms
        trace.stage1_special = s1.special
        trace.stage1_all_negative = s1.all_negative
    if s1.special is not None:
        if trace is not None:
            trace.result_word = s1.special
        return FedpResult(s1.special, True, None, trace)

    exps = [t.biased_exp8 for t in s1.terms]
    max_exp, selector, shifts = max_exponent_select(exps)
    aligned, stickies = stage2_align(s1.terms, shifts, cfg)
    sticky = any(stickies)

    want_trace = trace is not None
    pair, raw_sum, rtrace = stage3_accumulate(aligned, cfg, want_trace)
    s4 = stage4_normalize_round(raw_sum, max_exp, sticky, cfg, s1.zero_sign())

    if trace is not None:
        trace.stage2_max_exp = max_exp
        trace.stage2_selector = selector
        trace.stage2_shifts = shifts
        trace.stage2_aligned = aligned
        trace.stage2_stickies = stickies
        trace.stage3_pair = pair
        trace.stage3_raw_sum = raw_sum
        trace.stage3_reduction = rtrace
        trace.stage4_lzc = s4.lzc
        trace.stage4_pre_round = s4.pre_round
        trace.stage4_round_up = s4.round_up
        trace.stage4_sticky = sticky
        trace.result_word = s4.word
    return FedpResult(s4.word, not sticky, max_exp, trace)
