"""Stage-level and end-to-end pipeline tests."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedp import oracle
from fedp.formats import BF8, BF16, FP8, FP16, FP32, INT8, INT32, UINT4, decode
from fedp.pipeline import (
    FedpConfig,
    FedpRequest,
    RawProduct,
    build_sign_matrix,
    fedp_execute,
    int_addend_split,
    int_high_fixup,
    max_exponent_select,
    stage1_multiply,
    stage2_align,
    stage3_accumulate,
    stage4_normalize_round,
)

FP16_CFG = FedpConfig(4, FP16)
INT8_CFG = FedpConfig(4, INT8)

ONE = 0x3C00  # FP16 1.0


def _req(cfg, a_lanes, b_lanes, c):
    width = cfg.mul_format.total_bits
    per = cfg.mul_format.lane_count

    def pack_words(lanes):
        lanes = list(lanes) + [0] * (cfg.words_per_operand * per - len(lanes))
        words = []
        for w in range(cfg.words_per_operand):
            word = 0
            for i in range(per):
                word |= lanes[w * per + i] << (i * width)
            words.append(word)
        return tuple(words)

    return FedpRequest(cfg, pack_words(a_lanes), pack_words(b_lanes), c)


class TestConfig:
    def test_widths_n4(self):
        cfg = FP16_CFG
        assert cfg.nominal_acc_width == 27
        assert cfg.window_width == 30
        assert cfg.low_guard == 5
        assert cfg.field_width == 34

    @pytest.mark.parametrize("n,nominal", [(4, 27), (8, 28), (16, 29), (32, 30)])
    def test_nominal_width_scales(self, n, nominal):
        cfg = FedpConfig(n, FP16)
        assert cfg.nominal_acc_width == nominal
        assert cfg.window_width == nominal + 3

    def test_bad_n(self):
        with pytest.raises(ValueError):
            FedpConfig(5, FP16)

    def test_acc_format_pairing(self):
        assert FedpConfig(4, INT8).acc_format is INT32
        assert FedpConfig(4, FP16).acc_format is FP32
        with pytest.raises(ValueError):
            FedpConfig(4, FP16, acc_format=INT32)
        with pytest.raises(ValueError):
            FedpConfig(4, UINT4, acc_format=FP32)

    def test_fp32_not_a_multiplier_format(self):
        with pytest.raises(ValueError):
            FedpConfig(4, FP32)

    def test_lane_pairing_for_8bit(self):
        assert FedpConfig(4, FP8).lanes_per_vector == 8
        assert FedpConfig(4, BF8).lanes_per_vector == 8
        assert FedpConfig(4, FP16).lanes_per_vector == 4
        assert FedpConfig(4, UINT4).lanes_per_vector == 4


class TestStage1:
    def test_fp16_one_times_one(self):
        lanes = [decode(ONE, FP16)] * 4
        c = decode(0, FP32)
        s1 = stage1_multiply(lanes, lanes, c, FP16_CFG)
        term = s1.terms[0]
        assert term.biased_exp8 == 15 + 15 + 127 - 30 + 1 == 128
        # raw product 1024*1024 placed at the shared 25-bit binal point
        assert term.magnitude == (1024 * 1024) << 3 == 1 << 23
        # value check: magnitude/2^24 * 2^(E-127) == 1.0
        assert term.magnitude * 2 ** (term.biased_exp8 - 151) == 1

    def test_zero_lane_gives_zero_magnitude(self):
        rng = random.Random(40)
        for _ in range(50):
            bits = rng.getrandbits(16)
            if (bits >> 10) & 0x1F == 0x1F:
                continue
            lanes_a = [decode(bits, FP16)] + [decode(0, FP16)] * 3
            lanes_b = [decode(0, FP16)] + [decode(ONE, FP16)] * 3
            s1 = stage1_multiply(lanes_a, lanes_b, decode(0, FP32), FP16_CFG)
            assert s1.terms[0].magnitude == 0

    def test_int8_products_exact(self):
        lanes_a = [decode(0x80, INT8)] + [decode(0, INT8)] * 3
        lanes_b = [decode(0x7F, INT8)] + [decode(0, INT8)] * 3
        s1 = stage1_multiply(lanes_a, lanes_b, decode(0, INT32), INT8_CFG)
        assert s1.products[0] == -128 * 127 == -16256

    def test_addend_conversion(self):
        lanes = [decode(0, FP16)] * 4
        c = decode(0x40800000, FP32)  # 4.0
        s1 = stage1_multiply(lanes, lanes, c, FP16_CFG)
        aterm = s1.terms[-1]
        assert aterm.biased_exp8 == 129
        assert aterm.magnitude == (1 << 23) << 1
        assert aterm.magnitude * 2 ** (aterm.biased_exp8 - 151) == 4

    def test_nan_short_circuits(self):
        lanes_a = [decode(0x7E01, FP16)] + [decode(ONE, FP16)] * 3
        lanes_b = [decode(ONE, FP16)] * 4
        s1 = stage1_multiply(lanes_a, lanes_b, decode(0, FP32), FP16_CFG)
        assert s1.special == 0x7FC00000


class TestMaxExponentSelect:
    def test_spec_example(self):
        max_exp, selector, shifts = max_exponent_select([5, 9, 2, 9, 1])
        assert max_exp == 9
        assert shifts == (4, 0, 7, 0, 8)
        assert selector == (0, 1, 0, 0, 0)  # ties break to the lowest index

    def test_all_equal(self):
        max_exp, selector, shifts = max_exponent_select([7, 7, 7])
        assert max_exp == 7
        assert selector == (1, 0, 0)
        assert shifts == (0, 0, 0)

    def test_single_entry(self):
        assert max_exponent_select([42]) == (42, (1,), (0,))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            max_exponent_select([])

    def test_matches_sign_matrix_selection(self):
        rng = random.Random(41)
        for _ in range(2_000):
            n = rng.randint(1, 9)
            exps = [rng.randint(0, 255) for _ in range(n)]
            max_exp, selector, shifts = max_exponent_select(exps)
            matrix = build_sign_matrix(exps)
            candidates = [i for i, row in enumerate(matrix.signs) if 1 not in row]
            k = min(candidates)
            assert selector[k] == 1 and sum(selector) == 1
            assert max_exp == exps[k] == max(exps)
            assert shifts == tuple(-matrix.diffs[i][k] for i in range(n))

    def test_selected_row_all_zeros_in_ge_adjusted_matrix(self):
        rng = random.Random(42)
        for _ in range(2_000):
            exps = [rng.randint(0, 255) for _ in range(rng.randint(1, 8))]
            _, selector, _ = max_exponent_select(exps)
            k = selector.index(1)
            matrix = build_sign_matrix(exps)
            # >=-adjusted: a tie is "not below", so its sign bit is 0
            assert all(matrix.signs[k][j] == 0 for j in range(len(exps)))
            for i in range(len(exps)):
                for j in range(len(exps)):
                    if exps[i] != exps[j]:
                        assert matrix.signs[i][j] | matrix.signs[j][i] == 1
                    assert matrix.signs[i][i] == 0


class TestStage2:
    def test_no_shift_no_sticky(self):
        terms = [RawProduct(0, 128, 0x155_5555)]
        aligned, stickies = stage2_align(terms, [0], FP16_CFG)
        assert aligned == [0x155_5555 << 5]
        assert stickies == [False]

    def test_full_shift_out(self):
        terms = [RawProduct(0, 0, 1)]
        aligned, stickies = stage2_align(terms, [FP16_CFG.window_width], FP16_CFG)
        assert aligned == [0]
        assert stickies == [True]

    def test_negative_term_two_complement(self):
        terms = [RawProduct(1, 128, 4)]
        aligned, _ = stage2_align(terms, [0], FP16_CFG)
        assert aligned == [(-(4 << 5)) & FP16_CFG.field_mask]

    @given(mag=st.integers(0, 2**25 - 1), shift=st.integers(0, 40))
    @settings(max_examples=300, deadline=None)
    def test_shift_oracle(self, mag, shift):
        placed = mag << FP16_CFG.low_guard
        aligned, stickies = stage2_align([RawProduct(0, 200, mag)], [shift], FP16_CFG)
        assert aligned[0] == placed >> shift
        assert stickies[0] == (placed % (1 << shift) != 0 if shift else False)

    def test_stage1_sticky_carries_through(self):
        _, stickies = stage2_align([RawProduct(0, 128, 8, sticky=True)], [0], FP16_CFG)
        assert stickies == [True]


class TestStage3:
    def test_all_zero(self):
        pair, raw, _ = stage3_accumulate([0, 0, 0, 0, 0], FP16_CFG)
        assert raw == 0

    def test_cancellation(self):
        mask = FP16_CFG.field_mask
        x = 0x3FFFF
        pair, raw, _ = stage3_accumulate([x, (-x) & mask, 0, 0, 0], FP16_CFG)
        assert raw == 0

    @given(st.lists(st.integers(0, 2**34 - 1), min_size=1, max_size=9))
    @settings(max_examples=300, deadline=None)
    def test_sum_oracle(self, terms):
        _, raw, _ = stage3_accumulate(terms, FP16_CFG)
        assert raw == sum(terms) & FP16_CFG.field_mask


class TestStage4:
    def test_zero_sum(self):
        r = stage4_normalize_round(0, 128, False, FP16_CFG)
        assert r.word == 0

    def test_negative_zero(self):
        r = stage4_normalize_round(0, 0, False, FP16_CFG, zero_sign=1)
        assert r.word == 0x80000000

    def test_exact_value(self):
        # 4.0 from the all-ones dot product: raw_sum = 4 * 2^28
        r = stage4_normalize_round(1 << 30, 128, False, FP16_CFG)
        assert r.word == 0x40800000

    def test_sticky_breaks_tie(self):
        # raw 2^29 is the value 2.0 at max_exp 128; bit 5 adds half an ulp
        raw = (1 << 29) | (1 << 5)
        base = stage4_normalize_round(raw, 128, False, FP16_CFG)
        nudged = stage4_normalize_round(raw, 128, True, FP16_CFG)
        assert base.word == 0x40000000  # tie to even
        assert nudged.word == 0x40000001  # sticky forces round up


class TestIntAddendPath:
    def test_split_examples(self):
        assert int_addend_split(0) == (0, 0)
        assert int_addend_split(0x01FFFFFF) == (0x1FFFFFF, 0)
        assert int_addend_split(0xFE000000) == (0, 0x7F)

    def test_split_reassembles(self):
        rng = random.Random(43)
        for _ in range(1_000):
            c = rng.getrandbits(32)
            low, high = int_addend_split(c)
            assert (high << 25) | low == c

    def test_fixup_identity(self):
        rng = random.Random(44)
        for _ in range(1_000):
            c = rng.getrandbits(32)
            low, high = int_addend_split(c)
            assert int_high_fixup(low, high, INT8_CFG) == c

    def test_fixup_carry_and_borrow(self):
        mask = INT8_CFG.field_mask
        low, high = int_addend_split(0xFFFFFFFF)  # c = -1
        low_sum = (low + 2) & mask  # products contribute +2
        assert int_high_fixup(low_sum, high, INT8_CFG) == 1
        low, high = int_addend_split(3)
        low_sum = (low - 5) & mask  # products contribute -5
        assert int_high_fixup(low_sum, high, INT8_CFG) == 0xFFFFFFFE


class TestExecuteFp:
    def test_all_ones(self):
        res = fedp_execute(_req(FP16_CFG, [ONE] * 4, [ONE] * 4, 0))
        assert res.word == 0x40800000
        assert res.lossless

    def test_alignment_and_cancellation(self):
        # [2^10, 1, -2^10, 1] . [1,1,1,1] = 2.0
        big = 0x6400  # FP16 2^10
        res = fedp_execute(_req(FP16_CFG, [big, ONE, big | 0x8000, ONE], [ONE] * 4, 0))
        assert res.word == 0x40000000

    def test_addend_only(self):
        res = fedp_execute(_req(FP16_CFG, [0] * 4, [0] * 4, 0x41200000))
        assert res.word == 0x41200000  # 10.0 passes through

    def test_random_vs_oracle_sampled(self):
        rng = random.Random(45)
        for _ in range(500):
            a = [rng.getrandbits(16) for _ in range(4)]
            b = [rng.getrandbits(16) for _ in range(4)]
            c = rng.getrandbits(32)
            res = fedp_execute(_req(FP16_CFG, a, b, c), want_trace=False)
            want = oracle.exact_dot_fp(a, b, c, FP16_CFG)
            if res.lossless:
                assert res.word == want.word
            else:
                assert oracle.ulp_distance(res.word, want.word) <= 1 or res.max_exp is not None

    def test_lossless_window_is_bit_exact(self):
        # constructed so every shift stays within low_guard: all exponents equal
        rng = random.Random(46)
        count = 0
        for _ in range(2_000):
            e = rng.randint(2, 28)
            a = [(rng.getrandbits(1) << 15) | (e << 10) | rng.getrandbits(10) for _ in range(4)]
            b = [(rng.getrandbits(1) << 15) | (e << 10) | rng.getrandbits(10) for _ in range(4)]
            res = fedp_execute(_req(FP16_CFG, a, b, 0), want_trace=False)
            if res.lossless:
                count += 1
                assert res.word == oracle.exact_dot_fp(a, b, 0, FP16_CFG).word
        assert count > 1_500  # equal exponents shift by at most 1

    def test_special_values(self):
        nan = 0x7E01
        inf = 0x7C00
        ninf = 0xFC00
        assert fedp_execute(_req(FP16_CFG, [nan, 0, 0, 0], [ONE] * 4, 0)).word == 0x7FC00000
        assert fedp_execute(_req(FP16_CFG, [inf, 0, 0, 0], [ONE] * 4, 0)).word == 0x7F800000
        assert fedp_execute(_req(FP16_CFG, [ninf, 0, 0, 0], [ONE] * 4, 0)).word == 0xFF800000
        # Inf - Inf
        assert fedp_execute(_req(FP16_CFG, [inf, ninf, 0, 0], [ONE] * 4, 0)).word == 0x7FC00000
        # Inf * 0
        assert fedp_execute(_req(FP16_CFG, [inf, 0, 0, 0], [0, ONE, ONE, ONE], 0)).word == 0x7FC00000
        # NaN addend
        assert fedp_execute(_req(FP16_CFG, [ONE] * 4, [ONE] * 4, 0x7FC00001)).word == 0x7FC00000
        # Inf addend against finite products
        assert fedp_execute(_req(FP16_CFG, [ONE] * 4, [ONE] * 4, 0xFF800000)).word == 0xFF800000
        # Inf addend opposing an Inf product
        assert fedp_execute(_req(FP16_CFG, [inf, 0, 0, 0], [ONE] * 4, 0xFF800000)).word == 0x7FC00000

    def test_negative_zero_result(self):
        res = fedp_execute(_req(FP16_CFG, [0x8000] * 4, [0x0000] * 4, 0x80000000))
        assert res.word == 0x80000000
        res = fedp_execute(_req(FP16_CFG, [0x8000] * 4, [0x0000] * 4, 0x00000000))
        assert res.word == 0

    def test_zero_products_pass_addend_sign_through(self):
        # flushed negative-subnormal addend keeps its sign
        res = fedp_execute(_req(FP16_CFG, [0] * 4, [0] * 4, 0x80000001))
        assert res.word == 0x80000000
        assert res.word == oracle.exact_dot_fp([0] * 4, [0] * 4, 0x80000001, FP16_CFG).word
        # nonzero cancelling products still give +0 even with a -0-ish addend
        x = 0x4A12
        res = fedp_execute(_req(FP16_CFG, [x, x | 0x8000, 0, 0], [ONE, ONE, 0, 0], 0x80000000))
        assert res.word == 0
        assert (
            res.word
            == oracle.exact_dot_fp([x, x | 0x8000, 0, 0], [ONE, ONE, 0, 0], 0x80000000, FP16_CFG).word
        )

    def test_subnormal_flush_observable(self):
        sub = 0x0001
        res = fedp_execute(_req(FP16_CFG, [sub, 0, 0, 0], [ONE, 0, 0, 0], 0))
        assert res.word == 0
        cfg = FedpConfig(4, FP16, subnormal_flush=False)
        res = fedp_execute(_req(cfg, [sub, 0, 0, 0], [ONE, 0, 0, 0], 0))
        assert res.word == 0x33800000  # 2^-24 survives
        assert res.word == oracle.exact_dot_fp([sub, 0, 0, 0], [ONE, 0, 0, 0], 0, cfg).word

    def test_word_count_mismatch(self):
        with pytest.raises(ValueError):
            fedp_execute(FedpRequest(FP16_CFG, (0,), (0, 0), 0))
        with pytest.raises(ValueError):
            fedp_execute(FedpRequest(FP16_CFG, (0, 0), (0, 0), 1 << 32))

    def test_bf16_exponent_saturation(self):
        cfg = FedpConfig(4, BF16)
        big = 0x7F7F
        res = fedp_execute(_req(cfg, [big, 0, 0, 0], [big, 0, 0, 0], 0))
        assert res.word == 0x7F800000
        assert res.word == oracle.exact_dot_fp([big, 0, 0, 0], [big, 0, 0, 0], 0, cfg).word

    def test_bf16_exponent_underflow_preshift(self):
        cfg = FedpConfig(4, BF16)
        tiny = 0x0180  # BF16 2^-124
        a = [tiny, 0, 0, 0]
        res = fedp_execute(_req(cfg, a, a, 0), want_trace=False)
        # 2^-248 is far below the FP32 range: flushed output, matching the oracle
        assert res.word == oracle.exact_dot_fp(a, a, 0, cfg).word == 0


class TestFp8Pairing:
    def test_eight_ones(self):
        cfg = FedpConfig(4, FP8)
        one = 0x38  # E4M3 1.0
        res = fedp_execute(_req(cfg, [one] * 8, [one] * 8, 0))
        assert res.word == 0x41000000  # 8.0: eight paired lane products

    def test_pair_cancellation(self):
        cfg = FedpConfig(4, FP8)
        one = 0x38
        none = 0xB8
        res = fedp_execute(_req(cfg, [one, none] + [0] * 6, [one, one] + [0] * 6, 0))
        assert res.word == 0
        assert res.lossless

    def test_bf8_vs_oracle_sampled(self):
        cfg = FedpConfig(4, BF8)
        rng = random.Random(47)
        for _ in range(300):
            a = [rng.getrandbits(8) for _ in range(8)]
            b = [rng.getrandbits(8) for _ in range(8)]
            c = rng.getrandbits(32)
            res = fedp_execute(_req(cfg, a, b, c), want_trace=False)
            want = oracle.exact_dot_fp(a, b, c, cfg)
            if res.lossless:
                assert res.word == want.word


class TestExecuteInt:
    def test_spec_maximum(self):
        res = fedp_execute(_req(INT8_CFG, [127] * 4, [127] * 4, 0))
        assert res.word == 64516

    def test_addend_identity(self):
        rng = random.Random(48)
        for _ in range(500):
            c = rng.getrandbits(32)
            res = fedp_execute(_req(INT8_CFG, [0] * 4, [0] * 4, c), want_trace=False)
            assert res.word == c

    def test_wrap_past_2_31(self):
        a = [0x80] * 4  # -128 each
        b = [0x80] * 4
        c = 0x7FFFF000
        res = fedp_execute(_req(INT8_CFG, a, b, c))
        want = (4 * (-128) * (-128) + 0x7FFFF000) & 0xFFFFFFFF
        assert res.word == want == oracle.exact_dot_int(a, b, c, INT8_CFG)

    def test_random_vs_oracle(self):
        rng = random.Random(49)
        for cfg in (INT8_CFG, FedpConfig(8, UINT4)):
            lanes = cfg.lanes_per_vector
            bits = cfg.mul_format.total_bits
            for _ in range(2_000):
                a = [rng.getrandbits(bits) for _ in range(lanes)]
                b = [rng.getrandbits(bits) for _ in range(lanes)]
                c = rng.getrandbits(32)
                res = fedp_execute(_req(cfg, a, b, c), want_trace=False)
                assert res.word == oracle.exact_dot_int(a, b, c, cfg)


class TestTraceAndDeterminism:
    def test_repeat_runs_identical(self):
        rng = random.Random(50)
        for _ in range(100):
            a = tuple(rng.getrandbits(32) for _ in range(2))
            b = tuple(rng.getrandbits(32) for _ in range(2))
            c = rng.getrandbits(32)
            r1 = fedp_execute(FedpRequest(FP16_CFG, a, b, c), want_trace=False)
            r2 = fedp_execute(FedpRequest(FP16_CFG, a, b, c), want_trace=False)
            assert r1.word == r2.word

    def test_stage_replay_reproduces_trace(self):
        from fedp.formats import PackedWord, unpack

        rng = random.Random(51)
        replayed = 0
        for _ in range(200):
            a = tuple(rng.getrandbits(32) for _ in range(2))
            b = tuple(rng.getrandbits(32) for _ in range(2))
            c = rng.getrandbits(32)
            res = fedp_execute(FedpRequest(FP16_CFG, a, b, c))
            t = res.trace
            assert t.result_word == res.word
            if t.stage1_special is not None:
                continue
            replayed += 1
            # stage 1 from the recorded inputs
            a_lanes = [d for w in a for d in unpack(PackedWord(w, FP16))]
            b_lanes = [d for w in b for d in unpack(PackedWord(w, FP16))]
            s1 = stage1_multiply(a_lanes, b_lanes, decode(c, FP32), FP16_CFG)
            assert s1.terms == t.stage1_terms
            # stage 2 from stage-1 outputs
            exps = [term.biased_exp8 for term in s1.terms]
            max_exp, selector, shifts = max_exponent_select(exps)
            assert max_exp == t.stage2_max_exp
            assert selector == t.stage2_selector
            assert shifts == t.stage2_shifts
            aligned, stickies = stage2_align(s1.terms, shifts, FP16_CFG)
            assert aligned == t.stage2_aligned
            assert stickies == t.stage2_stickies
            # stage 3 from stage-2 outputs
            pair, raw, _ = stage3_accumulate(aligned, FP16_CFG)
            assert pair == t.stage3_pair
            assert raw == t.stage3_raw_sum
            # stage 4 from stage-3 outputs
            s4 = stage4_normalize_round(
                raw, max_exp, any(stickies), FP16_CFG, s1.zero_sign()
            )
            assert s4.word == t.result_word
        assert replayed > 100

    def test_int_trace_records_split(self):
        res = fedp_execute(_req(INT8_CFG, [1, 2, 3, 4], [5, 6, 7, 8], 0xFE000003))
        t = res.trace
        assert t.stage1_products == [5, 12, 21, 32]
        assert t.stage1_addend_split == (3, 0x7F)
        assert t.stage3_raw_sum is not None

    def test_reduction_trace_attached_when_requested(self):
        res = fedp_execute(_req(FP16_CFG, [ONE] * 4, [ONE] * 4, 0))
        assert res.trace.stage3_reduction is not None
        assert res.trace.stage3_reduction.levels[0] == res.trace.stage2_aligned
        res_fast = fedp_execute(_req(FP16_CFG, [ONE] * 4, [ONE] * 4, 0), want_trace=False)
        assert res_fast.trace is None
