"""Differential execution of vector records against the oracle.

The accuracy contract checked per record:

* integer configs: bit-exact, always;
* FP records with no information loss (no sticky anywhere): bit-exact;
* lossy FP records: within 1 step of the oracle on the output lattice,
  or within the accumulation's provable absolute error bound.

Every truncation in the datapath discards less than one unit in the
last place of the 25-bit intermediate at the maximum exponent, i.e.
2^(max_exp - 151) per term, so a lossy result sits within
B = (N+1) * 2^(max_exp - 151) of the exact sum before rounding; adding
one rounding quantum per side gives the asserted bound
|got - expected| <= B + 2 * max(quantum(got), quantum(expected)).
This is what catches sums that cancel below the window's precision,
where step distance is meaningless.

The summary reports the bit-exact fraction and the worst observed step
distance either way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from .oracle import fp32_word_to_fixed, ulp_distance
from .pipeline import FedpConfig, FedpRequest, FedpResult, fedp_execute
from .vectors import TestVectorRecord

__all__ = ["RecordOutcome", "RunSummary", "check_record", "run_records"]


class RecordOutcome(NamedTuple):
    index: int
    got: int
    expected: int
    ok: bool
    bit_exact: bool
    lossless: bool
    ulp: int
    window_rescued: bool


@dataclass
class RunSummary:
    total: int = 0
    failures: int = 0
    bit_exact: int = 0
    lossless: int = 0
    window_rescued: int = 0
    worst_ulp: int = 0
    worst_ulp_index: int = -1

    @property
    def ok(self) -> bool:
        return self.failures == 0

    @property
    def bit_exact_fraction(self) -> float:
        return self.bit_exact / self.total if self.total else 1.0

    def describe(self) -> str:
        return (
            f"records={self.total} failures={self.failures} "
            f"bit-exact={self.bit_exact} ({self.bit_exact_fraction:.4%}) "
            f"lossless={self.lossless} window-rescued={self.window_rescued} "
            f"worst-ulp={self.worst_ulp}"
        )


def _quantum_exp(word: int) -> int:
    """log2 of one output step at this word's magnitude.

    Zero's nearest nonzero neighbours are +/-2^-126 (flushed lattice).
    """
    mag = word & 0x7FFFFFFF
    if mag < 0x800000:
        return -126
    return (mag >> 23) - 150


def _within_loss_bound(got: int, expected: int, max_exp: int, cfg: FedpConfig) -> bool:
    """Exact-integer check of |got - expected| <= B + 2*max quantum.

    B = (N+1) * 2^(max_exp - 151): each of the N+1 terms truncates less
    than one unit in the last place of the 25-bit intermediate at the
    maximum exponent.  Only finite words qualify.
    """
    fa = fp32_word_to_fixed(got)
    fb = fp32_word_to_fixed(expected)
    if fa is None or fb is None:
        return False
    bound_exp = max_exp - 151
    q_exp = max(_quantum_exp(got), _quantum_exp(expected))
    base = min(fa.exp2, fb.exp2, bound_exp, q_exp)
    diff = abs((fa.mantissa << (fa.exp2 - base)) - (fb.mantissa << (fb.exp2 - base)))
    allow = ((cfg.n_elements + 1) << (bound_exp - base)) + (2 << (q_exp - base))
    return diff <= allow


def check_record(
    cfg: FedpConfig, rec: TestVectorRecord, index: int = 0, want_trace: bool = False
) -> tuple[RecordOutcome, FedpResult]:
    """Execute one record and judge it under the accuracy contract."""
    res = fedp_execute(
        FedpRequest(cfg, rec.a_words, rec.b_words, rec.c_word), want_trace
    )
    bit_exact = res.word == rec.expected_word
    if cfg.is_integer:
        outcome = RecordOutcome(index, res.word, rec.expected_word, bit_exact, bit_exact, True, 0 if bit_exact else 1 << 32, False)
        return outcome, res

    if bit_exact:
        outcome = RecordOutcome(index, res.word, rec.expected_word, True, True, res.lossless, 0, False)
        return outcome, res

    ulp = ulp_distance(res.word, rec.expected_word)
    if res.lossless:
        ok = False
        rescued = False
    elif ulp <= 1:
        ok = True
        rescued = False
    else:
        rescued = res.max_exp is not None and _within_loss_bound(
            res.word, rec.expected_word, res.max_exp, cfg
        )
        ok = rescued
    outcome = RecordOutcome(index, res.word, rec.expected_word, ok, False, res.lossless, ulp, rescued)
    return outcome, res


def run_records(
    cfg: FedpConfig,
    records: Sequence[TestVectorRecord],
    collect: bool = False,
    on_fail: Callable[[RecordOutcome, FedpResult], None] | None = None,
) -> tuple[RunSummary, list[RecordOutcome]]:
    """Run a batch; aggregation is order-independent (counts and maxima)."""
    summary = RunSummary()
    outcomes: list[RecordOutcome] = []
    for i, rec in enumerate(records):
        outcome, res = check_record(cfg, rec, i, want_trace=False)
        summary.total += 1
        if outcome.bit_exact:
            summary.bit_exact += 1
        if outcome.lossless:
            summary.lossless += 1
        if outcome.window_rescued:
            summary.window_rescued += 1
        if not outcome.ok:
            summary.failures += 1
            if on_fail is not None:
                on_fail(outcome, res)
        if outcome.ulp != 1 << 32 and outcome.ulp > summary.worst_ulp:
            summary.worst_ulp = outcome.ulp
            summary.worst_ulp_index = i
        if collect:
            outcomes.append(outcome)
    return summary, outcomes
