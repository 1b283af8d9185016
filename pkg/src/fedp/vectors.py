"""Test-vector files: a JSON header line plus hex record lines.

File layout::

    #%fedp {"version": 1, "format": "fp16", "n": 4, "count": 2, "seed": 7, "case": "uniform"}
    A=3c003c00 B=3c003c00 C=00000000 EXPECT=40000000
    A=12345678 B=9abcdef0 C=3f800000 EXPECT=3f800001

Each register is eight hex digits; multi-word operands are comma
separated.  EXPECT is regenerable from the inputs via the oracle.  All
randomness flows from the header seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from . import oracle
from .formats import FORMATS, FormatKind, FpClass, ScalarFormat, decode
from .pipeline import FedpConfig

__all__ = [
    "HEADER_PREFIX",
    "CASE_CLASSES",
    "VectorHeader",
    "TestVectorRecord",
    "VectorFormatError",
    "expected_word",
    "generate_records",
    "write_vectors",
    "read_vectors",
    "config_from_header",
]

HEADER_PREFIX = "#%fedp "

CASE_CLASSES = ("uniform", "cancellation", "spread", "special", "boundary")

# Case classes that rely on FP special values or exponents.
_FP_ONLY_CASES = ("spread", "special")


class VectorFormatError(ValueError):
    """Malformed vector file; message carries the offending line number."""


@dataclass(frozen=True)
class VectorHeader:
    format: str
    n: int
    count: int
    seed: int
    case: str
    version: int = 1


@dataclass(frozen=True)
class TestVectorRecord:
    a_words: tuple[int, ...]
    b_words: tuple[int, ...]
    c_word: int
    expected_word: int

    __test__ = False  # not a pytest class, despite the name


def config_from_header(header: VectorHeader) -> FedpConfig:
    kind = FormatKind(header.format)
    return FedpConfig(header.n, FORMATS[kind])


def expected_word(cfg: FedpConfig, a_words, b_words, c_word: int) -> int:
    """Oracle-expected result for one record."""
    fmt = cfg.mul_format
    lanes = cfg.lanes_per_vector
    a_lanes = [x for w in a_words for x in oracle.split_word(w, fmt)][:lanes]
    b_lanes = [x for w in b_words for x in oracle.split_word(w, fmt)][:lanes]
    if cfg.is_integer:
        return oracle.exact_dot_int(a_lanes, b_lanes, c_word, cfg)
    return oracle.exact_dot_fp(a_lanes, b_lanes, c_word, cfg).word


# ---------------------------------------------------------------------------
# lane generators


def _finite_lane(rng: random.Random, fmt: ScalarFormat) -> int:
    while True:
        bits = rng.getrandbits(fmt.total_bits)
        if fmt.is_integer:
            return bits
        if decode(bits, fmt).fp_class not in (FpClass.NAN, FpClass.INF):
            return bits


def _special_lane(rng: random.Random, fmt: ScalarFormat) -> int:
    exp_all = fmt.exp_mask << fmt.man_bits
    sign = rng.getrandbits(1) << (fmt.total_bits - 1)
    if fmt.kind is FormatKind.FP8:
        return sign | exp_all | fmt.man_mask  # the single NaN pattern
    if rng.random() < 0.5 or fmt.man_bits == 0:
        return sign | exp_all  # Inf
    return sign | exp_all | rng.randint(1, fmt.man_mask)  # NaN


def _boundary_pool(fmt: ScalarFormat) -> list[int]:
    if fmt.is_integer:
        top = 1 << (fmt.total_bits - 1)
        pool = [0, 1, (1 << fmt.total_bits) - 1]
        if fmt.signed:
            pool += [top, top - 1]  # most negative, most positive
        return pool
    sign = 1 << (fmt.total_bits - 1)
    one = fmt.bias << fmt.man_bits
    min_normal = 1 << fmt.man_bits
    min_sub = 1
    if fmt.kind is FormatKind.FP8:
        max_finite = (fmt.exp_mask << fmt.man_bits) | (fmt.man_mask - 1)
    else:
        max_finite = ((fmt.exp_mask - 1) << fmt.man_bits) | fmt.man_mask
    pool = [0, one, min_normal, min_sub, max_finite]
    return pool + [sign | p for p in pool]


def _spread_lane(rng: random.Random, fmt: ScalarFormat, high: bool) -> int:
    top = fmt.exp_mask - 1
    exp = rng.randint(max(1, top - 1), top) if high else rng.randint(1, 2)
    sign = rng.getrandbits(1)
    man = rng.getrandbits(fmt.man_bits)
    return (sign << (fmt.total_bits - 1)) | (exp << fmt.man_bits) | man


def _finite_c(rng: random.Random) -> int:
    while True:
        bits = rng.getrandbits(32)
        if (bits & 0x7F800000) != 0x7F800000:
            return bits


def _negate_lane(bits: int, fmt: ScalarFormat) -> int:
    if fmt.is_integer:
        return (-bits) & ((1 << fmt.total_bits) - 1)
    return bits ^ (1 << (fmt.total_bits - 1))


def _gen_lanes(
    rng: random.Random, cfg: FedpConfig, case: str
) -> tuple[list[int], list[int], int]:
    fmt = cfg.mul_format
    lanes = cfg.lanes_per_vector

    if case == "uniform":
        a = [_finite_lane(rng, fmt) for _ in range(lanes)]
        b = [_finite_lane(rng, fmt) for _ in range(lanes)]
        c = rng.getrandbits(32) if cfg.is_integer else _finite_c(rng)
        return a, b, c

    if case == "cancellation":
        a: list[int] = []
        b: list[int] = []
        unsigned_int = cfg.is_integer and not fmt.signed
        for _ in range(lanes // 2):
            x = _finite_lane(rng, fmt)
            y = _finite_lane(rng, fmt)
            nx = x if unsigned_int else _negate_lane(x, fmt)
            if not unsigned_int and rng.random() < 0.3:
                nx ^= 1  # near-cancel: perturb the low mantissa bit
            a += [x, nx]
            b += [y, y]
        if unsigned_int:
            # No negation available: steer the sum close to the 2^32 wrap.
            c = ((1 << 32) - rng.randint(0, 1 << 12)) & 0xFFFFFFFF
        elif cfg.is_integer:
            c = rng.choice([0, 1, 0xFFFFFFFF, rng.getrandbits(32)])
        else:
            c = rng.choice([0, 0x00000001, 0x80000001, _finite_c(rng)])
        return a, b, c

    if case == "spread":
        a = [_spread_lane(rng, fmt, high=(i % 2 == 0)) for i in range(lanes)]
        b = [_spread_lane(rng, fmt, high=bool(rng.getrandbits(1))) for _ in range(lanes)]
        c = _finite_c(rng)
        return a, b, c

    if case == "special":
        a = [_finite_lane(rng, fmt) for _ in range(lanes)]
        b = [_finite_lane(rng, fmt) for _ in range(lanes)]
        k = rng.randrange(lanes)
        if rng.random() < 0.5:
            a[k] = _special_lane(rng, fmt)
        else:
            b[k] = _special_lane(rng, fmt)
        if rng.random() < 0.25:
            c = 0x7FC00000 if rng.random() < 0.5 else 0x7F800000 | (rng.getrandbits(1) << 31)
        else:
            c = _finite_c(rng)
        return a, b, c

    if case == "boundary":
        pool = _boundary_pool(fmt)
        a = [rng.choice(pool) for _ in range(lanes)]
        b = [rng.choice(pool) for _ in range(lanes)]
        if cfg.is_integer:
            c = rng.choice([0, 1, 0x7FFFFFFF, 0x80000000, 0xFFFFFFFF, rng.getrandbits(32)])
        else:
            c = rng.choice([0, 0x80000000, 0x7F7FFFFF, 0xFF7FFFFF, 0x00800000, _finite_c(rng)])
        return a, b, c

    raise ValueError(f"unknown case class {case!r}")


def _pack_lanes(lanes: list[int], fmt: ScalarFormat, n_words: int) -> tuple[int, ...]:
    words = []
    per = fmt.lane_count
    for w in range(n_words):
        word = 0
        for i, lane in enumerate(lanes[w * per : (w + 1) * per]):
            word |= lane << (i * fmt.total_bits)
        words.append(word)
    return tuple(words)


def generate_records(
    cfg: FedpConfig, count: int, seed: int, case: str = "uniform"
) -> list[TestVectorRecord]:
    """Deterministic records for one config, expected words from the oracle."""
    if case not in CASE_CLASSES:
        raise ValueError(f"unknown case class {case!r}")
    if cfg.is_integer and case in _FP_ONLY_CASES:
        raise ValueError(f"case {case!r} needs a floating-point format")
    rng = random.Random(seed)
    n_words = cfg.words_per_operand
    fmt = cfg.mul_format
    records = []
    for _ in range(count):
        a, b, c = _gen_lanes(rng, cfg, case)
        a_words = _pack_lanes(a, fmt, n_words)
        b_words = _pack_lanes(b, fmt, n_words)
        records.append(
            TestVectorRecord(a_words, b_words, c, expected_word(cfg, a_words, b_words, c))
        )
    return records


# ---------------------------------------------------------------------------
# file IO


def write_vectors(path: str | Path, header: VectorHeader, records: list[TestVectorRecord]) -> None:
    lines = [HEADER_PREFIX + json.dumps(header.__dict__, sort_keys=True)]
    for r in records:
        a = ",".join(f"{w:08x}" for w in r.a_words)
        b = ",".join(f"{w:08x}" for w in r.b_words)
        lines.append(f"A={a} B={b} C={r.c_word:08x} EXPECT={r.expected_word:08x}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_words(field: str, text: str, lineno: int) -> tuple[int, ...]:
    words = []
    for part in text.split(","):
        if len(part) != 8:
            raise VectorFormatError(
                f"line {lineno}: {field} register {part!r} is not 8 hex digits"
            )
        try:
            words.append(int(part, 16))
        except ValueError:
            raise VectorFormatError(f"line {lineno}: bad hex in {field}: {part!r}") from None
    return tuple(words)


def read_vectors(path: str | Path) -> tuple[VectorHeader, list[TestVectorRecord]]:
    """Parse a vector file, reporting line numbers on malformed input."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith(HEADER_PREFIX):
        raise VectorFormatError(f"line 1: missing {HEADER_PREFIX.strip()} header")
    try:
        meta = json.loads(lines[0][len(HEADER_PREFIX):])
        header = VectorHeader(**meta)
    except (json.JSONDecodeError, TypeError) as exc:
        raise VectorFormatError(f"line 1: bad header: {exc}") from None

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields: dict[str, str] = {}
        for token in line.split():
            if "=" not in token:
                raise VectorFormatError(f"line {lineno}: expected key=value, got {token!r}")
            key, _, value = token.partition("=")
            fields[key] = value
        missing = {"A", "B", "C", "EXPECT"} - fields.keys()
        if missing:
            raise VectorFormatError(f"line {lineno}: missing fields {sorted(missing)}")
        a_words = _parse_words("A", fields["A"], lineno)
        b_words = _parse_words("B", fields["B"], lineno)
        (c_word,) = _parse_words("C", fields["C"], lineno)
        (expect,) = _parse_words("EXPECT", fields["EXPECT"], lineno)
        records.append(TestVectorRecord(a_words, b_words, c_word, expect))
    return header, records
