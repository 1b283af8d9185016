"""Bit-accurate model of a mixed-precision fused dot product unit.

The pipeline computes sum(a_i * b_i) + c in one fused 4-stage datapath
for FP16/BF16/FP8/BF8 inputs with FP32 accumulation and INT8/UINT4
inputs with INT32 accumulation, modeled bit-for-bit down to the
compressor trees.  An independent exact-arithmetic oracle backs the
differential test harness.
"""

from .bitmath import (
    CarrySavePair,
    ReductionTrace,
    compress_3_2,
    compress_4_2,
    csa_reduce_mod4,
    kogge_stone_add,
    leading_zero_count,
    wallace_multiply,
)
from .formats import (
    BF8,
    BF16,
    FORMATS,
    FP8,
    FP16,
    FP32,
    INT8,
    INT32,
    UINT4,
    DecodedScalar,
    FormatKind,
    FpClass,
    PackedWord,
    ScalarFormat,
    decode,
    encode,
    encode_fp32,
    pack,
    unpack,
)
from .oracle import ExactFixedPoint, exact_dot_fp, exact_dot_int, ulp_distance
from .perf import (
    BackendSpec,
    filled_pipeline_throughput,
    single_cycle_throughput,
    tcu_flops_per_issue,
)
from .pipeline import (
    FedpConfig,
    FedpRequest,
    FedpResult,
    PipelineTrace,
    RawProduct,
    SignMatrix,
    fedp_execute,
)

__version__ = "0.1.0"
