"""Command-line front end: vector generation, batch runs, throughput.

Subcommands::

    fedp gen  --format fp16 --n 4 --count 1000 --seed 7 --case uniform -o vecs.txt
    fedp run  vecs.txt [--trace] [--report DIR]
    fedp perf [--flops 32 --latency 4 --fmax 306.6e6 | --paper-defaults] [--report DIR]

Exit status of `run` is 0 iff every record satisfies the accuracy
contract.  --report writes a CSV and a PNG figure into the directory.
"""

from __future__ import annotations

import argparse
import sys

from . import harness, perf, vectors
from .formats import FORMATS, FormatKind
from .pipeline import FedpConfig, PipelineTrace

__all__ = ["main"]

_FORMAT_NAMES = [k.value for k in FormatKind if k not in (FormatKind.FP32, FormatKind.INT32)]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedp",
        description="Bit-accurate mixed-precision fused dot product model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a test-vector file")
    gen.add_argument("--format", required=True, choices=_FORMAT_NAMES)
    gen.add_argument("--n", type=int, required=True, choices=[4, 8, 16, 32])
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--case", default="uniform", choices=vectors.CASE_CLASSES)
    gen.add_argument("-o", "--output", required=True)

    run = sub.add_parser("run", help="run a vector file through the pipeline")
    run.add_argument("file")
    run.add_argument("--trace", action="store_true", help="dump pipeline traces for failing records")
    run.add_argument("--report", metavar="DIR", help="write CSV and figure into DIR")

    pf = sub.add_parser("perf", help="throughput figures")
    pf.add_argument("--flops", type=int, default=None, help="FLOPs per issue")
    pf.add_argument("--latency", type=int, default=None, help="pipeline latency in cycles")
    pf.add_argument("--fmax", type=float, default=None, help="clock in Hz (e.g. 306.6e6)")
    pf.add_argument(
        "--paper-defaults",
        action="store_true",
        help="use the published reference point: 32 FLOPs, 4 cycles, 306.6 MHz",
    )
    pf.add_argument("--report", metavar="DIR", help="write CSV and figure into DIR")
    return parser


def _cmd_gen(args: argparse.Namespace) -> int:
    fmt = FORMATS[FormatKind(args.format)]
    try:
        cfg = FedpConfig(args.n, fmt)
        records = vectors.generate_records(cfg, args.count, args.seed, args.case)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    header = vectors.VectorHeader(args.format, args.n, args.count, args.seed, args.case)
    vectors.write_vectors(args.output, header, records)
    print(f"wrote {len(records)} {args.format} records to {args.output}")
    return 0


def _format_trace(trace: PipelineTrace) -> str:
    lines = [
        f"  a_words={['%08x' % w for w in trace.a_words]}"
        f" b_words={['%08x' % w for w in trace.b_words]} c={trace.c_word:08x}"
    ]
    if trace.stage1_terms is not None:
        for i, t in enumerate(trace.stage1_terms):
            tag = "addend" if i == len(trace.stage1_terms) - 1 else f"term{i}"
            lines.append(
                f"  s1 {tag}: sign={t.sign} exp={t.biased_exp8} mag=0x{t.magnitude:07x}"
                f"{' sticky' if t.sticky else ''}"
            )
    if trace.stage1_products is not None:
        lines.append(f"  s1 products={trace.stage1_products} addend_split={trace.stage1_addend_split}")
    if trace.stage1_special is not None:
        lines.append(f"  s1 special=0x{trace.stage1_special:08x}")
    if trace.stage2_max_exp is not None:
        lines.append(
            f"  s2 max_exp={trace.stage2_max_exp} shifts={list(trace.stage2_shifts)}"
            f" stickies={[int(s) for s in trace.stage2_stickies]}"
        )
    if trace.stage2_aligned is not None:
        lines.append(f"  s2 aligned={[hex(x) for x in trace.stage2_aligned]}")
    if trace.stage3_raw_sum is not None:
        lines.append(
            f"  s3 sum_vec=0x{trace.stage3_pair.sum_vec:x} carry_vec=0x{trace.stage3_pair.carry_vec:x}"
            f" raw_sum=0x{trace.stage3_raw_sum:x}"
        )
    if trace.stage4_pre_round is not None:
        lines.append(
            f"  s4 lzc={trace.stage4_lzc} pre_round=0x{trace.stage4_pre_round:x}"
            f" round_up={trace.stage4_round_up} sticky={trace.stage4_sticky}"
        )
    lines.append(f"  result=0x{trace.result_word:08x}")
    return "\n".join(lines)


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        header, records = vectors.read_vectors(args.file)
        cfg = vectors.config_from_header(header)
    except (OSError, vectors.VectorFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    def on_fail(outcome: harness.RecordOutcome, res) -> None:
        print(
            f"FAIL record {outcome.index}: got={outcome.got:08x} "
            f"expected={outcome.expected:08x} ulp={outcome.ulp}"
        )
        if args.trace:
            rec = records[outcome.index]
            _, res_traced = harness.check_record(cfg, rec, outcome.index, want_trace=True)
            print(_format_trace(res_traced.trace))

    summary, outcomes = harness.run_records(
        cfg, records, collect=bool(args.report), on_fail=on_fail
    )
    print(f"{header.format} N={header.n} case={header.case}: {summary.describe()}")
    if args.report:
        from . import report

        csv_path, png_path = report.write_run_report(outcomes, summary, args.report)
        print(f"report: {csv_path} {png_path}")
    return 0 if summary.ok else 1


def _cmd_perf(args: argparse.Namespace) -> int:
    ref = perf.REFERENCE_DESIGN
    if args.paper_defaults:
        flops, latency, fmax = ref.flops_per_issue, ref.latency_cycles, ref.fmax_hz
    else:
        flops = args.flops if args.flops is not None else ref.flops_per_issue
        latency = args.latency if args.latency is not None else ref.latency_cycles
        fmax = args.fmax if args.fmax is not None else ref.fmax_hz
    try:
        spec = perf.BackendSpec("configured", latency, fmax, flops)
        baselines = [
            perf.BackendSpec("discrete-13cyc", 13, fmax, flops),
            perf.BackendSpec("dsp-42cyc", 42, fmax, flops),
        ]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rows = perf.comparison_rows([spec, *baselines])
    print(perf.render_table(rows))
    single = perf.single_cycle_throughput(spec)
    filled = perf.filled_pipeline_throughput(spec)
    print(f"\nsingle-cycle: {single / 1e9:.4f} GFLOPS   filled: {filled / 1e9:.4f} GFLOPS")
    if args.report:
        from . import report

        # with no explicit issue width, report the full scaling grid
        report_rows = perf.scaling_rows(fmax) if args.flops is None else rows
        csv_path, png_path = report.write_perf_report(report_rows, args.report)
        print(f"report: {csv_path} {png_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "gen":
        return _cmd_gen(args)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_perf(args)


if __name__ == "__main__":
    sys.exit(main())
