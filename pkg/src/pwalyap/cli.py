"""Command-line front end (``pwalyap``).

Exit codes: 0 success (Valid for ``analyze``), 2 search timed out,
1 bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io, levelsets
from .benchmarks import shipped_benchmarks
from .engine import analyze, check_certificate, metrics
from .errors import (CertificateViolation, DimensionUnsupported, FormatError, InvalidPartition,
                     NonpositiveSamplingTime, OriginOutsideDomain, PwaLyapError)
from .lp import BACKENDS, SearchConfig
from .model import Cell, discrete_to_continuous, ensure_origin_vertex, validate_partition
from .refinement import Strategy

EXIT_OK, EXIT_INPUT, EXIT_TIMEOUT = 0, 1, 2

logger = logging.getLogger("pwalyap")


def _config(args) -> SearchConfig:
    return SearchConfig(eps1=args.eps1, eps2=args.eps2, zero_tolerance=args.tolerance,
                        timeout_seconds=args.timeout, backend=args.backend)


def _search_flags(p):
    p.add_argument("--eps1", type=float, default=1e-4, help="decrease margin")
    p.add_argument("--eps2", type=float, default=1e-4, help="positivity margin")
    p.add_argument("--tolerance", type=float, default=1e-8,
                   help="slack values at or below this count as zero")
    p.add_argument("--timeout", type=float, default=3600.0, help="search budget in seconds")
    p.add_argument("--backend", choices=BACKENDS, default="highs", help="LP solver")
    p.add_argument("--seed", type=int, default=0, help="seed for the sampled certificate audit")
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--output-dir", type=Path, default=Path("."))


def _write_run(outdir: Path, stem: str, result, config: SearchConfig, seed: int):
    io.save_partition(result.partition, outdir / ("%s_partition.json" % stem))
    if result.candidate is not None:
        io.save_certificate(outdir / ("%s_certificate.json" % stem), result.candidate, config,
                            result.strategy, result.status, result.records)
    io.atomic_write_text(outdir / ("%s_records.jsonl" % stem),
                         "".join(r.to_json() + "\n" for r in result.records))
    if result.records:
        rows = ["iteration,cells,slack_sum,t_opt,T_opt,N_r"]
        for r, (T, N) in zip(result.records, metrics(result.records)):
            rows.append("%d,%d,%r,%r,%r,%r" % (r.iteration, r.cells, r.slack_sum, r.t_opt, T, N))
        io.atomic_write_text(outdir / ("%s_metrics.csv" % stem), "\n".join(rows) + "\n")
    if result.valid:
        report = check_certificate(result.partition, result.candidate, config, seed=seed)
        logger.info("certificate audit: %d vertex checks, %d samples, min V=%.3g, max dV/dt=%.3g",
                    report.vertex_checks, report.sample_checks, report.min_positivity,
                    report.max_decrease)


def cmd_analyze(args) -> int:
    partition = io.load_partition(args.input)
    config = _config(args)
    stem = Path(args.input).stem
    result = analyze(partition, args.strategy, config, max_iterations=args.max_iterations)
    _write_run(args.output_dir, stem, result, config, args.seed)
    last = result.records[-1] if result.records else None
    print("%s: %s after %d iteration(s), %d cells, %.2f s"
          % (stem, result.status, len(result.records), len(result.partition), result.seconds))
    if last is not None and not result.valid:
        print("  remaining slack %.6g in %d cell(s)" % (last.slack_sum, last.slack_cells))
    return EXIT_OK if result.valid else EXIT_TIMEOUT


def cmd_compare(args) -> int:
    partition = io.load_partition(args.input)
    config = _config(args)
    stem = Path(args.input).stem
    results = {}
    for s in Strategy:
        res = analyze(partition.copy(), s, config, max_iterations=args.max_iterations)
        _write_run(args.output_dir, "%s_%s" % (stem, s.value), res, config, args.seed)
        results[s.value] = res
    header = "%-14s %-9s %10s %8s %10s" % ("strategy", "status", "iterations", "cells", "seconds")
    lines = [header, "-" * len(header)]
    for name, res in results.items():
        lines.append("%-14s %-9s %10d %8d %10.2f" % (name, res.status, len(res.records),
                                                     len(res.partition), res.seconds))
    note = ordering_note(results)
    if note:
        lines.append(note)
    text = "\n".join(lines) + "\n"
    io.atomic_write_text(args.output_dir / ("%s_compare.txt" % stem), text)
    print(text, end="")
    return EXIT_OK if all(r.valid for r in results.values()) else EXIT_TIMEOUT


def ordering_note(results) -> str:
    """Empty when iterations-to-valid follow vector-field <= Lyapunov <= naive."""
    it = {k: len(r.records) for k, r in results.items() if r.valid}
    order = [Strategy.VECTOR_FIELD.value, Strategy.LYAPUNOV.value, Strategy.NAIVE.value]
    if not all(k in it for k in order):
        missing = [k for k in order if k not in it]
        return "ordering exception: %s did not reach Valid" % ", ".join(missing)
    if it[order[0]] <= it[order[1]] <= it[order[2]]:
        return ""
    return ("ordering exception: iterations vector-field=%d, lyapunov=%d, naive=%d"
            % tuple(it[k] for k in order))


def cmd_validate(args) -> int:
    partition = io.load_partition(args.input)
    violations = validate_partition(partition)
    for v in violations:
        print(v)
    if any(v.kind == "origin_not_vertex" for v in violations):
        print("hint: the origin lies inside a cell; run `pwalyap ensure-origin %s -o FILE`"
              % args.input, file=sys.stderr)
    if not violations:
        print("%s: ok (%d cells, %d vertices)" % (args.input, len(partition),
                                                   len(partition.vertices)))
    return EXIT_OK if not violations else EXIT_INPUT


def cmd_ensure_origin(args) -> int:
    partition = io.load_partition(args.input)
    fixed = ensure_origin_vertex(partition)
    io.save_partition(fixed, args.output)
    print("%s: %d -> %d cells" % (args.output, len(partition), len(fixed)))
    return EXIT_OK


def cmd_convert_discrete(args) -> int:
    partition = io.load_partition(args.input)
    cells = [Cell(c.id, c.vertex_ids, discrete_to_continuous(c.law, args.ts))
             for c in partition.cells]
    converted = partition.with_cells(partition.vertices, cells)
    converted.metadata = dict(partition.metadata, time="continuous",
                              converted_from_discrete={"sampling_time": args.ts})
    io.save_partition(converted, args.output)
    print("%s: %d cell law(s) converted with t_s=%r" % (args.output, len(cells), args.ts))
    return EXIT_OK


def cmd_levelsets(args) -> int:
    partition = io.load_partition(args.partition)
    levelsets.require_planar(partition)
    candidate, _ = io.load_certificate(args.certificate, partition)
    if args.levels:
        levels = [float(v) for v in args.levels.split(",")]
    else:
        levels = [levelsets.roa_level(partition, candidate)]
    segs = levelsets.level_segments(partition, candidate, levels)
    io.atomic_write_text(args.output, levelsets.segments_csv(segs))
    field_path = args.field_output or args.output.with_name(args.output.stem + "_field.csv")
    samples = levelsets.field_samples(partition, args.samples_per_cell)
    io.atomic_write_text(field_path, levelsets.field_csv(samples))
    print("%s: %d segment(s) for level(s) %s; %s: %d field sample(s)"
          % (args.output, len(segs), ", ".join(repr(v) for v in levels), field_path, len(samples)))
    return EXIT_OK


def cmd_export_benchmark(args) -> int:
    bench = shipped_benchmarks()
    names = list(bench) if args.name == "all" else [args.name]
    for name in names:
        item = bench[name]
        path = args.output_dir / ("%s.json" % name)
        if isinstance(item, dict):
            io.atomic_write_text(path, json.dumps(item, indent=2) + "\n")
        else:
            io.save_partition(item, path)
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwalyap",
                                     description="Search for piecewise-affine Lyapunov functions "
                                                 "of piecewise-affine systems.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="refine until a valid Lyapunov function is found")
    p.add_argument("input", type=Path)
    p.add_argument("--strategy", type=Strategy.parse, default=Strategy.VECTOR_FIELD,
                   help="naive | lyapunov | vector-field")
    _search_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="run all three strategies and summarise")
    p.add_argument("input", type=Path)
    _search_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="check partition well-formedness")
    p.add_argument("input", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("ensure-origin", help="make the origin a vertex of every cell holding it")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_ensure_origin)

    p = sub.add_parser("convert-discrete", help="turn x+ = A x + a laws into (A - I)/t_s, a/t_s")
    p.add_argument("input", type=Path)
    p.add_argument("--ts", type=float, required=True, help="sampling time")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_convert_discrete)

    p = sub.add_parser("levelsets", help="export level curves and field samples (2-D only)")
    p.add_argument("partition", type=Path)
    p.add_argument("certificate", type=Path)
    p.add_argument("--levels", default="",
                   help="comma-separated levels (default: the region-of-attraction level)")
    p.add_argument("--samples-per-cell", type=int, default=6)
    p.add_argument("-o", "--output", type=Path, required=True, help="segments CSV")
    p.add_argument("--field-output", type=Path, default=None)
    p.set_defaults(func=cmd_levelsets)

    p = sub.add_parser("export-benchmark", help="write a built-in benchmark as a file")
    p.add_argument("name", choices=["all", *shipped_benchmarks().keys()])
    p.add_argument("--output-dir", type=Path, default=Path("."))
    p.set_defaults(func=cmd_export_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FormatError, InvalidPartition, NonpositiveSamplingTime, OriginOutsideDomain,
            DimensionUnsupported, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    except CertificateViolation as exc:
        print("error: certificate failed its recheck: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    except PwaLyapError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
