import argparse
import sys
from pathlib import Path
from typing import Sequence

from loguru import logger

from .bench import BenchmarkConfig, SweepAxis, emit_report, make_workload, read_reports, run_benchmark, sweep, \
    verify, write_csv, write_reports
from .config import Settings, configure_logging
from .core import KernelMode, read_dataset, write_dataset
from .methods import Method
from .workload import DataKind, GeneratorSpec, generate, read_queries, write_queries

__all__ = ["UsageError", "build_parser", "cli_main", "main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(settings: Settings) -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--method", action="append", choices=[m.value for m in Method] + ["all"])
    common.add_argument("--threads", type=int, default=settings.threads)
    common.add_argument("--partitions", type=int)
    common.add_argument("--kernel", choices=[k.value for k in KernelMode], default=KernelMode.VECTORIZED.value)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--n", type=int, default=10_000)
    common.add_argument("--dims", type=int, default=5)
    common.add_argument("--clusters", type=int, default=1)
    common.add_argument("--kind", choices=[k.value for k in DataKind])
    common.add_argument("--extent", type=float, default=0.1)
    common.add_argument("--data", type=Path, help="binary dataset; generated from the flags above if absent")
    common.add_argument("--queries-file", type=Path)
    common.add_argument("--count", type=int)
    common.add_argument("--template", type=int, help="template id, 0 for the mixed workload")
    common.add_argument("--out", type=Path)
    common.add_argument("--physical-cores", type=int, default=settings.physical_cores)
    return common


def build_parser(settings: Settings | None = None) -> argparse.ArgumentParser:
    settings = settings or Settings.from_env()
    common = _common(settings)
    parser = _Parser(prog="mdrq", description="In-memory multidimensional range-query engine")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("gen", parents=[common], help="generate a dataset")
    commands.add_parser("queries", parents=[common], help="generate a query batch")
    bench = commands.add_parser("bench", parents=[common], help="run benchmarks or a sweep")
    bench.add_argument("--axis", choices=[a.value for a in SweepAxis])
    bench.add_argument("--grid", help="comma-separated sweep values")
    bench.add_argument("--repetitions", type=int, default=3)
    commands.add_parser("verify", parents=[common], help="check every method against the oracle")
    report = commands.add_parser("report", parents=[common], help="merge JSON-lines reports into CSV")
    report.add_argument("inputs", nargs="+", type=Path)
    return parser


def _methods(args) -> list[Method]:
    if not args.method or "all" in args.method:
        return list(Method)
    return [Method(value) for value in dict.fromkeys(args.method)]


def _spec(args) -> GeneratorSpec:
    kind = DataKind(args.kind) if args.kind else DataKind.CLUSTERED if args.clusters > 1 else DataKind.UNIFORM
    return GeneratorSpec(kind, args.n, args.dims, args.clusters, args.extent, args.seed)


def _dataset(args):
    if args.data is not None:
        return read_dataset(args.data)
    return generate(_spec(args))


def _grid(axis: SweepAxis, raw: str | None, args) -> list:
    if raw is None:
        if axis is SweepAxis.THREADS:
            return list(range(1, args.physical_cores + 1))
        raise UsageError(f"--axis {axis.value} needs --grid")
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise UsageError("--grid is empty")
    try:
        match axis:
            case SweepAxis.KERNEL:
                return values
            case SweepAxis.SELECTIVITY:
                return [float(v) for v in values]
            case _:
                return [int(v) for v in values]
    except ValueError as e:
        raise UsageError(f"--grid: {e}")


def _config(args, method: Method) -> BenchmarkConfig:
    return BenchmarkConfig(
        method=method,
        data=_spec(args),
        queries=args.count or 1000,
        template=args.template,
        threads=args.threads,
        partitions=args.partitions,
        kernel=KernelMode(args.kernel),
        repetitions=args.repetitions,
        seed=args.seed,
    )


def _write(reports, out: Path | None):
    if out is None:
        write_csv(reports, sys.stdout)
    elif out.suffix == ".csv":
        emit_report(reports, out)
    else:
        write_reports(out, reports)


def _gen(args) -> int:
    if args.out is None:
        raise UsageError("gen needs --out")
    data = generate(_spec(args))
    write_dataset(args.out, data)
    print(f"wrote {data.n}×{data.m} dataset to {args.out}")
    return EXIT_OK


def _queries(args) -> int:
    if args.out is None:
        raise UsageError("queries needs --out")
    data = _dataset(args)
    config = BenchmarkConfig(queries=args.count or 1000, template=args.template, seed=args.seed, threads=1)
    queries = make_workload(config, data)
    write_queries(args.out, queries)
    print(f"wrote {len(queries)} queries to {args.out}")
    return EXIT_OK


def _bench(args) -> int:
    methods = _methods(args)
    if args.axis is not None:
        axis = SweepAxis(args.axis)
        if args.queries_file is not None:
            raise UsageError("--queries-file cannot be combined with --axis")
        data = read_dataset(args.data) if args.data is not None else None
        result = sweep(axis, _grid(axis, args.grid, args), _config(args, methods[0]), methods, data)
        reports = result.reports
    else:
        data = _dataset(args)
        if args.queries_file is not None:
            queries = read_queries(args.queries_file)
        else:
            queries = make_workload(_config(args, methods[0]), data)
        reports = [run_benchmark(_config(args, method), data, queries) for method in methods]
    _write(reports, args.out)
    return EXIT_OK


def _verify(args) -> int:
    data = _dataset(args)
    if args.queries_file is not None:
        queries = read_queries(args.queries_file)
    else:
        config = BenchmarkConfig(queries=args.count or 200, template=args.template, seed=args.seed, threads=1)
        queries = make_workload(config, data)
    methods = _methods(args)
    mismatches = verify(data, queries, methods, args.threads, args.seed)
    for mismatch in mismatches:
        print(mismatch)
    if mismatches:
        print(f"{len(mismatches)} mismatch(es)", file=sys.stderr)
        return EXIT_VERIFY
    print(f"ok: {len(methods)} methods agree with the oracle on {len(queries)} queries over {data.n}×{data.m}")
    return EXIT_OK


def _report(args) -> int:
    reports = []
    for path in args.inputs:
        reports.extend(read_reports(path))
    _write(reports, args.out)
    return EXIT_OK


def cli_main(argv: Sequence[str] | None = None) -> int:
    try:
        settings = Settings.from_env()
        args = build_parser(settings).parse_args(argv)
    except (UsageError, ValueError) as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    configure_logging({0: settings.log_level, 1: "INFO"}.get(args.verbose, "DEBUG"))
    command = {"gen": _gen, "queries": _queries, "bench": _bench, "verify": _verify, "report": _report}
    try:
        return command[args.command](args)
    except (UsageError, ValueError, OSError) as e:
        # DimensionMismatch, InvalidQuery, WorkloadError and friends are all ValueErrors
        logger.debug("{} failed: {!r}", args.command, e)
        print(f"mdrq {args.command}: {e}", file=sys.stderr)
    return EXIT_USAGE


def main():
    sys.exit(cli_main())
