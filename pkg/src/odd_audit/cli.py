"""Command line front end.

Subcommands:
    audit run      full audit of a config's ODD through the configured backend
    covergen       emit the covering array for a config
    bench zero-shot  poisoned zero-shot recovery benchmark on the synthetic world
    coverage       subgroup coverage estimate through the posterior backend
    fanova         variance decomposition of the risks in an existing report

Exit codes: 0 success, 1 usage, 2 bad config, 3 backend failure, 4 internal.
"""
from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

from . import __version__
from .audit import (
    AuditError,
    benchmark_recovery,
    benchmark_summary,
    estimate_coverage,
    run_audit,
)
from .backends.base import BackendError
from .config import AuditConfig, ConfigError, build_backends, build_world, parse_config
from .covering import coverage_lower_bound, generate_covering_array, verify_coverage
from .hashing import fingerprint
from .odd import OperationalDesignDomain
from .stats import complete_table, cumulative_fanova, fanova_decompose

EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_INTERNAL = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this tool reserves 2 for config
    # problems, so usage errors are remapped to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_run_meta(
    outdir: Path, cfg: AuditConfig | None, seed: int | None, elapsed: float, extra=None
) -> None:
    meta = {
        "tool_version": __version__,
        "python": platform.python_version(),
        "elapsed_seconds": elapsed,
        "seed": seed,
        "config_fingerprint": cfg.fingerprint() if cfg is not None else None,
    }
    if extra:
        meta.update(extra)
    (outdir / "run-meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def _load(args) -> AuditConfig:
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "parallelism", None) is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, parallelism=args.parallelism)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _csv_writer(handle):
    # RFC 4180: CRLF line endings, quoting only where needed.
    return csv.writer(handle, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")


def _open_csv(path: Path):
    return open(path, "w", encoding="utf-8", newline="")


def cmd_audit_run(args) -> int:
    cfg = _load(args)
    if getattr(args, "recheck_samples", None) is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, recheck_samples=args.recheck_samples)
    out = _outdir(args)
    t0 = time.perf_counter()
    report = run_audit(cfg)
    elapsed = time.perf_counter() - t0
    report.timing_seconds = elapsed

    if "json" in cfg.output_formats:
        (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    if "csv" in cfg.output_formats:
        names = cfg.odd.dimension_names
        with _open_csv(out / "rankings.csv") as fh:
            w = _csv_writer(fh)
            w.writerow(["objective", "rank", "risk", "n_samples", *names])
            for obj in report.objectives:
                by_subgroup = {
                    tuple(r["subgroup"]): r for r in obj["records"]
                }
                for rank, z in enumerate(obj["ranking"], start=1):
                    rec = by_subgroup[tuple(z)]
                    w.writerow(
                        [
                            obj["kind"],
                            rank,
                            rec["risk"],
                            rec["n_samples"],
                            *cfg.odd.values_of(tuple(z)),
                        ]
                    )
        with _open_csv(out / "histograms.csv") as fh:
            w = _csv_writer(fh)
            w.writerow([*names, "predicted_class", "count"])
            for row in report.rows:
                values = cfg.odd.values_of(tuple(row["subgroup"]))
                for cls in sorted(row["histogram"]):
                    w.writerow([*values, cls, row["histogram"][cls]])

    _write_run_meta(out, cfg, cfg.seed, elapsed, {"n_rows": report.n_rows})
    print(
        f"audited {report.n_rows} subgroups "
        f"({len(report.failures)} failed), strength {report.covering_strength}, "
        f"report fingerprint {fingerprint(report.to_dict())[:12]}"
    )
    top = report.objectives[0]["ranking"][0]
    print(f"highest-risk subgroup (error objective): {cfg.odd.values_of(tuple(top))}")
    return 0


def cmd_covergen(args) -> int:
    cfg = _load(args)
    strength = args.strength if args.strength is not None else cfg.strength
    out = _outdir(args)
    t0 = time.perf_counter()
    array = generate_covering_array(cfg.odd, strength, cfg.seed)
    check = verify_coverage(array, cfg.odd)
    elapsed = time.perf_counter() - t0
    if not check.complete:
        print(f"internal error: generated array misses {len(check.missing)} tuples")
        return EXIT_INTERNAL

    names = cfg.odd.dimension_names
    if "csv" in cfg.output_formats:
        with _open_csv(out / "covering.csv") as fh:
            w = _csv_writer(fh)
            w.writerow(names)
            for z in array.rows:
                w.writerow(cfg.odd.values_of(z))
    if "json" in cfg.output_formats:
        payload = {
            "schema": "covering-array/1",
            "strength": array.strength,
            "odd_fingerprint": array.odd_fingerprint,
            "dimensions": list(names),
            "rows": [list(z) for z in array.rows],
        }
        (out / "covering.json").write_text(
            json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )
    _write_run_meta(out, cfg, cfg.seed, elapsed, {"n_rows": len(array.rows)})
    lb = coverage_lower_bound(cfg.odd, strength)
    print(
        f"covering array: strength {strength}, {len(array.rows)} rows "
        f"(lower bound {lb}), complete"
    )
    return 0


def _parse_sweep(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ValueError("sweep must look like name=v1,v2,...")
    name, _, values = text.partition("=")
    name = name.strip()
    if name not in ("n_s", "sigma", "w_c"):
        raise ValueError(f"cannot sweep {name!r}; pick n_s, sigma or w_c")
    parse = int if name == "n_s" else float
    return name, [parse(v) for v in values.split(",") if v]


def cmd_bench_zero_shot(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    sweep_name, sweep_values = ("n_s", list(cfg.bench.n_samples_sweep))
    if args.sweep:
        try:
            sweep_name, sweep_values = _parse_sweep(args.sweep)
        except ValueError as exc:
            print(f"bad --sweep value: {exc}", file=sys.stderr)
            return EXIT_USAGE

    bench_seed = cfg.bench.seed if cfg.bench.seed is not None else cfg.seed
    t0 = time.perf_counter()
    all_rows: list[tuple[float | int, object]] = []
    if sweep_name == "n_s":
        world = build_world(cfg)
        rows = benchmark_recovery(
            world,
            cfg.odd,
            cfg.template,
            n_samples_sweep=tuple(sweep_values),
            n_injections=cfg.bench.n_injections,
            seed=bench_seed,
            aggregator=cfg.aggregator,
            class_b=cfg.bench.class_b,
            temperature=cfg.bench.temperature,
            value_weight=cfg.bench.value_weight,
        )
        all_rows = [(r.n_samples, r) for r in rows]
    else:
        import dataclasses

        for value in sweep_values:
            if sweep_name == "sigma":
                world_cfg = dataclasses.replace(cfg.world, noise_sigma=value)
                swept = dataclasses.replace(cfg, world=world_cfg)
                template = cfg.template
            else:  # w_c
                template = dataclasses.replace(cfg.template, class_weight=value)
                swept = dataclasses.replace(cfg, template=template)
            world = build_world(swept)
            rows = benchmark_recovery(
                world,
                swept.odd,
                template,
                n_samples_sweep=(cfg.n_samples,),
                n_injections=cfg.bench.n_injections,
                seed=bench_seed,
                aggregator=cfg.aggregator,
                class_b=cfg.bench.class_b,
                temperature=cfg.bench.temperature,
                value_weight=cfg.bench.value_weight,
            )
            all_rows.extend((value, r) for r in rows)
    elapsed = time.perf_counter() - t0

    with _open_csv(out / "bench.csv") as fh:
        w = _csv_writer(fh)
        w.writerow(["parameter", "value", "injection", "ground_truth", "rank"])
        for value, r in all_rows:
            w.writerow(
                [sweep_name, value, r.injection, "|".join(map(str, r.ground_truth)), r.rank]
            )
    _write_run_meta(out, cfg, bench_seed, elapsed)

    print(f"zero-shot recovery, sweeping {sweep_name}:")
    from .stats import median as _median

    for value in sweep_values:
        ranks = [float(r.rank) for v, r in all_rows if v == value]
        rank1 = sum(1 for r in ranks if r == 1.0)
        print(
            f"  {sweep_name}={value}: median ground-truth rank "
            f"{_median(ranks):g} ({rank1}/{len(ranks)} at rank 1)"
        )
    return 0


def cmd_coverage(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    mode = args.mode or cfg.coverage.mode
    per = (
        args.samples_per_subgroup
        if args.samples_per_subgroup is not None
        else cfg.coverage.samples_per_subgroup
    )
    generator, _, posterior = build_backends(cfg)
    if posterior is None:
        print("coverage estimation needs the synthetic backend", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    result = estimate_coverage(
        cfg.odd,
        cfg.template,
        generator,
        posterior,
        mode=mode,
        samples_per_subgroup=per,
        seed=cfg.seed,
        alpha=cfg.coverage.alpha,
        unconditional_prompt=cfg.coverage.unconditional_prompt or cfg.unconditional_prompt,
    )
    elapsed = time.perf_counter() - t0

    names = cfg.odd.dimension_names
    with _open_csv(out / "coverage.csv") as fh:
        w = _csv_writer(fh)
        w.writerow(
            [*names, "p_soft", "count", "n_total", "p_argmax", "ci_lower", "ci_upper", "fidelity"]
        )
        for e in result.entries:
            w.writerow(
                [
                    *cfg.odd.values_of(e.subgroup),
                    e.p_soft,
                    e.count,
                    result.n_total,
                    e.count / result.n_total,
                    e.ci.lower,
                    e.ci.upper,
                    "" if e.fidelity is None else e.fidelity,
                ]
            )
    _write_run_meta(out, cfg, cfg.seed, elapsed, {"mode": mode})

    lowers = [e.ci.lower for e in result.entries]
    uppers = [e.ci.upper for e in result.entries]
    print(
        f"coverage ({mode}): {result.n_total} samples over {len(result.entries)} subgroups"
    )
    print(f"  CP lower bounds: min {min(lowers):.6f}; upper bounds: min {min(uppers):.6f}")
    if result.mean_fidelity is not None:
        print(f"  mean fidelity {result.mean_fidelity:.4f}")
    return 0


def cmd_fanova(args) -> int:
    path = Path(args.report)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        print(f"cannot read report {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if data.get("schema") != "audit-report/1":
        print(f"unsupported report schema {data.get('schema')!r}", file=sys.stderr)
        return EXIT_CONFIG
    odd = OperationalDesignDomain.from_dict(data["odd"])
    shape = odd.shape
    names = odd.dimension_names
    out = _outdir(args)

    t0 = time.perf_counter()
    results = []
    for obj in data["objectives"]:
        scores = {tuple(r["subgroup"]): float(r["risk"]) for r in obj["records"]}
        table, imputed = complete_table(scores, shape)
        decomp = fanova_decompose(table, shape, approximate=imputed > 0)
        cumulative = cumulative_fanova(decomp, args.max_card)
        results.append((obj["kind"], decomp, cumulative, imputed))
    elapsed = time.perf_counter() - t0

    with _open_csv(out / "fanova.csv") as fh:
        w = _csv_writer(fh)
        w.writerow(
            ["objective", "subset", "cardinality", "variance", "fraction", "cumulative", "approximate"]
        )
        for kind, decomp, cumulative, imputed in results:
            for u in sorted(cumulative, key=lambda s: (len(s), s)):
                subset = "+".join(names[i] for i in u) if u else "(grand mean)"
                w.writerow(
                    [
                        kind,
                        subset,
                        len(u),
                        decomp.components[u],
                        decomp.fractions[u],
                        cumulative[u],
                        "yes" if decomp.approximate else "no",
                    ]
                )
    _write_run_meta(out, None, data.get("seed"), elapsed)

    for kind, decomp, cumulative, imputed in results:
        full = max(cumulative.items(), key=lambda kv: (len(kv[0]), kv[1]))
        note = " (approximate: imputed cells)" if decomp.approximate else ""
        print(
            f"{kind}: total variance {decomp.total_variance:.6g}, "
            f"best subset ≤{args.max_card} explains {full[1]:.4f}{note}"
        )
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="odd-audit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    audit = sub.add_parser("audit", help="run audits")
    audit_sub = audit.add_subparsers(dest="subcommand", required=True)
    run = audit_sub.add_parser("run", help="audit every covering-array subgroup")
    run.add_argument("-c", "--config", required=True)
    run.add_argument("-o", "--output", default="out")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--parallelism", type=int, default=None)
    run.add_argument(
        "--recheck-samples",
        type=int,
        default=None,
        help="re-sample the top-ranked subgroup of each objective this many times",
    )
    run.set_defaults(fn=cmd_audit_run)

    cover = sub.add_parser("covergen", help="generate and verify a covering array")
    cover.add_argument("-c", "--config", required=True)
    cover.add_argument("-o", "--output", default="out")
    cover.add_argument("-t", "--strength", type=int, default=None)
    cover.add_argument("--seed", type=int, default=None)
    cover.set_defaults(fn=cmd_covergen)

    bench = sub.add_parser("bench", help="synthetic benchmarks")
    bench_sub = bench.add_subparsers(dest="subcommand", required=True)
    zs = bench_sub.add_parser("zero-shot", help="poisoned zero-shot rank recovery")
    zs.add_argument("-c", "--config", required=True)
    zs.add_argument("-o", "--output", default="out")
    zs.add_argument("--seed", type=int, default=None)
    zs.add_argument("--sweep", default=None, help="n_s=2,4,8 or sigma=... or w_c=...")
    zs.set_defaults(fn=cmd_bench_zero_shot)

    cov = sub.add_parser("coverage", help="subgroup coverage of the generator")
    cov.add_argument("-c", "--config", required=True)
    cov.add_argument("-o", "--output", default="out")
    cov.add_argument("--seed", type=int, default=None)
    cov.add_argument("--mode", choices=["conditional", "unconditional"], default=None)
    cov.add_argument("--samples-per-subgroup", type=int, default=None)
    cov.set_defaults(fn=cmd_coverage)

    fan = sub.add_parser("fanova", help="variance decomposition of report risks")
    fan.add_argument("-r", "--report", required=True)
    fan.add_argument("-o", "--output", default="out")
    fan.add_argument("--max-card", type=int, default=2)
    fan.set_defaults(fn=cmd_fanova)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, AuditError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
