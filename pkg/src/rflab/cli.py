"""Command-line front end: ``rflab run | list | flow bake | report diff``.

Exit codes: 0 when every record passes, 1 when at least one record is
violated beyond its tolerance, 2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import SuiteConfig, load_config, with_overrides
from .errors import ConfigError, RFLabError
from .flow_geometry import WarpedFlow, evolve_ricci_flow, kind_name
from .report import SuiteReport, diff_reports, dumps, report_document
from .suites import list_suites, resolve, run_suite, suite_names
from .svg import line_plot

EXIT_PASS, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2
FLOW_TABLE_SCHEMA = "rflab-flow-table/1"


class _Parser(argparse.ArgumentParser):
    """argparse already exits with status 2 on usage errors; keep the prefix uniform."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"rflab: error: {message}\n")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_")


def _config_from_args(args) -> SuiteConfig:
    known = suite_names()
    cfg = load_config(args.config, known)
    over = {}
    for key in ("seed", "grid", "out", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if getattr(args, "tol_scale", None) is not None:
        over["tol_scale"] = args.tol_scale
    if getattr(args, "suite", None):
        over["suites"] = args.suite
    return with_overrides(cfg, known, **over) if over else cfg


def _run_all(cfg: SuiteConfig, names: list[str]) -> list[SuiteReport]:
    if cfg.workers > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(names))) as pool:
            reports = list(pool.map(run_suite, names, [cfg] * len(names)))
    else:
        reports = [run_suite(n, cfg) for n in names]
    return sorted(reports, key=lambda r: r.suite)


def write_artifacts(reports: list[SuiteReport], cfg: SuiteConfig, timestamp: str) -> dict[str, Path]:
    """Write the report, per-suite CSV tables, SVG plots and a timing file."""
    out = Path(cfg.out)
    plots = out / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    h = cfg.hash
    paths = {"report": out / f"report-{h}.json", "timing": out / f"timing-{h}.json"}
    doc = report_document(reports, cfg.hashable(), h, timestamp)
    paths["report"].write_text(dumps(doc))
    for rep in reports:
        p = out / f"{rep.suite}-{h}.csv"
        p.write_text(rep.csv())
        paths[f"csv:{rep.suite}"] = p
        for name, (x, y) in sorted(rep.series.items()):
            p = plots / f"{rep.suite}-{_slug(name)}-{h}.svg"
            p.write_text(line_plot(f"{rep.suite}: {name}", x, y))
            paths[f"svg:{rep.suite}/{name}"] = p
    # wall-clock data is kept out of the report so reruns compare byte-for-byte
    timing = {"config_hash": h, "timestamp": timestamp,
              "suites": {r.suite: {"total": sum(r.runtimes.values()), "checks": r.runtimes} for r in reports}}
    paths["timing"].write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return paths


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    names = resolve(cfg.suites)
    start = time.perf_counter()
    reports = _run_all(cfg, names)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    paths = write_artifacts(reports, cfg, stamp)
    for rep in reports:
        bad = [r for r in rep.records if not r.passed]
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {rep.suite}: {len(rep.records) - len(bad)}/{len(rep.records)} records "
              f"({sum(rep.runtimes.values()):.1f}s)")
        for r in bad:
            print(f"    violated {r.name}: lhs={r.lhs:.6g} rhs={r.rhs:.6g} margin={r.margin:.3g} tol={r.tol:.3g}")
    print(f"report {paths['report']} (config {cfg.hash}, {time.perf_counter() - start:.1f}s)")
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_VIOLATION


def cmd_list(args) -> int:
    for s in list_suites(args.filter):
        print(f"{s.name:<16}{s.topic}")
    return EXIT_PASS


def _flow_table(flow, samples: int) -> dict:
    times = np.linspace(flow.t_min, flow.t_max, samples)
    centres, edges = flow.factor_table(times)
    return {"schema": FLOW_TABLE_SCHEMA, "kind": kind_name(flow.kind), "t_min": flow.t_min,
            "t_max": flow.t_max, "grid": flow.grid.to_dict(), "times": times.tolist(),
            "centres": centres.tolist(), "edges": edges.tolist()}


def cmd_flow_bake(args) -> int:
    cfg = _config_from_args(args)
    try:
        flow = evolve_ricci_flow(cfg.flow_spec(), cfg.grid)
    except RFLabError as exc:
        raise ConfigError(f"flow: {exc}") from None
    if isinstance(flow, WarpedFlow):
        text = flow.to_json() + "\n"
    else:
        text = json.dumps(_flow_table(flow, args.samples)) + "\n"
    target = Path(args.output) if args.output else Path(cfg.out) / f"flow-{cfg.hash}.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text)
    print(f"wrote {target}")
    return EXIT_PASS


def cmd_report_diff(args) -> int:
    docs = []
    for p in (args.a, args.b):
        try:
            docs.append(json.loads(Path(p).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read report {p}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: not a JSON report (line {exc.lineno}): {exc.msg}") from None
    lines = diff_reports(docs[0], docs[1], args.tol)
    for line in lines:
        print(line)
    if not lines:
        print("reports agree")
    return EXIT_VIOLATION if lines else EXIT_PASS


def _add_config_flags(p: argparse.ArgumentParser, run: bool):
    p.add_argument("--config", help="YAML configuration file (defaults are built in)")
    p.add_argument("--seed", type=int, help="root RNG seed, 0 <= seed < 2^64")
    p.add_argument("--out", help="output directory")
    p.add_argument("--grid", type=int, help="cells of the reduced grid")
    if run:
        p.add_argument("--suite", help="comma-separated suite names or 'all'")
        p.add_argument("--tol-scale", type=float, help="multiplier applied to every tolerance")
        p.add_argument("--workers", type=int, help="processes used to run suites")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rflab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rflab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run check suites and write reports")
    _add_config_flags(p, run=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list", help="list suites, optionally filtered by keyword")
    p.add_argument("filter", nargs="?", help="case-insensitive keyword or topic fragment")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("flow", help="flow utilities")
    fsub = p.add_subparsers(dest="flow_command", required=True, parser_class=_Parser)
    b = fsub.add_parser("bake", help="evolve the configured flow and serialize it")
    _add_config_flags(b, run=False)
    b.add_argument("--output", help="file to write (default: <out>/flow-<hash>.json)")
    b.add_argument("--samples", type=int, default=65, help="table times for exact flows")
    b.set_defaults(func=cmd_flow_bake)

    p = sub.add_parser("report", help="report utilities")
    rsub = p.add_subparsers(dest="report_command", required=True, parser_class=_Parser)
    d = rsub.add_parser("diff", help="compare two report JSON files")
    d.add_argument("a")
    d.add_argument("b")
    d.add_argument("--tol", type=float, default=0.0, help="ignore margin changes up to this size")
    d.set_defaults(func=cmd_report_diff)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"rflab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
