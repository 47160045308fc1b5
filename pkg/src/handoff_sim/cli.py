"""``handoff-sim`` command line: run, grid, serve, query, validate.

Exit codes: 0 success, 2 invalid configuration, 3 run or protocol
error, 4 transport error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from .config import ConfigError, ExperimentConfig, load_config
from .geo import GeoPoint
from .registry import Registry, RegistryParseError, load
from .sharing import ProtocolError, TransportError, client_nearest, record_to_entry
from .sim import GridResult, compare, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_TRANSPORT = 4

CSV_COLUMNS = (
    "scheme", "user", "threshold_kbps", "seed", "total_j", "wifi_scan_j", "wifi_active_j",
    "wifi_idle_j", "gprs_active_j", "gprs_idle_j", "loc_fix_j", "monitor_j", "bytes_delivered",
    "scan_count", "unnecessary_scan_count", "switch_episodes", "depletion_time_s",
    "efficiency_bytes_per_j", "ratio_wifi_gprs",
)


def csv_cell(value) -> str:
    """Render a value so ``float(cell)`` gives back the JSON number exactly."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(rows: Sequence[dict], header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([csv_cell(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _append_csv(path: Path, rows: Sequence[dict]) -> None:
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(rows, header=fresh))


def summary_rows(grid: GridResult) -> list[dict]:
    return [{"scheme": "summary", "user": u, "ratio_wifi_gprs": grid.ratio(u)} for u in grid.users()]


def grid_document(grid: GridResult) -> dict:
    return {
        "cells": [r.to_dict() for r in grid.reports],
        "errors": grid.errors,
        "ratio_wifi_gprs": {u: grid.ratio(u) for u in grid.users()},
        "checks": grid.checks(),
    }


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        scheme=getattr(args, "scheme", None),
        user=getattr(args, "user", None),
        threshold_kbps=getattr(args, "threshold_kbps", None),
        seed=getattr(args, "seed", None),
    )


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"ok: {cfg.source} ({len(cfg.scenario.aps)} APs, "
          f"{len(cfg.schemes)} schemes x {len(cfg.users)} users x {len(cfg.thresholds)} thresholds)")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    report = run(cfg.scenario, cfg.scheme)
    doc = report.to_dict()
    if args.format in ("json", "both"):
        sys.stdout.write(dump_json(doc))
    else:
        sys.stdout.write(csv_text([report.row()]))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.format in ("json", "both"):
            (out / "report.json").write_text(dump_json(doc), encoding="utf-8")
        if args.format in ("csv", "both"):
            _append_csv(out / "reports.csv", [report.row()])
    return EXIT_OK


def cmd_grid(args) -> int:
    cfg = _load(args)
    grid = compare(cfg.scenario, cfg.schemes, cfg.users, cfg.thresholds, parallel=args.parallel)
    rows = [r.row() for r in grid.reports] + summary_rows(grid)
    doc = grid_document(grid)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.format in ("csv", "both"):
            (out / "grid.csv").write_text(csv_text(rows), encoding="utf-8")
        if args.format in ("json", "both"):
            (out / "grid.json").write_text(dump_json(doc), encoding="utf-8")
        summary = sys.stdout
    else:
        sys.stdout.write(dump_json(doc) if args.format == "json" else csv_text(rows))
        summary = sys.stderr
    for err in grid.errors:
        print(f"ERROR {err['scheme']} {err['user']} {err['threshold_kbps']}: {err['error']}", file=summary)
    for name, ok in doc["checks"].items():
        verdict = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        print(f"{verdict} {name}", file=summary)
    return EXIT_RUN if grid.errors else EXIT_OK


def cmd_serve(args) -> int:
    from .sharing import RunningService

    if args.registry:
        try:
            registry = load(args.registry)
        except (OSError, RegistryParseError) as exc:
            raise ConfigError([f"--registry: {exc}"]) from exc
    else:
        registry = Registry(load_config(args.config).scenario.aps)
    service = RunningService(args.bind, registry)
    print(f"serving {len(registry)} APs on {service.address}", flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.shutdown()
    return EXIT_OK


def cmd_query(args) -> int:
    if not (-90.0 <= args.lat_deg <= 90.0 and math.isfinite(args.lon_deg)):
        raise ConfigError([f"--lat-deg/--lon-deg: invalid position ({args.lat_deg}, {args.lon_deg})"])
    if args.max_results < 1:
        raise ConfigError(["--max-results: must be a positive integer"])
    hits = client_nearest(args.endpoint, GeoPoint.from_degrees(args.lat_deg, args.lon_deg), args.max_results)
    results = [{**record_to_entry(rec), "distance_m": d} for rec, d in hits]
    sys.stdout.write(dump_json({"results": results}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handoff-sim", description="Simulate energy use of Wi-Fi/GPRS interface switching schemes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p: argparse.ArgumentParser, overrides: bool = True) -> None:
        p.add_argument("--config", help="scenario TOML (default: packaged campus scenario)")
        if overrides:
            p.add_argument("--scheme", help="scheme name, e.g. agps-switching")
            p.add_argument("--user", help="user class U1..U4")
            p.add_argument("--threshold-kbps", type=float, help="switch threshold in kb/s")
            p.add_argument("--seed", type=int, help="master seed (beats config and $HANDOFF_SIM_SEED)")

    p = sub.add_parser("run", help="simulate one scheme")
    common(p)
    p.add_argument("--out", help="directory for report.json / reports.csv")
    p.add_argument("--format", choices=("csv", "json", "both"), default="json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="run schemes x users x thresholds")
    common(p)
    p.add_argument("--out", help="directory for grid.csv / grid.json")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("validate", help="check a config and exit")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="host the AP sharing service")
    common(p, overrides=False)
    p.add_argument("--bind", default="127.0.0.1:7878", help="host:port (port 0 picks a free one)")
    p.add_argument("--registry", help=".aplog file to serve (default: the config's APs)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("query", help="ask a sharing service for the nearest APs")
    p.add_argument("--endpoint", default="127.0.0.1:7878", help="host:port")
    p.add_argument("--lat-deg", type=float, required=True)
    p.add_argument("--lon-deg", type=float, required=True)
    p.add_argument("--max-results", type=int, default=1)
    p.set_defaults(func=cmd_query)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"transport error (retriable): {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ProtocolError as exc:
        print(f"rejected by service: {exc}", file=sys.stderr)
        return EXIT_RUN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
