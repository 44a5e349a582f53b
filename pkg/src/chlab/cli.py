"""Command line: ``chlab run <config>``, ``chlab list``, ``chlab export <run-dir>``.

Exit codes: 0 all assertions passed, 1 some assertion failed, 2 the
configuration was rejected, 3 a module raised during the run.  Errors are
printed to stderr as a JSON object ``{"error": {...}}``.

Run directories live under ``$CHLAB_OUTPUT_ROOT`` (default ``./chlab-runs``)
and are named ``<experiment>-seed<seed>`` unless the config gives ``output``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import yaml

from .errors import ChlabError, ConfigError
from .experiments import list_experiments, run_experiment, validate_config
from .io import read_csv, sha256, write_csv, write_json

__all__ = ["main", "load_config", "output_dir"]

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
ENV_ROOT = "CHLAB_OUTPUT_ROOT"


def load_config(path) -> dict:
    """Parse a YAML config file and validate it against its experiment schema."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return validate_config(raw)


def output_dir(cfg: dict) -> Path:
    root = Path(os.environ.get(ENV_ROOT, "chlab-runs"))
    name = cfg["output"] or f"{cfg['experiment']}-seed{cfg['seed']}"
    return root / name


def _error(kind: str, exc: BaseException, **extra) -> dict:
    err = {"type": kind, "exception": type(exc).__name__, "message": str(exc), **extra}
    sugg = getattr(exc, "suggestions", None)
    if sugg is not None:
        err["suggestions"] = sugg
    return {"error": err}


def _emit_error(payload: dict, out: Path | None = None) -> None:
    print(json.dumps(payload, indent=2, ensure_ascii=False), file=sys.stderr)
    if out is not None:
        write_json(out / "error.json", payload)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _emit_error(_error("config", exc, config=str(args.config)))
        return EXIT_CONFIG
    out = output_dir(cfg)
    try:
        report = run_experiment(cfg, out)
    except ChlabError as exc:
        _emit_error(_error("runtime", exc, experiment=cfg["experiment"]), out)
        return EXIT_RUNTIME
    except Exception as exc:  # unexpected failures still get a structured record
        _emit_error(_error("runtime", exc, experiment=cfg["experiment"],
                           traceback=traceback.format_exc(limit=5)), out)
        return EXIT_RUNTIME
    for a in report["assertions"]:
        mark = "PASS" if a["passed"] else "FAIL"
        print(f"{mark} {a['id']}: {a['measured']:.6g} {a['comparator']} {a['tolerance']:.6g}")
    print(f"{report['status'].upper()} {report['experiment']} -> {out / 'report.json'}")
    return EXIT_PASS if report["status"] == "pass" else EXIT_FAIL


def cmd_list(args) -> int:
    items = list_experiments()
    width = max(len(n) for n, _ in items)
    for name, desc in items:
        print(f"{name:<{width}}  {desc}")
    return EXIT_PASS


def cmd_export(args) -> int:
    """Verify the manifest of a run and write ``assertions.csv`` and ``manifest.csv``."""
    run = Path(args.run_dir)
    try:
        report = json.loads((run / "report.json").read_text())
    except (OSError, ValueError) as exc:
        _emit_error(_error("config", exc, run_dir=str(run)))
        return EXIT_CONFIG
    dest = Path(args.to) if args.to else run
    rows = []
    for entry in report.get("files", []):
        path = run / entry["path"]
        ok = path.is_file() and sha256(path) == entry["sha256"]
        n_rows = len(read_csv(path)[1]) if ok else 0
        rows.append([entry["path"], entry["sha256"], int(ok), n_rows])
    write_csv(dest / "manifest.csv", ["file", "sha256", "verified", "rows"], rows)
    write_csv(dest / "assertions.csv", ["id", "measured", "comparator", "tolerance", "passed"],
              [[a["id"], a["measured"], a["comparator"], a["tolerance"], int(a["passed"])] for a in report["assertions"]])
    bad = [r[0] for r in rows if not r[2]]
    if bad:
        _emit_error({"error": {"type": "runtime", "message": "manifest mismatch", "files": bad}})
        return EXIT_RUNTIME
    print(f"exported {len(rows)} files and {len(report['assertions'])} assertions to {dest}")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chlab", description="Camassa-Holm soliton laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiment described by a YAML config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("list", help="list registered experiments")
    p.set_defaults(func=cmd_list)
    p = sub.add_parser("export", help="verify a run directory and write summary CSVs")
    p.add_argument("run_dir")
    p.add_argument("--to", default=None, help="destination directory (default: the run directory)")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
