"""Command line: ``crossing-lab run <config> [--out DIR] [--workers N]`` and ``crossing-lab report <DIR>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config

log = logging.getLogger("crossing_lab")


def _parser():
    p = argparse.ArgumentParser(prog="crossing-lab", description="Killed random walk in random potential lab.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, default=None, help="artifact directory (default: config 'output' or ./out)")
    run.add_argument("--workers", type=int, default=None, help="worker threads (default: config 'workers')")
    rep = sub.add_parser("report", help="summarize the artifacts under a directory")
    rep.add_argument("dir", type=Path)
    rep.add_argument("--write", action="store_true", help="also write report.md into DIR")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    if args.command == "run":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            log.error("invalid config %s: %s", args.config, exc)
            return 2
        if args.workers is not None and args.workers < 1:
            log.error("--workers must be >= 1")
            return 2
        out = args.out or Path(cfg.get("output") or "out")
        from .experiments import run_experiment

        try:
            code = run_experiment(cfg, out, args.workers)
        except (ValueError, RuntimeError) as exc:
            log.error("%s run failed: %s", cfg.kind, exc)
            return 3
        log.info("artifacts written to %s (exit %d)", out, code)
        return code
    from .report import emit_report

    try:
        text = emit_report(args.dir)
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2
    print(text)
    if args.write:
        (args.dir / "report.md").write_text(text + "\n", encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
