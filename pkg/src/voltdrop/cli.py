"""Command line entry point: ``voltdrop run`` and ``voltdrop verify``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .analyzer import analyze, responded_iops, summarize
from .config import Experiment, load_config
from .errors import ConfigError, VoltdropError
from .experiments import ack_delays, delay_histogram, run_experiment
from .report import _csv_text, emit_reports, load_record, summary_text, verdict_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 2, 3

log = logging.getLogger("voltdrop")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voltdrop",
                                description="Power-fault injection on a simulated SSD.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run the experiment a config file describes")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--scale", type=float, default=0.01,
                     help="shrink WSS, request count and fault count (default 0.01)")
    run.add_argument("--seed", type=int, default=None, help="master seed for workload and faults")
    run.add_argument("--out", type=Path, default=None, help="output directory (overrides output_dir)")

    ver = sub.add_parser("verify", parents=[common], help="re-run the analyzer on a saved trace and flash dump")
    ver.add_argument("--trace", required=True, type=Path)
    ver.add_argument("--flash-dump", required=True, type=Path)
    ver.add_argument("--out", type=Path, default=None, help="write the verdict CSV here")
    return p


def _time_interval_extras(results) -> dict[str, str]:
    delays = [d for r in results for d in ack_delays(r)]
    rows = [["req_id", "class", "ack_to_cutoff_ms"]] + [[i, c, f"{d:.3f}"] for i, c, d in delays]
    hist = [["bin_ms", "failures"]] + [list(x) for x in delay_histogram(delays)]
    return {"ack_delays.csv": _csv_text(rows), "delay_histogram.csv": _csv_text(hist)}


def cmd_run(args) -> int:
    if args.scale <= 0:
        raise ConfigError(f"--scale must be > 0, got {args.scale}")
    cfg = load_config(args.config)
    out = args.out or cfg.output_dir
    results = run_experiment(cfg, args.scale, args.seed)
    extras = _time_interval_extras(results) if cfg.experiment is Experiment.TIME_INTERVAL else None
    emit_reports(results, out, extras)
    sys.stdout.write(summary_text(results))
    log.info("wrote results to %s", out)
    return EXIT_OK


def cmd_verify(args) -> int:
    record = load_record(args.trace, args.flash_dump)
    verdicts = analyze(record)
    report = summarize(verdicts, {}, record.cutoffs, responded_iops(record))
    text = verdict_csv(verdicts)
    if args.out:
        try:
            args.out.write_text(text)
        except OSError as e:
            raise VoltdropError(f"cannot write {args.out}: {e.strerror}") from None
    else:
        sys.stdout.write(text)
    c = report.counts
    print(f"requests={report.n_requests} faults={report.faults} clean={c['clean']} "
          f"data_failure={c['data_failure']} fwa={c['fwa']} io_error={c['io_error']}",
          file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return cmd_run(args) if args.command == "run" else cmd_verify(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except VoltdropError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
