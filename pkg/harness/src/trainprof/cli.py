"""Command-line entry point for the profiling harness."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .executor import DeviceError
from .measure import DEVICE_TARGETS
from .netdef import NetDefError
from .runner import HarnessConfig, PlanFormatError, run_plan

DEVICE_ENV = "TRAINPROF_DEVICE"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trainprof",
        description="Measure training memory and mini-batch latency for every "
                    "entry of a profiling plan.")
    parser.add_argument("--plan", required=True, help="plan CSV from the modeling tool")
    parser.add_argument("--networks-dir", required=True,
                        help="directory of (pre-pruned) network JSON files")
    parser.add_argument("-o", "--output", required=True, help="measurement CSV path")
    parser.add_argument("--device", choices=DEVICE_TARGETS,
                        default=os.environ.get(DEVICE_ENV, "cpu-dry-run"),
                        help=f"device target (env {DEVICE_ENV} overrides the default)")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--warmup", type=int, default=1)
    parser.add_argument("--no-inference", action="store_true",
                        help="skip the inference-stage columns")
    parser.add_argument("--poll-hz", type=float, default=10.0,
                        help="memory sampling frequency")
    parser.add_argument("--max-entries", type=int, default=None,
                        help="stop (resumably) after this many plan entries")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    config = HarnessConfig(plan_path=args.plan, networks_dir=args.networks_dir,
                           out_path=args.output, device=args.device,
                           repeats=args.repeats, warmup=args.warmup,
                           include_inference=not args.no_inference,
                           poll_hz=args.poll_hz, max_entries=args.max_entries)
    try:
        run_plan(config)
        return 0
    except (PlanFormatError, NetDefError, DeviceError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
