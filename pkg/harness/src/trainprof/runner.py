"""Executes a profiling plan and emits the shared measurement CSV.

One row per successful plan entry, in plan order.  Failed entries (device
errors, out-of-memory) are recorded in a sidecar failures file so the main
CSV always satisfies the measurement schema.  An on-disk cursor makes
interrupted runs resumable without re-measuring completed rows.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
from dataclasses import dataclass

from .executor import DeviceError, OutOfMemoryError
from .measure import DEVICE_TARGETS, measure_entry
from .netdef import NetDef, NetDefError, load_netdef

log = logging.getLogger("trainprof")

PLAN_HEADER = ("network", "pruning_level", "strategy", "seed", "bs")
CSV_HEADER = ("network", "pruning_level", "strategy", "seed", "bs",
              "gamma_mb", "phi_ms", "small_gamma_mb", "small_phi_ms")


class PlanFormatError(ValueError):
    """Plan CSV does not follow the shared schema."""


@dataclass(frozen=True)
class PlanEntry:
    network: str
    pruning_level: int
    strategy: str
    seed: int
    bs: int

    def variant_filenames(self):
        specific = (f"{self.network}__L{self.pruning_level}__"
                    f"{self.strategy}__s{self.seed}.json")
        if self.pruning_level == 0:
            return (specific, f"{self.network}.json")
        return (specific,)


@dataclass(frozen=True)
class HarnessConfig:
    plan_path: str
    networks_dir: str
    out_path: str
    device: str = "cpu-dry-run"
    repeats: int = 3
    warmup: int = 1
    include_inference: bool = True
    poll_hz: float = 10.0
    max_entries: int | None = None  # stop (resumably) after this many entries

    def __post_init__(self):
        if self.device not in DEVICE_TARGETS:
            raise DeviceError(f"unknown device target {self.device!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")


def load_plan(path) -> list[PlanEntry]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != PLAN_HEADER:
        raise PlanFormatError(f"plan header must be {','.join(PLAN_HEADER)}")
    entries = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(PLAN_HEADER):
            raise PlanFormatError(f"row {i}: expected {len(PLAN_HEADER)} fields")
        try:
            entries.append(PlanEntry(row[0], int(row[1]), row[2],
                                     int(row[3]), int(row[4])))
        except ValueError as exc:
            raise PlanFormatError(f"row {i}: {exc}") from exc
    return entries


def resolve_network(entry: PlanEntry, networks_dir: str) -> NetDef:
    for candidate in entry.variant_filenames():
        path = os.path.join(networks_dir, candidate)
        if os.path.exists(path):
            return load_netdef(path)
    raise NetDefError(
        f"no network file for {entry}; looked for {entry.variant_filenames()} "
        f"in {networks_dir}")


def _plan_fingerprint(entries, config: HarnessConfig) -> str:
    text = "|".join(f"{e.network},{e.pruning_level},{e.strategy},{e.seed},{e.bs}"
                    for e in entries)
    text += f"|{config.device}|{config.repeats}|{config.warmup}|{config.include_inference}"
    return hashlib.sha256(text.encode()).hexdigest()


def _cursor_path(out_path: str) -> str:
    return out_path + ".cursor"


def _read_cursor(out_path: str, fingerprint: str) -> int:
    path = _cursor_path(out_path)
    if not os.path.exists(path) or not os.path.exists(out_path):
        return 0
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split()
    if len(lines) != 2 or lines[0] != fingerprint:
        log.warning("cursor does not match this plan; starting over")
        return 0
    return int(lines[1])


def _write_cursor(out_path: str, fingerprint: str, done: int) -> None:
    with open(_cursor_path(out_path), "w", encoding="utf-8") as fh:
        fh.write(f"{fingerprint} {done}\n")


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def run_plan(config: HarnessConfig) -> int:
    """Measure every plan entry; returns the number of successful rows.

    Resumes from the on-disk cursor when the output file already holds a
    prefix of this plan's rows.
    """
    entries = load_plan(config.plan_path)
    fingerprint = _plan_fingerprint(entries, config)
    done = _read_cursor(config.out_path, fingerprint)
    if done:
        log.info("resuming after %d completed entries", done)

    failures_path = config.out_path + ".failures.csv"
    mode = "a" if done else "w"
    successes = 0
    with open(config.out_path, mode, encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        if not done:
            writer.writerow(CSV_HEADER)
            out.flush()
        for index, entry in enumerate(entries):
            if index < done:
                continue
            if config.max_entries is not None and index >= config.max_entries:
                log.info("stopping after %d entries (max-entries)", index)
                return successes
            try:
                net = resolve_network(entry, config.networks_dir)
                m = measure_entry(net, entry.bs, config.device, config.repeats,
                                  config.warmup, config.include_inference,
                                  config.poll_hz)
                writer.writerow([entry.network, entry.pruning_level, entry.strategy,
                                 entry.seed, entry.bs, _fmt(m.gamma_mb),
                                 _fmt(m.phi_ms), _fmt(m.small_gamma_mb),
                                 _fmt(m.small_phi_ms)])
                out.flush()
                successes += 1
            except (DeviceError, OutOfMemoryError, NetDefError) as exc:
                log.error("entry %d failed: %s", index, exc)
                new_file = not os.path.exists(failures_path)
                with open(failures_path, "a", encoding="utf-8", newline="") as ffh:
                    fwriter = csv.writer(ffh)
                    if new_file:
                        fwriter.writerow(PLAN_HEADER + ("error",))
                    fwriter.writerow([entry.network, entry.pruning_level,
                                      entry.strategy, entry.seed, entry.bs,
                                      f"{type(exc).__name__}: {exc}"])
            _write_cursor(config.out_path, fingerprint, index + 1)
    if os.path.exists(_cursor_path(config.out_path)):
        os.remove(_cursor_path(config.out_path))
    log.info("plan complete: %d measured rows -> %s", successes, config.out_path)
    return successes
