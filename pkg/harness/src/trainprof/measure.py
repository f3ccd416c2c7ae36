"""Latency and memory measurement for one (network, batch size) datapoint.

Device targets:
  unified      embedded boards with one memory space shared by CPU and GPU;
               memory read from /proc/meminfo, latency from CUDA events
  discrete     server GPUs; memory from NVML, latency from CUDA events
  cpu          real execution on the CPU, wall-clock latency, /proc/meminfo
  cpu-dry-run  no execution: deterministic analytical stand-in values so CI
               and resume logic can run anywhere, repeatably
"""

from __future__ import annotations

import logging
import statistics
import threading
import time
from dataclasses import dataclass

from .executor import DeviceError, TrainingStep
from .netdef import NetDef

log = logging.getLogger("trainprof")

DEVICE_TARGETS = ("unified", "discrete", "cpu", "cpu-dry-run")
MEMINFO_PATH = "/proc/meminfo"


@dataclass(frozen=True)
class Measurement:
    phi_ms: float
    gamma_mb: float
    small_phi_ms: float | None = None
    small_gamma_mb: float | None = None
    raw_phi_ms: tuple = ()


def meminfo_used_mb(path: str = MEMINFO_PATH) -> float:
    """MemTotal - MemFree - Buffers - Cached, in MB."""
    fields = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            key, _, rest = line.partition(":")
            fields[key.strip()] = int(rest.strip().split()[0])  # kB
    used_kb = (fields["MemTotal"] - fields["MemFree"]
               - fields["Buffers"] - fields["Cached"])
    return used_kb / 1024.0


def nvml_used_mb(index: int = 0) -> float:
    try:
        import pynvml
    except ImportError as exc:
        raise DeviceError("pynvml is required for the discrete target") from exc
    pynvml.nvmlInit()
    try:
        handle = pynvml.nvmlDeviceGetHandleByIndex(index)
        return pynvml.nvmlDeviceGetMemoryInfo(handle).used / 1e6
    finally:
        pynvml.nvmlShutdown()


class _MemorySampler:
    """Polls a memory reader in a sidecar thread, keeping the maximum."""

    def __init__(self, reader, poll_hz: float = 10.0):
        self.reader = reader
        self.interval = 1.0 / poll_hz
        self.peak = reader()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, daemon=True)

    def _loop(self):
        while not self._stop.is_set():
            self.peak = max(self.peak, self.reader())
            self._stop.wait(self.interval)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()
        self.peak = max(self.peak, self.reader())


# -- dry-run analytics -------------------------------------------------------
#
# Deterministic placeholder curves derived from the description alone; they
# move in the right direction with batch size and network width, but are not
# measurements of anything.

_DRY = {"phi_base_ms": 2.0, "phi_ms_per_gmac": 120.0,
        "gamma_base_mb": 250.0, "bytes_per_element": 4.0,
        "small_phi_base_ms": 0.8, "small_phi_ms_per_gmac": 40.0,
        "small_gamma_base_mb": 120.0}


def dry_run_measurement(net: NetDef, bs: int, repeats: int = 1) -> Measurement:
    convs = net.conv_layers()
    gmacs = sum(l.macs(bs) for l in convs) / 1e9
    params = sum(l.params() for l in convs)
    acts = sum(l.activations(bs) for l in convs)
    phi = _DRY["phi_base_ms"] + _DRY["phi_ms_per_gmac"] * gmacs
    gamma = (_DRY["gamma_base_mb"]
             + _DRY["bytes_per_element"] * (params * (1 + bs) + 2 * acts) / 1e6)
    gmacs1 = sum(l.macs(1) for l in convs) / 1e9
    acts1 = sum(l.activations(1) for l in convs)
    small_phi = _DRY["small_phi_base_ms"] + _DRY["small_phi_ms_per_gmac"] * gmacs1
    small_gamma = (_DRY["small_gamma_base_mb"]
                   + _DRY["bytes_per_element"] * (params + acts1) / 1e6)
    return Measurement(phi_ms=phi, gamma_mb=gamma,
                       small_phi_ms=small_phi, small_gamma_mb=small_gamma,
                       raw_phi_ms=(phi,) * repeats)


# -- real measurement --------------------------------------------------------


def _cuda_step_ms(step: TrainingStep, forward_only: bool) -> float:
    torch = step.torch
    start = torch.cuda.Event(enable_timing=True)
    end = torch.cuda.Event(enable_timing=True)
    start.record()
    step.run(forward_only)
    end.record()
    torch.cuda.synchronize(step.device)
    return start.elapsed_time(end)


def _cpu_step_ms(step: TrainingStep, forward_only: bool) -> float:
    t0 = time.perf_counter()
    step.run(forward_only)
    return (time.perf_counter() - t0) * 1e3


def measure_latency(net: NetDef, bs: int, device: str = "cpu",
                    repeats: int = 3, warmup: int = 1,
                    forward_only: bool = False) -> tuple[float, list[float]]:
    """Median over repeats of one training-step time, in ms.

    Warmup steps run first and are discarded; the raw per-repeat values are
    returned alongside the median and logged.  `forward_only` times the
    inference stage instead of the full step.
    """
    if device == "cpu-dry-run":
        m = dry_run_measurement(net, bs, repeats)
        value = m.small_phi_ms if forward_only else m.phi_ms
        return value, [value] * repeats
    use_cuda = device in ("unified", "discrete")
    step = _build_step(net, bs, use_cuda)
    timer = _cuda_step_ms if use_cuda else _cpu_step_ms
    for _ in range(warmup):
        timer(step, forward_only)
    raw = [timer(step, forward_only) for _ in range(repeats)]
    log.info("latency raw values for %s bs=%d: %s", net.name, bs, raw)
    return statistics.median(raw), raw


def measure_memory(net: NetDef, bs: int, device: str = "cpu",
                   poll_hz: float = 10.0, forward_only: bool = False) -> float:
    """Maximum memory reading observed over one training step, in MB."""
    if device == "cpu-dry-run":
        m = dry_run_measurement(net, bs)
        return m.small_gamma_mb if forward_only else m.gamma_mb
    reader = nvml_used_mb if device == "discrete" else meminfo_used_mb
    step = _build_step(net, bs, device in ("unified", "discrete"))
    with _MemorySampler(reader, poll_hz) as sampler:
        step.run(forward_only)
    return sampler.peak


def _build_step(net: NetDef, bs: int, use_cuda: bool) -> TrainingStep:
    if use_cuda:
        import torch
        if not torch.cuda.is_available():
            raise DeviceError("CUDA device requested but not available")
        return TrainingStep(net, bs, device="cuda")
    return TrainingStep(net, bs, device="cpu")


def measure_entry(net: NetDef, bs: int, device: str, repeats: int, warmup: int,
                  include_inference: bool, poll_hz: float = 10.0) -> Measurement:
    """Full measurement for one plan entry."""
    if device not in DEVICE_TARGETS:
        raise DeviceError(f"unknown device target {device!r}; have {DEVICE_TARGETS}")
    if device == "cpu-dry-run":
        m = dry_run_measurement(net, bs, repeats)
        if not include_inference:
            m = Measurement(phi_ms=m.phi_ms, gamma_mb=m.gamma_mb,
                            raw_phi_ms=m.raw_phi_ms)
        return m
    phi, raw = measure_latency(net, bs, device, repeats, warmup)
    gamma = measure_memory(net, bs, device, poll_hz)
    small_phi = small_gamma = None
    if include_inference:
        small_phi, _ = measure_latency(net, 1, device, repeats, warmup,
                                       forward_only=True)
        small_gamma = measure_memory(net, 1, device, poll_hz, forward_only=True)
    return Measurement(phi_ms=phi, gamma_mb=gamma, small_phi_ms=small_phi,
                       small_gamma_mb=small_gamma, raw_phi_ms=tuple(raw))
