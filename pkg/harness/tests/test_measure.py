import json
import statistics

import pytest

from trainprof.executor import DeviceError, TrainingStep
from trainprof.measure import (_MemorySampler, measure_entry, measure_latency,
                               measure_memory, meminfo_used_mb)
from trainprof.netdef import parse_netdef

from netdoc import tiny_net_doc


def tiny_net():
    return parse_netdef(json.dumps(tiny_net_doc()))


class TestMeminfo:
    def test_arithmetic(self, tmp_path):
        fake = tmp_path / "meminfo"
        fake.write_text("MemTotal:       8000000 kB\n"
                        "MemFree:        2000000 kB\n"
                        "MemAvailable:   3000000 kB\n"
                        "Buffers:         500000 kB\n"
                        "Cached:         1500000 kB\n")
        used = meminfo_used_mb(str(fake))
        assert used == pytest.approx((8_000_000 - 2_000_000 - 500_000 - 1_500_000) / 1024)

    def test_real_proc_readable(self):
        assert meminfo_used_mb() >= 0


class TestSampler:
    def test_tracks_maximum(self):
        values = iter([5.0, 9.0, 3.0] + [1.0] * 100)

        def reader():
            return next(values, 1.0)

        with _MemorySampler(reader, poll_hz=200.0) as sampler:
            import time
            time.sleep(0.05)
        assert sampler.peak == 9.0


class TestCpuExecution:
    def test_training_step_runs(self):
        step = TrainingStep(tiny_net(), bs=2, device="cpu")
        step.run()

    def test_forward_only_runs(self):
        step = TrainingStep(tiny_net(), bs=1, device="cpu")
        step.run(forward_only=True)

    def test_residual_and_concat_execute(self):
        doc = {
            "name": "branchy", "input": {"channels": 3, "spatial": 6},
            "layers": [
                {"id": "stem", "type": "conv", "n": 4, "m": 3, "k": 3, "s": 1,
                 "p": 1, "g": 1, "ip": 6},
                {"id": "a", "type": "conv", "n": 4, "m": 4, "k": 3, "s": 1,
                 "p": 1, "g": 1, "ip": 6},
                {"id": "j", "type": "conv", "n": 2, "m": 4, "k": 1, "s": 1,
                 "p": 0, "g": 1, "ip": 6},
                {"id": "cat", "type": "conv", "n": 2, "m": 6, "k": 1, "s": 1,
                 "p": 0, "g": 1, "ip": 6}],
            "edges": [
                {"from": "stem", "to": "a"},
                {"from": "stem", "to": "j", "mode": "add"},
                {"from": "a", "to": "j", "mode": "add"},
                {"from": "j", "to": "cat", "mode": "concat"},
                {"from": "a", "to": "cat", "mode": "concat"}],
        }
        net = parse_netdef(json.dumps(doc))
        TrainingStep(net, bs=2, device="cpu").run()

    def test_cpu_latency_positive_and_median(self):
        phi, raw = measure_latency(tiny_net(), bs=1, device="cpu",
                                   repeats=5, warmup=1)
        assert len(raw) == 5
        assert phi == statistics.median(raw)
        assert phi > 0

    def test_cpu_memory_nonnegative(self):
        assert measure_memory(tiny_net(), bs=1, device="cpu") >= 0

    def test_unknown_device_rejected(self):
        with pytest.raises(DeviceError):
            measure_entry(tiny_net(), 1, "tpu", 1, 0, False)


class TestDryRunTarget:
    def test_positive_finite_latency(self):
        phi, raw = measure_latency(tiny_net(), bs=1, device="cpu-dry-run")
        assert phi > 0 and raw == [phi] * 3

    def test_entry_contains_both_families(self):
        m = measure_entry(tiny_net(), 4, "cpu-dry-run", 3, 1, True)
        assert m.small_phi_ms is not None and m.small_gamma_mb is not None
        assert m.phi_ms > m.small_phi_ms


class TestDeviceEnv:
    def test_env_var_selects_default_target(self, monkeypatch):
        from trainprof.cli import build_parser
        monkeypatch.setenv("TRAINPROF_DEVICE", "cpu")
        args = build_parser().parse_args(
            ["--plan", "p.csv", "--networks-dir", "n", "-o", "out.csv"])
        assert args.device == "cpu"
