"""Forward-pass throughput of host networks that differ only in attention.

Frames of all variants are interleaved, so slow drift in machine load hits
every variant alike. Warm-up frames are run and discarded. Timing covers the
tensor-in to tensor-out forward only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .autograd import Tensor, no_grad
from .network import NetworkSpec, build

MIN_WARMUP = 5
MIN_FRAMES = 20


@dataclass(frozen=True)
class BenchReport:
    variant: str
    input_size: Tuple[int, int]
    frames: int
    total_seconds: float
    median_ms: float
    p90_ms: float

    @property
    def fps(self) -> float:
        return self.frames / self.total_seconds

    def row(self) -> List[str]:
        h, w = self.input_size
        return [self.variant, f"{h}x{w}", str(self.frames), f"{self.total_seconds:.6f}",
                f"{self.fps:.3f}", f"{self.median_ms:.3f}", f"{self.p90_ms:.3f}"]


HEADER = ["variant", "size", "frames", "total_s", "fps", "median_ms", "p90_ms"]


def report_from_latencies(variant: str, size: Tuple[int, int], latencies: Sequence[float]) -> BenchReport:
    lat = np.asarray(latencies, dtype=np.float64)
    return BenchReport(variant, tuple(size), int(lat.size), float(lat.sum()),
                       float(np.median(lat) * 1e3), float(np.quantile(lat, 0.9) * 1e3))


def run_bench(base: NetworkSpec, variants: Sequence[str], sizes: Sequence[Tuple[int, int]],
              frames: int = 700, warmup: int = MIN_WARMUP, seed: int = 0) -> List[BenchReport]:
    """One report per (size, variant). ``base`` fixes every host setting
    except the attention kind."""
    if frames < MIN_FRAMES:
        raise ValueError(f"need at least {MIN_FRAMES} timed frames, got {frames}")
    if warmup < MIN_WARMUP:
        raise ValueError(f"need at least {MIN_WARMUP} warm-up frames, got {warmup}")
    nets = {v: build(base.with_attention(v), seed) for v in variants}
    rng = np.random.default_rng(seed)
    reports = []
    for h, w in sizes:
        x = Tensor(rng.uniform(size=(1, 3, h, w)).astype(np.float32))
        lat: Dict[str, List[float]] = {v: [] for v in variants}
        with no_grad():
            for i in range(warmup + frames):
                # rotate the order so no variant always runs first
                k = i % len(variants)
                for v in list(variants[k:]) + list(variants[:k]):
                    t0 = time.perf_counter()
                    nets[v](x)
                    dt = time.perf_counter() - t0
                    if i >= warmup:
                        lat[v].append(dt)
        reports += [report_from_latencies(v, (h, w), lat[v]) for v in variants]
    return reports
