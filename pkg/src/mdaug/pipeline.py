"""On-the-fly augmentation: per-sample composition and an ordered, bounded,
multi-process sample stream.

Randomness for sample ``i`` under ``seed`` comes only from
``SeedSequence(entropy=seed, spawn_key=(i,))``; its first child drives the
spatial draw and its second the intensity draw. Nothing else is random, so a
sample never depends on worker count or scheduling.
"""
from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import nifti
from .intensity import apply_intensity, sample_intensity
from .presets import AugmentationPreset, load_preset
from .spatial import apply_spatial, sample_spatial
from .volumes import SegmentationMask, Volume, check_aligned, zscore_normalize


@dataclass(frozen=True)
class SampleRequest:
    case_id: str
    index: int
    seed: int = 0
    frame: Optional[str] = None


def sample_rngs(seed: int, index: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """(spatial, intensity) generators for one sample."""
    if seed < 0 or index < 0:
        raise ValueError("seed and sample index must be non-negative")
    spatial, intensity = np.random.SeedSequence(entropy=seed, spawn_key=(index,)).spawn(2)
    return np.random.default_rng(spatial), np.random.default_rng(intensity)


def augment_sample(v: Volume, m: Optional[SegmentationMask], preset, req: SampleRequest,
                   timings: Optional[dict] = None):
    """Spatial composition, then intensity transforms, all gated by the request's streams."""
    preset = load_preset(preset)
    check_aligned(v, m)
    rng_spatial, rng_intensity = sample_rngs(req.seed, req.index)

    t0 = time.perf_counter()
    t = sample_spatial(preset.spatial, rng_spatial, v.dims, v.spacing)
    t1 = time.perf_counter()
    v, m = apply_spatial(v, m, t)
    t2 = time.perf_counter()
    draw = sample_intensity(preset.intensity, rng_intensity)
    v = apply_intensity(v, draw, preset.intensity, timings)
    if timings is not None:
        timings["spatial_sample"] = timings.get("spatial_sample", 0.0) + t1 - t0
        timings["spatial_apply"] = timings.get("spatial_apply", 0.0) + t2 - t1
    return v, m


@dataclass(frozen=True)
class SampleSource:
    """One case frame; image and mask may be in memory or NIfTI paths."""

    case_id: str
    image: Union[Volume, str, Path]
    mask: Union[SegmentationMask, str, Path, None] = None
    frame: Optional[str] = None

    def load(self):
        v = self.image if isinstance(self.image, Volume) else nifti.load_volume(self.image)
        m = self.mask
        if m is not None and not isinstance(m, SegmentationMask):
            m = nifti.load_mask(m)
        return v, m


@dataclass
class StreamItem:
    index: int
    case_id: str
    frame: Optional[str] = None
    volume: Optional[Volume] = None
    mask: Optional[SegmentationMask] = None
    error: Optional[str] = None
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class StreamStats:
    produced: int = 0
    errors: int = 0
    peak_in_flight: int = 0
    elapsed: float = 0.0
    timings: dict = field(default_factory=dict)

    @property
    def samples_per_sec(self) -> float:
        return self.produced / self.elapsed if self.elapsed > 0 else 0.0


_WORKER_STATE = {}


def _init_worker(dataset, preset, seed, normalize):
    _WORKER_STATE.update(dataset=dataset, preset=preset, seed=seed, normalize=normalize)


def _produce(index: int) -> StreamItem:
    st = _WORKER_STATE
    source = st["dataset"][index % len(st["dataset"])]
    item = StreamItem(index, source.case_id, source.frame)
    try:
        v, m = source.load()
        if st["normalize"]:
            v = zscore_normalize(v)
        req = SampleRequest(source.case_id, index, st["seed"], source.frame)
        item.volume, item.mask = augment_sample(v, m, st["preset"], req, item.timings)
    except Exception as exc:  # surfaced per sample, the stream continues
        item.error = f"{type(exc).__name__}: {exc}"
    return item


class SampleStream:
    """Iterate augmented samples in index order.

    At most ``worker_count + queue_depth`` samples are in flight at once.
    ``n_samples=None`` means one pass over ``dataset``; ``endless=True`` cycles
    forever (the consumer decides when to stop).
    """

    def __init__(self, dataset: Sequence[SampleSource], preset, seed: int = 0,
                 worker_count: int = 1, n_samples: Optional[int] = None,
                 queue_depth: int = 2, normalize: bool = False, endless: bool = False):
        if worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if queue_depth < 0:
            raise ValueError("queue_depth must be >= 0")
        self.dataset = list(dataset)
        if not self.dataset:
            raise ValueError("dataset is empty")
        self.preset = load_preset(preset)
        self.seed = int(seed)
        self.worker_count = int(worker_count)
        self.n_samples = len(self.dataset) if n_samples is None else int(n_samples)
        self.queue_depth = int(queue_depth)
        self.normalize = normalize
        self.endless = endless
        self.stats = StreamStats()

    def _indices(self):
        i = 0
        while self.endless or i < self.n_samples:
            yield i
            i += 1

    def _record(self, item: StreamItem):
        self.stats.produced += 1
        self.stats.errors += 0 if item.ok else 1
        for k, v in item.timings.items():
            self.stats.timings[k] = self.stats.timings.get(k, 0.0) + v

    def __iter__(self) -> Iterator[StreamItem]:
        start = time.perf_counter()
        args = (self.dataset, self.preset, self.seed, self.normalize)
        try:
            if self.worker_count == 1:
                _init_worker(*args)
                for i in self._indices():
                    self.stats.peak_in_flight = max(self.stats.peak_in_flight, 1)
                    item = _produce(i)
                    self._record(item)
                    self.stats.elapsed = time.perf_counter() - start
                    yield item
                return
            limit = self.worker_count + self.queue_depth
            with ProcessPoolExecutor(self.worker_count, initializer=_init_worker,
                                     initargs=args) as pool:
                pending = deque()
                indices = self._indices()
                exhausted = False
                try:
                    while True:
                        while not exhausted and len(pending) < limit:
                            i = next(indices, None)
                            if i is None:
                                exhausted = True
                            else:
                                pending.append(pool.submit(_produce, i))
                        if not pending:
                            break
                        self.stats.peak_in_flight = max(self.stats.peak_in_flight, len(pending))
                        item = pending.popleft().result()
                        self._record(item)
                        self.stats.elapsed = time.perf_counter() - start
                        yield item
                finally:
                    for fut in pending:
                        fut.cancel()
        finally:
            self.stats.elapsed = time.perf_counter() - start


def stream(dataset: Sequence[SampleSource], preset, seed: int = 0, worker_count: int = 1,
           **kwargs) -> SampleStream:
    return SampleStream(dataset, preset, seed, worker_count, **kwargs)


def run_samples(dataset, preset, seed: int, worker_count: int, n_samples: int) -> List[StreamItem]:
    return list(SampleStream(dataset, preset, seed, worker_count, n_samples=n_samples))
