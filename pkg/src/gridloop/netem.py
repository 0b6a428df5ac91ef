"""Wide-area link emulation: delay sampling, ordered/unordered delivery, latency stats."""
from __future__ import annotations

import csv
import enum
import io
import zlib
from dataclasses import dataclass, field

import numpy as np

HIST_BINS = 200  # 1 ms bins over 0-200 ms; the last bin also takes overflow


class LinkMode(str, enum.Enum):
    STREAM = "stream"
    DATAGRAM = "datagram"


@dataclass(frozen=True)
class DelayModel:
    """Truncated-Gaussian delay with an occasional uniform spike."""

    base_ms: float = 32.0
    jitter_std_ms: float = 2.0
    spike_prob: float = 0.01
    spike_range_ms: tuple[float, float] = (70.0, 85.0)
    seed: int = 0
    mode: LinkMode = LinkMode.STREAM

    def __post_init__(self):
        lo, hi = self.spike_range_ms
        if self.base_ms < 0 or self.jitter_std_ms < 0:
            raise ValueError("base_ms and jitter_std_ms must be >= 0")
        if not 0.0 <= self.spike_prob <= 1.0:
            raise ValueError("spike_prob must lie in [0, 1]")
        if not 0 <= lo <= hi:
            raise ValueError("spike range must satisfy 0 <= lo <= hi")
        object.__setattr__(self, "mode", LinkMode(self.mode))

    @classmethod
    def zero(cls, mode: LinkMode = LinkMode.STREAM) -> DelayModel:
        return cls(base_ms=0.0, jitter_std_ms=0.0, spike_prob=0.0, spike_range_ms=(0.0, 0.0), mode=mode)


def make_rng(seed: int, *stream: str | int) -> np.random.Generator:
    """Independent generator for a named stream derived from ``seed``.

    Names are hashed with crc32, not ``hash()``, so streams do not depend on
    PYTHONHASHSEED.
    """
    key = tuple(zlib.crc32(s.encode()) if isinstance(s, str) else int(s) for s in stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def delay_sample(model: DelayModel, rng: np.random.Generator) -> float:
    """One delay in ms; never negative."""
    if model.spike_prob > 0.0 and rng.random() < model.spike_prob:
        lo, hi = model.spike_range_ms
        return float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    if model.jitter_std_ms == 0.0:
        return float(model.base_ms)
    return max(0.0, float(rng.normal(model.base_ms, model.jitter_std_ms)))


@dataclass
class LatencyStats:
    count: int = 0
    mean_ms: float = 0.0
    max_ms: float = 0.0
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(HIST_BINS, dtype=np.int64))
    reorder_count: int = 0

    @classmethod
    def from_records(cls, records: list[tuple[int, int]]) -> LatencyStats:
        """``records`` are (send_us, delivery_us) pairs in send order."""
        if not records:
            return cls()
        delays = np.array([(d - s) / 1000.0 for s, d in records])
        hist = np.bincount(np.minimum(delays.astype(np.int64), HIST_BINS - 1), minlength=HIST_BINS)
        return cls(
            count=len(records),
            mean_ms=float(delays.mean()),
            max_ms=float(delays.max()),
            histogram=hist,
            reorder_count=count_inversions([d for _, d in records]),
        )


def count_inversions(values: list[int] | list[float]) -> int:
    """Pairs i < j with values[j] < values[i] (merge sort, O(n log n))."""

    def sort(seq):
        if len(seq) <= 1:
            return seq, 0
        mid = len(seq) // 2
        left, a = sort(seq[:mid])
        right, b = sort(seq[mid:])
        merged, inv = [], a + b
        i = j = 0
        while i < len(left) and j < len(right):
            if right[j] < left[i]:
                merged.append(right[j])
                inv += len(left) - i
                j += 1
            else:
                merged.append(left[i])
                i += 1
        merged.extend(left[i:])
        merged.extend(right[j:])
        return merged, inv

    return sort(list(values))[1]


class Link:
    """One direction of an emulated link.

    Delivery times are integer microseconds. In stream mode a message never
    overtakes its predecessor (ordered transport); datagram mode may reorder.
    """

    def __init__(self, model: DelayModel, rng: np.random.Generator | None = None, name: str = ""):
        self.model = model
        self.rng = rng if rng is not None else make_rng(model.seed, name or "link")
        self.name = name
        self.records: list[tuple[int, int]] = []
        self._last_delivery: int | None = None

    def deliver(self, send_us: int, delay_ms: float | None = None) -> int:
        """Schedule one message sent at ``send_us``; returns its delivery time.

        ``delay_ms`` overrides the sampled delay (used to replay a schedule).
        """
        if delay_ms is None:
            delay_ms = delay_sample(self.model, self.rng)
        t = send_us + int(round(delay_ms * 1000.0))
        if self.model.mode is LinkMode.STREAM and self._last_delivery is not None:
            t = max(t, self._last_delivery)
        self._last_delivery = t
        self.records.append((send_us, t))
        return t

    def stats(self) -> LatencyStats:
        return LatencyStats.from_records(self.records)


def merge_stats(links: list[Link]) -> LatencyStats:
    """Aggregate over several directional pipes sharing one model.

    Reorderings are only meaningful within a pipe, so they are summed per pipe.
    """
    records = sorted(r for link in links for r in link.records)
    stats = LatencyStats.from_records(records)
    stats.reorder_count = sum(count_inversions([d for _, d in link.records]) for link in links)
    return stats


def latency_csv(records: list[tuple[int, int]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["send_ts_us", "delivery_ts_us", "delay_ms"])
    for s, d in records:
        writer.writerow([s, d, repr((d - s) / 1000.0)])
    return buf.getvalue()


def read_latency_csv(text: str) -> list[tuple[int, int]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["send_ts_us", "delivery_ts_us", "delay_ms"]:
        raise ValueError("not a latency csv")
    return [(int(r[0]), int(r[1])) for r in rows[1:] if r]
