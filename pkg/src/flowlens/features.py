"""Sliding-window featurization of flow-record streams into 19-feature rows."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from flowlens import spectral
from flowlens.dataset import FlowRecord, LabeledDataset, TcpFlag
from flowlens.errors import ConfigError, DataError, SizeError

FEATURE_NAMES: tuple[str, ...] = (
    "packet_count_5s",
    "inter_arrival_time",
    "spectral_entropy",
    "frequency_band_energy",
    "packet_size",
    "src_port",
    "dst_port",
    "protocol",
    "byte_count_5s",
    "packet_size_std",
    "packet_size_max",
    "inter_arrival_std",
    "inter_arrival_min",
    "syn_count",
    "ack_count",
    "fin_count",
    "rst_count",
    "band_energy_l2_fraction",
    "band_energy_l3_fraction",
)
DWT_LEVELS = 3


def schema() -> tuple[str, ...]:
    return FEATURE_NAMES


def feature_index(name: str) -> int:
    try:
        return FEATURE_NAMES.index(name)
    except ValueError:
        raise KeyError(f"unknown feature {name!r}; valid names: {', '.join(FEATURE_NAMES)}") from None


@dataclass(frozen=True)
class WindowConfig:
    window_seconds: float = 5.0
    stride_seconds: float = 5.0
    min_packets: int = 1
    origin: float | None = None  # grid anchor; None anchors at the first timestamp

    def __post_init__(self):
        if self.window_seconds <= 0 or self.stride_seconds <= 0:
            raise ConfigError("window_seconds and stride_seconds must be positive")
        if self.min_packets < 1:
            raise ConfigError("min_packets must be >= 1")


@dataclass(frozen=True)
class Window:
    start: float
    end: float
    records: tuple[FlowRecord, ...]

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True, eq=False)
class WindowFeatures:
    values: np.ndarray
    start: float
    end: float


def extract_windows(flows: Sequence[FlowRecord], config: WindowConfig = WindowConfig()) -> list[Window]:
    """Bucket a time-ordered stream into ``[start, start + window)`` windows.

    Window starts lie on the grid ``first + k * stride`` and continue while
    they do not pass the last timestamp. Runs of empty windows are skipped
    without iterating over them.
    """
    flows = list(flows)
    if not flows:
        return []
    t = np.array([r.timestamp for r in flows], dtype=float)
    backwards = np.flatnonzero(np.diff(t) < 0)
    if backwards.size:
        i = int(backwards[0]) + 1
        raise DataError(f"timestamps not time-ordered at index {i} ({t[i]} < {t[i - 1]})")

    width, stride = config.window_seconds, config.stride_seconds
    if config.origin is None:
        first = t[0]
    else:
        first = config.origin + math.floor((t[0] - config.origin) / stride) * stride
    windows = []
    k = 0
    while True:
        start = first + k * stride
        if start > t[-1]:
            break
        end = start + width
        lo, hi = np.searchsorted(t, [start, end], side="left")
        if hi - lo >= config.min_packets:
            windows.append(Window(start, end, tuple(flows[lo:hi])))
        if hi == lo and lo < t.size:
            # jump to the first grid window that can contain t[lo]
            k = max(k + 1, math.floor((t[lo] - width - first) / stride) + 1)
        else:
            k += 1
    return windows


def _mode(values: np.ndarray) -> float:
    uniq, counts = np.unique(values, return_counts=True)
    return float(uniq[np.argmax(counts)])


def _spectral_summary(sizes: np.ndarray) -> tuple[float, np.ndarray]:
    """Entropy and per-level detail-energy fractions (levels 1..3)."""
    fractions = np.zeros(DWT_LEVELS)
    if sizes.size < 2:
        return 0.0, fractions
    profile = spectral.band_energies(spectral.haar_dwt(sizes, DWT_LEVELS))
    entropy = spectral.spectral_entropy(profile)
    if profile.total > 0:
        detail = profile.energies[:-1] / profile.total
        fractions[: detail.size] = detail
    return entropy, fractions


def featurize_window(window: Window, min_packets: int = 1) -> WindowFeatures:
    n = len(window)
    if n < max(min_packets, 1):
        raise SizeError(f"window at {window.start} has {n} packets, needs >= {max(min_packets, 1)}")
    recs = window.records
    t = np.array([r.timestamp for r in recs], dtype=float)
    sizes = np.array([r.packet_size for r in recs], dtype=float)
    flags = [r.tcp_flags for r in recs]
    gaps = np.diff(t)
    entropy, fractions = _spectral_summary(sizes)

    values = np.array([
        n,
        gaps.mean() if gaps.size else 0.0,
        entropy,
        fractions[0],
        sizes.mean(),
        _mode(np.array([r.src_port for r in recs])),
        _mode(np.array([r.dst_port for r in recs])),
        _mode(np.array([int(r.protocol) for r in recs])),
        sizes.sum(),
        sizes.std(),
        sizes.max(),
        gaps.std() if gaps.size else 0.0,
        gaps.min() if gaps.size else 0.0,
        sum(TcpFlag.SYN in f for f in flags),
        sum(TcpFlag.ACK in f for f in flags),
        sum(TcpFlag.FIN in f for f in flags),
        sum(TcpFlag.RST in f for f in flags),
        fractions[1],
        fractions[2],
    ], dtype=float)
    return WindowFeatures(values, window.start, window.end)


def window_labels(windows: Sequence[Window], intervals, coverage: float = 0.5) -> np.ndarray:
    """Label 1 where anomalous intervals cover at least ``coverage`` of the window span."""
    pos = sorted((s, e) for s, e, label in intervals if label == 1)
    starts = np.array([s for s, _ in pos])
    ends = np.array([e for _, e in pos])
    labels = np.zeros(len(windows), dtype=int)
    for i, w in enumerate(windows):
        if not pos:
            break
        hi = np.searchsorted(starts, w.end, side="left")
        overlap = np.clip(np.minimum(ends[:hi], w.end) - np.maximum(starts[:hi], w.start), 0.0, None)
        labels[i] = int(overlap.sum() >= coverage * (w.end - w.start))
    return labels


def featurize(flows: Sequence[FlowRecord], config: WindowConfig = WindowConfig(),
              intervals=None) -> tuple[LabeledDataset, list[Window]]:
    """Featurize a stream; rows are labeled from ``(start, end, label)`` intervals when given."""
    windows = extract_windows(flows, config)
    X = np.array([featurize_window(w).values for w in windows]).reshape(len(windows), len(FEATURE_NAMES))
    y = window_labels(windows, intervals) if intervals is not None else np.zeros(len(windows), dtype=int)
    return LabeledDataset(X, y, FEATURE_NAMES), windows
