"""Labeled flow-feature data: records, synthetic traffic, splits, folds, scaling.

The synthetic generator plants three anomaly regimes inside fixed-length
traffic windows:

* ``flood``: high packet rate, tiny SYN packets, short inter-arrival gaps.
* ``beacon``: near-periodic packets of one fixed size (low spectral entropy).
* ``exfiltration``: bursts of near-MTU data packets.

Each generated window carries a label, so the stream can be re-windowed by
:mod:`flowlens.features` and labeled from the written label intervals.
"""

from __future__ import annotations

import csv
import enum
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from flowlens.errors import ConfigError, DataError, ShapeError, SizeError

SPLITS = ("train", "val", "test", "unassigned")
FLOW_HEADER = ("timestamp", "src_port", "dst_port", "protocol", "packet_size", "tcp_flags")
LABEL_HEADER = ("window_start", "window_end", "label", "regime")
REGIMES = ("flood", "beacon", "exfiltration")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent RNG for one named pipeline component.

    Streams depend only on ``(seed, name)``, so adding or reordering stages
    never perturbs the randomness of the others.
    """
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])


class Protocol(enum.IntEnum):
    # IANA protocol numbers double as the numeric feature code.
    ICMP = 1
    TCP = 6
    UDP = 17


class TcpFlag(enum.IntFlag):
    SYN = 1
    ACK = 2
    FIN = 4
    RST = 8
    PSH = 16


_FLAG_ORDER = (TcpFlag.SYN, TcpFlag.ACK, TcpFlag.FIN, TcpFlag.RST, TcpFlag.PSH)


def format_flags(flags: TcpFlag) -> str:
    return "|".join(f.name for f in _FLAG_ORDER if f in flags)


def parse_flags(text: str) -> TcpFlag:
    flags = TcpFlag(0)
    for part in filter(None, text.strip().split("|")):
        try:
            flags |= TcpFlag[part.strip().upper()]
        except KeyError:
            raise DataError(f"unknown TCP flag {part!r}") from None
    return flags


@dataclass(frozen=True)
class FlowRecord:
    timestamp: float
    src_port: int
    dst_port: int
    protocol: Protocol
    packet_size: int
    tcp_flags: TcpFlag = TcpFlag(0)

    def __post_init__(self):
        for name in ("src_port", "dst_port"):
            port = getattr(self, name)
            if not 0 <= port <= 65535:
                raise DataError(f"{name}={port} outside 0-65535")
        if self.packet_size < 0:
            raise DataError(f"packet_size={self.packet_size} is negative")


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the seeded traffic generator.

    ``n_flows`` counts generated traffic windows (one labeled row each after
    featurization), not individual packets.
    """

    n_flows: int = 1300
    anomaly_rate: float = 0.10
    regime_mix: dict[str, float] = field(
        default_factory=lambda: {"flood": 0.5, "beacon": 0.25, "exfiltration": 0.25}
    )
    difficulty: str = "easy"
    seed: int = 42
    window_seconds: float = 5.0
    label_noise: float = 0.5  # fraction of anomalous windows swapped, hard preset only

    def __post_init__(self):
        if self.n_flows < 1:
            raise ConfigError(f"n_flows must be >= 1, got {self.n_flows}")
        if not 0.0 < self.anomaly_rate < 1.0:
            raise ConfigError(f"anomaly_rate must lie in (0, 1), got {self.anomaly_rate}")
        unknown = set(self.regime_mix) - set(REGIMES)
        if unknown:
            raise ConfigError(f"unknown regimes {sorted(unknown)}; expected {REGIMES}")
        weights = np.array([self.regime_mix.get(r, 0.0) for r in REGIMES], dtype=float)
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ConfigError(f"regime weights must be non-negative, got {self.regime_mix}")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ConfigError(f"regime weights must sum to 1, got {weights.sum()}")
        if self.difficulty not in ("easy", "hard"):
            raise ConfigError(f"difficulty must be 'easy' or 'hard', got {self.difficulty!r}")
        if self.window_seconds <= 0:
            raise ConfigError("window_seconds must be positive")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ConfigError("label_noise must lie in [0, 1]")


@dataclass(frozen=True)
class WindowPlan:
    start: float
    end: float
    label: int
    regime: str  # traffic actually emitted: "normal" or one of REGIMES


def plan_windows(config: SyntheticConfig) -> list[WindowPlan]:
    """Decide label and emitted traffic regime for every window.

    Exactly ``round(n_flows * anomaly_rate)`` windows are labeled anomalous.
    On the hard preset a ``label_noise`` share of anomalous windows emit
    normal traffic and the same number of normal windows emit anomaly
    traffic, which keeps the label fraction exact while corrupting the signal.
    """
    rng = substream(config.seed, "generator.plan")
    n = config.n_flows
    n_pos = int(round(n * config.anomaly_rate))
    labels = np.zeros(n, dtype=int)
    labels[rng.permutation(n)[:n_pos]] = 1

    weights = np.array([config.regime_mix.get(r, 0.0) for r in REGIMES])
    regimes = np.array(["normal"] * n, dtype=object)
    pos = np.flatnonzero(labels == 1)
    regimes[pos] = rng.choice(REGIMES, size=len(pos), p=weights)

    if config.difficulty == "hard":
        n_swap = min(int(round(config.label_noise * len(pos))), n - len(pos))
        quiet = rng.choice(pos, size=n_swap, replace=False)
        neg = np.flatnonzero(labels == 0)
        loud = rng.choice(neg, size=n_swap, replace=False)
        regimes[loud] = regimes[quiet]
        regimes[quiet] = "normal"

    w = config.window_seconds
    return [WindowPlan(i * w, (i + 1) * w, int(labels[i]), str(regimes[i])) for i in range(n)]


# Per-difficulty regime intensities; hard windows overlap normal traffic.
_INTENSITY = {
    "easy": {"normal": 18.0, "flood": 75.0, "beacon": 40.0, "exfil": 40.0, "background": 6.0},
    "hard": {"normal": 18.0, "flood": 22.0, "beacon": 20.0, "exfil": 20.0, "background": 15.0},
}
_SERVICE_PORTS = np.array([80, 443, 53, 22, 8080, 123])
_SERVICE_P = np.array([0.3, 0.35, 0.15, 0.05, 0.1, 0.05])


def _times(rng, start, width, count):
    return np.sort(start + rng.uniform(0.0, width, size=count))


def _normal_packets(rng, start, width, lam, out):
    count = max(int(rng.poisson(lam)), 4)
    ts = _times(rng, start, width, count)
    protos = rng.choice([Protocol.TCP, Protocol.UDP, Protocol.ICMP], size=count, p=[0.8, 0.17, 0.03])
    for t, proto in zip(ts, protos):
        if rng.random() < 0.55:
            size = int(rng.integers(40, 160))
        else:
            size = int(rng.integers(400, 1500))
        dport = int(rng.choice(_SERVICE_PORTS, p=_SERVICE_P))
        sport = int(rng.integers(49152, 65536))
        flags = TcpFlag(0)
        if proto == Protocol.TCP:
            u = rng.random()
            if u < 0.05:
                flags = TcpFlag.SYN
            elif u < 0.08:
                flags = TcpFlag.FIN | TcpFlag.ACK
            elif u < 0.09:
                flags = TcpFlag.RST
            elif size > 400:
                flags = TcpFlag.PSH | TcpFlag.ACK
            else:
                flags = TcpFlag.ACK
        out.append((t, sport, dport, Protocol(int(proto)), size, flags))


def _flood_packets(rng, start, width, lam, out):
    count = max(int(rng.poisson(lam)), 4)
    target = int(rng.choice([80, 443, 22]))
    for t in _times(rng, start, width, count):
        out.append((t, int(rng.integers(49152, 65536)), target, Protocol.TCP,
                    int(rng.integers(40, 66)), TcpFlag.SYN))


def _beacon_packets(rng, start, width, lam, out):
    count = max(int(rng.poisson(lam)), 4)
    period = width / count
    phase = rng.uniform(0.0, period)
    size = int(rng.integers(180, 260))
    sport = int(rng.integers(49152, 65536))
    for i in range(count):
        t = start + min(phase + i * period + rng.normal(0.0, 0.01 * period), width * 0.999999)
        out.append((max(t, start), sport, 443, Protocol.TCP, size, TcpFlag.PSH | TcpFlag.ACK))


def _exfil_packets(rng, start, width, lam, out):
    count = max(int(rng.poisson(lam)), 4)
    sport = int(rng.integers(49152, 65536))
    dport = int(rng.choice([443, 22, 21]))
    for t in _times(rng, start, width, count):
        out.append((t, sport, dport, Protocol.TCP, int(rng.integers(1380, 1501)),
                    TcpFlag.PSH | TcpFlag.ACK))


def generate_flows(config: SyntheticConfig) -> Iterator[tuple[FlowRecord, int]]:
    """Yield ``(record, window_label)`` pairs in non-decreasing time order.

    The stream is a deterministic function of ``config``.
    """
    intensity = _INTENSITY[config.difficulty]
    rng = substream(config.seed, "generator.traffic")
    for plan in plan_windows(config):
        packets: list[tuple] = []
        width = plan.end - plan.start
        if plan.regime == "normal":
            _normal_packets(rng, plan.start, width, intensity["normal"], packets)
        else:
            _normal_packets(rng, plan.start, width, intensity["background"], packets)
            if plan.regime == "flood":
                _flood_packets(rng, plan.start, width, intensity["flood"], packets)
            elif plan.regime == "beacon":
                _beacon_packets(rng, plan.start, width, intensity["beacon"], packets)
            else:
                _exfil_packets(rng, plan.start, width, intensity["exfil"], packets)
        # microsecond timestamps survive a CSV round trip exactly
        rows = [(round(float(p[0]), 6),) + p[1:] for p in packets]
        rows.sort(key=lambda r: r[0])
        for t, sport, dport, proto, size, flags in rows:
            t = min(max(t, plan.start), round(plan.end - 1e-6, 6))
            yield FlowRecord(t, sport, dport, proto, size, flags), plan.label


def write_flows(records: Iterator[FlowRecord] | Sequence[FlowRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FLOW_HEADER)
        for r in records:
            writer.writerow([f"{r.timestamp:.6f}", r.src_port, r.dst_port, r.protocol.name,
                             r.packet_size, format_flags(r.tcp_flags)])
            n += 1
    return n


def _check_header(found, expected, path):
    if found is None:
        raise DataError(f"{path}: empty file, expected header {','.join(expected)}")
    missing = [c for c in expected if c not in found]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}; expected header {','.join(expected)}")


def read_flows(path: str | Path) -> list[FlowRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, FLOW_HEADER, path)
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(FlowRecord(
                    timestamp=float(row["timestamp"]),
                    src_port=int(row["src_port"]),
                    dst_port=int(row["dst_port"]),
                    protocol=Protocol[row["protocol"].strip().upper()],
                    packet_size=int(row["packet_size"]),
                    tcp_flags=parse_flags(row["tcp_flags"] or ""),
                ))
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad flow record ({exc})") from None
    return records


def write_label_intervals(plans: Sequence[WindowPlan], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_HEADER)
        for p in plans:
            writer.writerow([repr(p.start), repr(p.end), p.label, p.regime])


def read_label_intervals(path: str | Path) -> list[tuple[float, float, int]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, LABEL_HEADER[:3], path)
        try:
            return [(float(r["window_start"]), float(r["window_end"]), int(r["label"])) for r in reader]
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: bad label interval ({exc})") from None


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    splits: np.ndarray = None  # one tag from SPLITS per row

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels)
        if X.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ShapeError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if not np.all(np.isin(y, (0, 1))):
            raise DataError("labels must be 0 or 1")
        names = tuple(self.feature_names)
        if len(names) != X.shape[1]:
            raise ShapeError(f"{len(names)} feature names for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        tags = (np.full(X.shape[0], "unassigned", dtype=object) if self.splits is None
                else np.array(self.splits, dtype=object))
        if tags.shape != (X.shape[0],):
            raise ShapeError("one split tag per row required")
        bad = set(tags) - set(SPLITS)
        if bad:
            raise DataError(f"unknown split tags {sorted(bad)}")
        y = y.astype(int)
        for arr in (X, y, tags):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "splits", tags)

    def __len__(self):
        return self.features.shape[0]

    def mask(self, split: str) -> np.ndarray:
        return self.splits == split

    def subset(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        m = self.mask(split)
        return self.features[m], self.labels[m]

    def with_splits(self, tags) -> LabeledDataset:
        return LabeledDataset(self.features, self.labels, self.feature_names, tags)

    def with_features(self, X) -> LabeledDataset:
        return LabeledDataset(X, self.labels, self.feature_names, self.splits)


def write_dataset(data: LabeledDataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*data.feature_names, "label", "split"])
        for row, label, tag in zip(data.features, data.labels, data.splits):
            writer.writerow([*(repr(float(v)) for v in row), int(label), tag])


def read_dataset(path: str | Path, feature_names: Sequence[str] | None = None) -> LabeledDataset:
    """Read a labeled-dataset CSV; validates the header against ``feature_names``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if header[-2:] != ["label", "split"]:
            raise DataError(f"{path}: last two columns must be 'label,split', got {header[-2:]}")
        names = header[:-2]
        if feature_names is not None and list(names) != list(feature_names):
            missing = [n for n in feature_names if n not in names]
            extra = [n for n in names if n not in feature_names]
            raise DataError(f"{path}: feature columns do not match schema (missing {missing}, "
                            f"unexpected {extra}, expected order {','.join(feature_names)})")
        X, y, tags = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                X.append([float(v) for v in row[:-2]])
                y.append(int(row[-2]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            tags.append(row[-1])
    X = np.array(X, dtype=float).reshape(len(y), len(names))
    return LabeledDataset(X, np.array(y, dtype=int), tuple(names), tags)


def _allocate(total: int, sizes: Sequence[int]) -> list[int]:
    """Split ``total`` across buckets proportionally to ``sizes`` (largest remainder)."""
    n = sum(sizes)
    quotas = [total * s / n for s in sizes]
    alloc = [int(np.floor(q)) for q in quotas]
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[: total - sum(alloc)]:
        alloc[i] += 1
    return alloc


def split_train_val_test(data: LabeledDataset, counts: tuple[int, int, int], seed: int) -> LabeledDataset:
    """Stratified, seeded assignment of exactly ``counts`` rows to train/val/test."""
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or min(counts) < 0:
        raise SizeError(f"counts must be three non-negative integers, got {counts}")
    n = len(data)
    if sum(counts) > n:
        raise SizeError(f"split counts {counts} sum to {sum(counts)} > {n} rows")
    buckets = [*counts, n - sum(counts)]
    rng = substream(seed, "splits")
    tags = np.empty(n, dtype=object)
    pos = np.flatnonzero(data.labels == 1)
    n_pos = _allocate(len(pos), buckets)
    neg_counts = [b - p for b, p in zip(buckets, n_pos)]
    for idx, per_bucket in ((pos, n_pos), (np.flatnonzero(data.labels == 0), neg_counts)):
        idx = rng.permutation(idx)
        start = 0
        for tag, k in zip(SPLITS, per_bucket):
            tags[idx[start:start + k]] = tag
            start += k
    return data.with_splits(tags)


def default_split_counts(n: int) -> tuple[int, int, int]:
    """700/300/300 proportions scaled to ``n`` rows (exact at n=1300)."""
    train, val, test = _allocate(n, [7, 3, 3])
    return train, val, test


@dataclass(frozen=True)
class FoldAssignment:
    fold_index: np.ndarray
    k: int

    def folds(self):
        """Yield ``(train_idx, test_idx)`` for each fold in order."""
        for f in range(self.k):
            yield np.flatnonzero(self.fold_index != f), np.flatnonzero(self.fold_index == f)


def stratified_kfold(labels, k: int, seed: int) -> FoldAssignment:
    """Round-robin dealing of class-shuffled rows into ``k`` folds.

    Dealing one class after the other keeps both fold sizes and per-class
    fold counts within one sample of each other.
    """
    y = np.asarray(labels.labels if isinstance(labels, LabeledDataset) else labels)
    n = len(y)
    if k < 2:
        raise SizeError(f"k must be >= 2, got {k}")
    if k > n:
        raise SizeError(f"k={k} exceeds {n} rows")
    classes = np.unique(y)
    rng = substream(seed, "folds")
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in classes])
    fold = np.empty(n, dtype=int)
    fold[order] = np.arange(n) % k
    return FoldAssignment(fold, k)


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"expected {self.mean.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mean) / self.scale

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean


def fit_standardizer(X) -> Standardizer:
    """Per-feature mean and population std; zero-variance columns keep scale 1."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise SizeError("cannot fit a standardizer on an empty training split")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return Standardizer(mean, scale)


def apply_standardizer(std: Standardizer, data: LabeledDataset) -> LabeledDataset:
    return data.with_features(std.transform(data.features))
