"""Traffic trace data model and CSV I/O.

A trace is a uniformly sampled series of link traffic together with the
FTS transfer features observed over the same interval.  Period labels live
in a sidecar file (``<stem>.labels.csv``) so unlabeled CSVs stay readable.
"""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRACE_HEADER = (
    "timestamp",
    "traffic_bps",
    "throughput_bps",
    "active_files",
    "submitted_files",
    "avg_file_size_bytes",
)
LABEL_HEADER = ("kind", "start_index", "end_index")

# Sample attribute for each CSV column, in header order.
_FIELDS = (
    "timestamp",
    "traffic",
    "throughput",
    "active_files",
    "submitted_files",
    "avg_file_size",
)


class TraceError(ValueError):
    """Base class for malformed trace input."""


class MalformedHeader(TraceError):
    pass


class RowError(TraceError):
    """A data row violates a trace invariant.  ``row`` is 1-based, header excluded."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class NonMonotonicTimestamp(RowError):
    pass


class IrregularSpacing(RowError):
    pass


class NegativeValue(RowError):
    pass


class MalformedRow(RowError):
    pass


class PeriodKind(enum.Enum):
    NORMAL = "normal"
    SATURATION = "saturation"
    DROP = "drop"
    SHORT_SPIKE = "spike"
    PSI = "psi"


@dataclass(frozen=True)
class LinkSpec:
    name: str = "link"
    capacity: float = 10e9
    sample_interval: float = 120.0

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if not self.sample_interval > 0:
            raise ValueError(f"sample_interval must be positive, got {self.sample_interval}")

    def to_dict(self) -> dict:
        return {"name": self.name, "capacity": self.capacity, "sample_interval": self.sample_interval}

    @classmethod
    def from_dict(cls, d: dict) -> "LinkSpec":
        return cls(
            name=str(d.get("name", "link")),
            capacity=float(d.get("capacity", 10e9)),
            sample_interval=float(d.get("sample_interval", 120.0)),
        )


@dataclass(frozen=True)
class Sample:
    timestamp: float
    traffic: float
    throughput: float
    active_files: float
    submitted_files: float
    avg_file_size: float


@dataclass(frozen=True)
class PeriodLabel:
    kind: PeriodKind
    start_index: int
    end_index: int

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise ValueError(f"label start {self.start_index} > end {self.end_index}")

    def __contains__(self, index: int) -> bool:
        return self.start_index <= index <= self.end_index

    def __len__(self) -> int:
        return self.end_index - self.start_index + 1


@dataclass(frozen=True)
class TrafficTrace:
    link: LinkSpec
    samples: tuple[Sample, ...]
    labels: tuple[PeriodLabel, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "labels", tuple(self.labels))
        _check_samples(self.samples, self.link.sample_interval)
        n = len(self.samples)
        for lab in self.labels:
            if lab.start_index < 0 or lab.end_index >= n:
                raise ValueError(f"label {lab} outside [0, {n - 1}]")

    def __len__(self) -> int:
        return len(self.samples)

    def column(self, name: str) -> np.ndarray:
        """Sample attribute ``name`` as a float64 array."""
        if name not in _FIELDS:
            raise KeyError(name)
        return np.array([getattr(s, name) for s in self.samples], dtype=np.float64)

    def with_labels(self, labels: Iterable[PeriodLabel]) -> "TrafficTrace":
        return TrafficTrace(self.link, self.samples, tuple(labels))

    def labels_of(self, kind: PeriodKind) -> list[PeriodLabel]:
        return [lab for lab in self.labels if lab.kind is kind]


def _check_samples(samples: Sequence[Sample], interval: float, first_row: int = 1) -> None:
    prev = None
    for i, s in enumerate(samples):
        row = first_row + i
        for name in _FIELDS[1:]:
            v = getattr(s, name)
            if not np.isfinite(v):
                raise MalformedRow(row, f"{name} is not finite")
            if v < 0:
                raise NegativeValue(row, f"{name} = {v!r} is negative")
        if prev is not None:
            if s.timestamp <= prev:
                raise NonMonotonicTimestamp(row, f"timestamp {s.timestamp!r} does not increase")
            if s.timestamp - prev != interval:
                raise IrregularSpacing(
                    row, f"spacing {s.timestamp - prev!r} differs from sample interval {interval!r}"
                )
        prev = s.timestamp


def labels_path_for(path: str | os.PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".labels.csv")


def read_csv(
    path: str | os.PathLike,
    link: LinkSpec | None = None,
    labels_path: str | os.PathLike | None = None,
) -> TrafficTrace:
    """Read a trace CSV, plus its label sidecar if one exists.

    Rows are validated in order so the first offending row is reported.
    """
    link = link or LinkSpec()
    samples: list[Sample] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise MalformedHeader(f"{path}: expected header {','.join(TRACE_HEADER)}, got {header}")
        prev = None
        for i, rec in enumerate(reader):
            row = i + 1
            if not rec:
                continue
            if len(rec) != len(TRACE_HEADER):
                raise MalformedRow(row, f"expected {len(TRACE_HEADER)} fields, got {len(rec)}")
            try:
                values = [float(v) for v in rec]
            except ValueError as exc:
                raise MalformedRow(row, str(exc)) from None
            s = Sample(*values)
            _check_samples([s], link.sample_interval, row)  # per-row value checks
            if prev is not None:
                if s.timestamp <= prev:
                    raise NonMonotonicTimestamp(row, f"timestamp {rec[0]} does not increase")
                if s.timestamp - prev != link.sample_interval:
                    raise IrregularSpacing(row, f"timestamp {rec[0]} is off the sampling grid")
            prev = s.timestamp
            samples.append(s)

    if labels_path is None:
        candidate = labels_path_for(path)
        labels_path = candidate if candidate.exists() else None
    labels = read_labels(labels_path) if labels_path is not None else []
    return TrafficTrace(link, tuple(samples), tuple(labels))


def read_labels(path: str | os.PathLike) -> list[PeriodLabel]:
    labels = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != LABEL_HEADER:
            raise MalformedHeader(f"{path}: expected header {','.join(LABEL_HEADER)}, got {header}")
        for i, rec in enumerate(reader):
            if not rec:
                continue
            try:
                kind = PeriodKind(rec[0].strip())
                labels.append(PeriodLabel(kind, int(rec[1]), int(rec[2])))
            except (ValueError, IndexError) as exc:
                raise MalformedRow(i + 1, f"bad label record {rec}: {exc}") from None
    return labels


def write_csv(trace: TrafficTrace, path: str | os.PathLike) -> None:
    """Write ``trace`` with full-precision decimals; labels go to the sidecar file.

    ``repr`` of a float is the shortest string that parses back to the same
    value, which is what makes the round trip exact.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for s in trace.samples:
            w.writerow([repr(float(getattr(s, name))) for name in _FIELDS])
    sidecar = labels_path_for(path)
    if trace.labels:
        write_labels(trace.labels, sidecar)
    elif sidecar.exists():
        sidecar.unlink()


def write_labels(labels: Iterable[PeriodLabel], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_HEADER)
        for lab in labels:
            w.writerow([lab.kind.value, lab.start_index, lab.end_index])


def trace_from_arrays(
    link: LinkSpec,
    traffic,
    throughput=None,
    active_files=None,
    submitted_files=None,
    avg_file_size=None,
    start_time: float = 0.0,
    labels: Iterable[PeriodLabel] = (),
) -> TrafficTrace:
    """Build a trace from column arrays; missing feature columns are zero."""
    traffic = np.asarray(traffic, dtype=np.float64)
    n = len(traffic)

    def col(a):
        return np.zeros(n) if a is None else np.asarray(a, dtype=np.float64)

    cols = [traffic, col(throughput), col(active_files), col(submitted_files), col(avg_file_size)]
    samples = tuple(
        Sample(float(start_time + i * link.sample_interval), *(float(c[i]) for c in cols))
        for i in range(n)
    )
    return TrafficTrace(link, samples, tuple(labels))
