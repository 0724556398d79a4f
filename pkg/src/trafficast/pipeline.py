"""Feature engineering, sliding windows and scaling.

A trace of ``N_time`` samples becomes ``N_time - gamma - delta + 1`` pairs
``(X_tau, Y_tau)``: ``X_tau`` holds the feature rows ``tau - delta + 1 .. tau``
and ``Y_tau`` the traffic values ``tau .. tau + gamma``.  Indices here are
0-based; ``tau_index`` stores the 0-based position of the window's last row.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .trace import TrafficTrace

# Column order of the feature matrix.
FEATURE_NAMES = ("th", "af", "sf", "afs", "th_ema15", "af_x_afs", "ql_x_afs")
BASE_FEATURES = ("th", "af", "sf", "afs")
ALL_FEATURES = FEATURE_NAMES
TRAFFIC_LIKE = frozenset({"th", "th_ema15"})
EMA15_SPAN = 8  # 15 minutes at 2-minute sampling


class EmptyTrace(ValueError):
    pass


class EmptySeries(ValueError):
    pass


class SeriesTooShort(ValueError):
    def __init__(self, n_time: int, required: int):
        super().__init__(f"series has {n_time} samples, windowing needs at least {required}")
        self.n_time = n_time
        self.required = required


@dataclass(frozen=True)
class FeatureSet:
    names: tuple[str, ...] = BASE_FEATURES

    def __post_init__(self):
        names = tuple(self.names)
        unknown = [n for n in names if n not in FEATURE_NAMES]
        if unknown:
            raise ValueError(f"unknown features {unknown}; choose from {FEATURE_NAMES}")
        if not names:
            raise ValueError("at least one feature must be enabled")
        # Canonical order regardless of how the caller listed them.
        object.__setattr__(self, "names", tuple(n for n in FEATURE_NAMES if n in names))

    def __len__(self) -> int:
        return len(self.names)

    @property
    def n_features(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class WindowConfig:
    delta: int
    gamma: int
    features: FeatureSet = field(default_factory=FeatureSet)

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    @property
    def min_length(self) -> int:
        return self.delta + self.gamma

    def to_dict(self) -> dict:
        return {"delta": self.delta, "gamma": self.gamma, "features": list(self.features.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "WindowConfig":
        return cls(int(d["delta"]), int(d["gamma"]), FeatureSet(tuple(d.get("features", BASE_FEATURES))))


def ema(series, span: int) -> np.ndarray:
    """Exponential moving average seeded with the first value, alpha = 2/(span+1)."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise EmptySeries("ema of an empty series")
    if span < 1:
        raise ValueError("span must be >= 1")
    alpha = 2.0 / (span + 1)
    out = np.empty_like(x)
    out[0] = x[0]
    for t in range(1, len(x)):
        out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1]
    return out


def compute_features(trace: TrafficTrace, features: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    """Return the ``(N_time, n_features)`` feature matrix and the traffic vector."""
    if len(trace) == 0:
        raise EmptyTrace("trace has no samples")
    th = trace.column("throughput")
    af = trace.column("active_files")
    sf = trace.column("submitted_files")
    afs = trace.column("avg_file_size")
    builders = {
        "th": lambda: th,
        "af": lambda: af,
        "sf": lambda: sf,
        "afs": lambda: afs,
        "th_ema15": lambda: ema(th, EMA15_SPAN),
        "af_x_afs": lambda: af * afs,
        "ql_x_afs": lambda: sf * afs,
    }
    matrix = np.column_stack([builders[n]() for n in features.names])
    return matrix, trace.column("traffic")


class ScalerKind(enum.Enum):
    STANDARDIZE = "standardize"
    CAPACITY = "capacity"


@dataclass(frozen=True)
class Scaler:
    """Affine per-feature input scaling plus a capacity scale for targets.

    Inputs map to ``(x - mean) / std``; targets map to ``y / capacity``.
    """

    kind: ScalerKind
    mean: np.ndarray
    std: np.ndarray
    capacity: float

    def transform_inputs(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse_inputs(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def transform_targets(self, y: np.ndarray) -> np.ndarray:
        return y / self.capacity

    def inverse_targets(self, z: np.ndarray) -> np.ndarray:
        return z * self.capacity

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "capacity": float(self.capacity),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(
            ScalerKind(d["kind"]),
            np.asarray(d["mean"], dtype=np.float64),
            np.asarray(d["std"], dtype=np.float64),
            float(d["capacity"]),
        )


@dataclass(frozen=True)
class WindowedDataset:
    inputs: np.ndarray  # (n_windows, delta, n_features), unscaled
    targets: np.ndarray  # (n_windows, gamma + 1), unscaled
    tau_index: np.ndarray  # (n_windows,) 0-based index of each window's last row
    config: WindowConfig
    scaler: Scaler | None = None

    def __len__(self) -> int:
        return len(self.inputs)

    def with_scaler(self, scaler: Scaler) -> "WindowedDataset":
        return replace(self, scaler=scaler)

    def scaled(self) -> tuple[np.ndarray, np.ndarray]:
        if self.scaler is None:
            raise ValueError("dataset has no scaler")
        return self.scaler.transform_inputs(self.inputs), self.scaler.transform_targets(self.targets)

    def subset(self, idx) -> "WindowedDataset":
        return replace(
            self, inputs=self.inputs[idx], targets=self.targets[idx], tau_index=self.tau_index[idx]
        )


def make_windows(matrix: np.ndarray, y: np.ndarray, config: WindowConfig) -> WindowedDataset:
    matrix = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if matrix.ndim != 2 or len(matrix) != len(y):
        raise ValueError(f"matrix {matrix.shape} and target {y.shape} do not align")
    n_time = len(y)
    d, g = config.delta, config.gamma
    if n_time < d + g:
        raise SeriesTooShort(n_time, d + g)
    n = n_time - g - d + 1
    # sliding_window_view puts the window axis last; move it to axis 1.
    x = sliding_window_view(matrix, d, axis=0)[:n].transpose(0, 2, 1).copy()
    tgt = sliding_window_view(y[d - 1 :], g + 1)[:n].copy()
    tau = np.arange(d - 1, d - 1 + n)
    return WindowedDataset(x, tgt, tau, config)


def fit_scaler(
    dataset: WindowedDataset,
    kind: ScalerKind | str = ScalerKind.STANDARDIZE,
    capacity: float = 10e9,
) -> Scaler:
    """Fit on (training) windows.  Zero-variance features get std 1."""
    kind = ScalerKind(kind)
    if len(dataset) == 0:
        raise ValueError("cannot fit a scaler on an empty dataset")
    names = dataset.config.features.names
    if kind is ScalerKind.STANDARDIZE:
        flat = dataset.inputs.reshape(-1, len(names))
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        std = np.where(std > 0, std, 1.0)
    else:
        mean = np.zeros(len(names))
        std = np.array([capacity if n in TRAFFIC_LIKE else 1.0 for n in names])
    return Scaler(kind, mean, std, float(capacity))


def prepare(trace: TrafficTrace, config: WindowConfig) -> WindowedDataset:
    matrix, y = compute_features(trace, config.features)
    return make_windows(matrix, y, config)
