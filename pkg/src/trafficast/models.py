"""The four forecasting architectures, training loop, checkpoints and predictions.

Every architecture maps a scaled window ``[batch, delta, n_features]`` to
``gamma + 1`` capacity-scaled traffic values:

* ``cnn``        conv1d(f) -> relu -> flatten -> dense
* ``lstm``       lstm(f) -> dense
* ``cnn_lstm``   conv1d(8) -> relu -> lstm(f) -> dense
* ``conv_lstm``  reshape to delta frames of n_features x 1 -> convlstm(f) -> flatten -> dense
"""

from __future__ import annotations

import csv
import enum
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .evaluate import MetricsReport, evaluate
from .nn import (
    LSTM,
    AdamState,
    Conv1D,
    ConvLSTM,
    Dense,
    Flatten,
    ReLU,
    Reshape,
    Sequential,
    ShapeMismatch,
    adam_step,
    mse_loss,
)
from .pipeline import Scaler, WindowConfig, WindowedDataset

CHECKPOINT_FORMAT = "trafficast-checkpoint"
CHECKPOINT_VERSION = 1
CNN_LSTM_CONV_FILTERS = 8


class InvalidSpec(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class ScalerMissing(ValueError):
    pass


class Arch(enum.Enum):
    CNN = "cnn"
    LSTM = "lstm"
    CNN_LSTM = "cnn_lstm"
    CONV_LSTM = "conv_lstm"

    @property
    def recurrent(self) -> bool:
        return self is not Arch.CNN


# Batch size and filters/units that worked best per architecture.
PAPER_DEFAULTS = {
    Arch.CNN: {"f": 8, "batch_size": 1},
    Arch.LSTM: {"f": 64, "batch_size": 128},
    Arch.CNN_LSTM: {"f": 64, "batch_size": 128},
    Arch.CONV_LSTM: {"f": 8, "batch_size": 1},
}


@dataclass(frozen=True)
class ModelSpec:
    arch: Arch
    delta: int
    gamma: int
    n_features: int
    f: int
    kernel_size: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "arch", Arch(self.arch))
        if self.f < 1:
            raise InvalidSpec("f must be >= 1")
        if self.delta < 1 or self.gamma < 0 or self.n_features < 1:
            raise InvalidSpec(f"bad shape parameters delta={self.delta} gamma={self.gamma} n_features={self.n_features}")
        if self.kernel_size < 1:
            raise InvalidSpec("kernel_size must be >= 1")
        if self.arch in (Arch.CNN, Arch.CNN_LSTM) and self.kernel_size > self.delta:
            raise InvalidSpec(f"kernel_size {self.kernel_size} exceeds delta {self.delta}")

    @property
    def n_outputs(self) -> int:
        return self.gamma + 1

    def to_dict(self) -> dict:
        return {
            "arch": self.arch.value,
            "delta": self.delta,
            "gamma": self.gamma,
            "n_features": self.n_features,
            "f": self.f,
            "kernel_size": self.kernel_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            Arch(d["arch"]),
            int(d["delta"]),
            int(d["gamma"]),
            int(d["n_features"]),
            int(d["f"]),
            int(d.get("kernel_size", 3)),
            int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    validation_fraction: float = 0.2
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.repetitions < 1:
            raise ValueError("epochs, batch_size and repetitions must all be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in [0, 1)")


@dataclass
class Model:
    spec: ModelSpec
    net: Sequential

    def __call__(self, x):
        return self.net.forward(x)


def build(spec: ModelSpec) -> Model:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    d, nf, f, k, out = spec.delta, spec.n_features, spec.f, spec.kernel_size, spec.n_outputs
    if spec.arch is Arch.CNN:
        layers = [Conv1D(nf, f, k, rng), ReLU(), Flatten(), Dense((d - k + 1) * f, out, rng)]
    elif spec.arch is Arch.LSTM:
        layers = [LSTM(nf, f, rng), Dense(f, out, rng)]
    elif spec.arch is Arch.CNN_LSTM:
        cf = CNN_LSTM_CONV_FILTERS
        layers = [Conv1D(nf, cf, k, rng), ReLU(), LSTM(cf, f, rng), Dense(f, out, rng)]
    elif spec.arch is Arch.CONV_LSTM:
        layers = [Reshape((d, nf, 1)), ConvLSTM(1, f, k, rng), Flatten(), Dense(nf * f, out, rng)]
    else:  # pragma: no cover
        raise InvalidSpec(f"unknown architecture {spec.arch}")
    return Model(spec, Sequential(layers))


@dataclass
class Checkpoint:
    spec: ModelSpec
    window: WindowConfig
    scaler: Scaler | None
    weights: dict[str, np.ndarray]
    train_config: TrainConfig | None = None

    def model(self) -> Model:
        m = build(self.spec)
        m.net.load_params(self.weights)
        return m

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "toolkit_version": __version__,
            "spec": self.spec.to_dict(),
            "window": self.window.to_dict(),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "train_config": None if self.train_config is None else vars(self.train_config).copy(),
            # Decimal arrays written with repr precision round-trip exactly.
            "weights": {
                name: {"shape": list(w.shape), "data": [float(v) for v in w.ravel()]}
                for name, w in self.weights.items()
            },
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a trafficast checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        weights = {
            name: np.array(w["data"], dtype=np.float64).reshape(w["shape"]) for name, w in d["weights"].items()
        }
        tc = d.get("train_config")
        return cls(
            ModelSpec.from_dict(d["spec"]),
            WindowConfig.from_dict(d["window"]),
            None if d.get("scaler") is None else Scaler.from_dict(d["scaler"]),
            weights,
            None if tc is None else TrainConfig(**tc),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Checkpoint":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class LossCurve:
    train: list[float] = field(default_factory=list)
    val: list[float] = field(default_factory=list)

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for e, (tr, va) in enumerate(zip(self.train, self.val), start=1):
                w.writerow([e, repr(tr), "" if va is None else repr(va)])


def _check_dataset(spec: ModelSpec, ds: WindowedDataset, what: str) -> None:
    _, d, nf = ds.inputs.shape if ds.inputs.ndim == 3 else (0, -1, -1)
    if (d, nf) != (spec.delta, spec.n_features) or ds.targets.shape[1] != spec.n_outputs:
        raise ShapeMismatch(
            f"{what} windows are delta={d}, n_features={nf}, outputs={ds.targets.shape[1]}; "
            f"model expects delta={spec.delta}, n_features={spec.n_features}, outputs={spec.n_outputs}"
        )


def _forward_batched(net: Sequential, x: np.ndarray, chunk: int = 1024) -> np.ndarray:
    return np.concatenate([net.forward(x[i : i + chunk]) for i in range(0, len(x), chunk)])


def split_validation(ds: WindowedDataset, fraction: float) -> tuple[WindowedDataset, WindowedDataset | None]:
    """Chronological split: the last ``fraction`` of windows become validation data."""
    n_val = int(round(len(ds) * fraction))
    if n_val == 0 or n_val >= len(ds):
        return ds, None
    return ds.subset(slice(0, len(ds) - n_val)), ds.subset(slice(len(ds) - n_val, len(ds)))


def train(
    model: Model,
    train_ds: WindowedDataset,
    val_ds: WindowedDataset | None,
    config: TrainConfig,
) -> tuple[Checkpoint, LossCurve]:
    """Mini-batch Adam on the MSE loss for a fixed number of epochs.

    When ``val_ds`` is None the last ``validation_fraction`` of ``train_ds``
    is held out.  Losses recorded per epoch are full-pass MSEs after the
    epoch's updates, on scaled values.
    """
    if len(train_ds) == 0:
        raise EmptyDataset("training dataset has no windows")
    if train_ds.scaler is None:
        raise ScalerMissing("fit a scaler on the training windows first")
    if val_ds is None:
        train_ds, val_ds = split_validation(train_ds, config.validation_fraction)
    _check_dataset(model.spec, train_ds, "training")
    x, y = train_ds.scaled()
    xv = yv = None
    if val_ds is not None and len(val_ds) > 0:
        _check_dataset(model.spec, val_ds, "validation")
        xv, yv = val_ds.with_scaler(train_ds.scaler).scaled()

    net = model.net
    params = net.named_params()
    state = AdamState(learning_rate=config.learning_rate)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    curve = LossCurve()
    n, b = len(x), config.batch_size
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, b):
            idx = order[start : start + b]
            pred = net.forward(x[idx])
            _, grad = mse_loss(pred, y[idx])
            net.backward(grad)
            adam_step(params, net.named_grads(), state)
        curve.train.append(mse_loss(_forward_batched(net, x), y)[0])
        curve.val.append(None if xv is None else mse_loss(_forward_batched(net, xv), yv)[0])

    ckpt = Checkpoint(
        model.spec,
        train_ds.config,
        train_ds.scaler,
        {k: v.copy() for k, v in net.named_params().items()},
        config,
    )
    return ckpt, curve


def predict(checkpoint: Checkpoint, windows: WindowedDataset) -> np.ndarray:
    """Forecasts in the target's original units, one row per window."""
    if checkpoint.scaler is None:
        raise ScalerMissing("checkpoint carries no scaler")
    _check_dataset(checkpoint.spec, windows, "input")
    scaler = checkpoint.scaler
    net = checkpoint.model().net
    z = _forward_batched(net, scaler.transform_inputs(windows.inputs))
    return scaler.inverse_targets(z)


def run_repetitions(
    spec: ModelSpec,
    train_ds: WindowedDataset,
    val_ds: WindowedDataset | None,
    test_ds: WindowedDataset,
    config: TrainConfig,
    labels=(),
    meta: dict | None = None,
) -> list[tuple[Checkpoint, MetricsReport]]:
    """Train ``config.repetitions`` independent models and evaluate each on ``test_ds``.

    Repetition ``r`` seeds both initialisation and shuffling with ``config.seed + r``.
    """
    if config.repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if train_ds.scaler is None:
        raise ScalerMissing("fit a scaler on the training windows first")
    capacity = train_ds.scaler.capacity
    out = []
    for r in range(config.repetitions):
        seed = config.seed + r
        rep_spec = replace(spec, seed=seed)
        t0 = time.perf_counter()
        ckpt, _ = train(build(rep_spec), train_ds, val_ds, replace(config, seed=seed))
        elapsed = time.perf_counter() - t0
        preds = predict(ckpt, test_ds)
        info = {
            "arch": spec.arch.value,
            "delta": spec.delta,
            "gamma": spec.gamma,
            "f": spec.f,
            "batch_size": config.batch_size,
            "seed": seed,
        }
        info.update(meta or {})
        report = evaluate(preds, test_ds.targets, test_ds.tau_index, labels, scale=capacity, meta=info)
        report.train_seconds = elapsed
        out.append((ckpt, report))
    return out
