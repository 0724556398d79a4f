"""Forecast metrics, rank correlation, Levene's test and comparison tables.

All MSE values are plain means over the evaluated windows: the per-step
error ``MSE_i`` divides by the number of windows actually summed, and the
horizon error is the sum of ``MSE_i`` over steps ``0..gamma``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.special import betainc

from .synthgen import kind_per_sample, psi_mask
from .trace import PeriodKind, PeriodLabel


class EmptyInput(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class NoPsiPeriod(ValueError):
    pass


class TooShort(ValueError):
    pass


class ZeroVariance(ValueError):
    pass


class TooFewGroups(ValueError):
    pass


class GroupTooSmall(ValueError):
    pass


def _as_2d(preds, targets):
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if t.ndim == 1:
        t = t[:, None]
    if p.shape != t.shape:
        raise ShapeMismatch(f"predictions {p.shape} vs targets {t.shape}")
    if p.shape[0] == 0:
        raise EmptyInput("no windows to evaluate")
    return p, t


def mse_per_step(preds, targets) -> np.ndarray:
    """Column-wise mean squared error, one value per forecast step."""
    p, t = _as_2d(preds, targets)
    d = t - p
    return np.mean(d * d, axis=0)


def _window_psi(tau_index, labels, n_samples=None) -> np.ndarray:
    tau_index = np.asarray(tau_index, dtype=np.int64)
    if n_samples is None:
        ends = [lab.end_index for lab in labels] + [int(tau_index.max()) if tau_index.size else 0]
        n_samples = max(ends) + 1
    return psi_mask(list(labels), n_samples)[tau_index]


def mse_psi(preds, targets, tau_index, labels) -> tuple[float, float]:
    """``(MSE_psi(gamma), MSE_psi,0)`` over windows whose tau lies in a psi span."""
    p, t = _as_2d(preds, targets)
    sel = _window_psi(tau_index, labels)
    if not sel.any():
        raise NoPsiPeriod("no evaluated window falls inside a psi period")
    steps = mse_per_step(p[sel], t[sel])
    return float(steps.sum()), float(steps[0])


# ------------------------------------------------------------ test statistics

def rankdata(a) -> np.ndarray:
    """1-based ranks, ties receiving the average of the ranks they span."""
    a = np.asarray(a, dtype=np.float64)
    n = a.size
    order = np.argsort(a, kind="mergesort")
    s = a[order]
    starts = np.r_[0, np.flatnonzero(np.diff(s)) + 1]
    ends = np.r_[starts[1:], n]
    ranks = np.empty(n)
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    return ranks


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if np.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_sf(w: float, d1: float, d2: float) -> float:
    """P(F >= w) for the F(d1, d2) distribution."""
    if w <= 0:
        return 1.0
    if np.isinf(w):
        return 0.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * w)))


def spearman(x, y) -> tuple[float, float]:
    """Spearman's rank correlation and its two-sided p-value (t approximation)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ShapeMismatch(f"lengths differ: {x.size} vs {y.size}")
    n = x.size
    if n < 3:
        raise TooShort(f"spearman needs at least 3 pairs, got {n}")
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx = np.dot(rx, rx)
    syy = np.dot(ry, ry)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("one of the inputs is constant")
    r = float(np.dot(rx, ry) / np.sqrt(sxx * syy))
    r = min(1.0, max(-1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt(df / (1.0 - r * r))
    return r, t_sf_two_sided(t, df)


def levene(groups) -> tuple[float, float]:
    """Levene's W statistic (deviations from group means) and its F p-value."""
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    k = len(groups)
    if k < 2:
        raise TooFewGroups(f"levene needs at least 2 groups, got {k}")
    for i, g in enumerate(groups):
        if g.size < 2:
            raise GroupTooSmall(f"group {i} has {g.size} element(s), need at least 2")
    z = [np.abs(g - g.mean()) for g in groups]
    n_i = np.array([g.size for g in groups], dtype=np.float64)
    N = n_i.sum()
    zbar_i = np.array([zi.mean() for zi in z])
    zbar = sum(zi.sum() for zi in z) / N
    between = float(np.sum(n_i * (zbar_i - zbar) ** 2))
    within = float(sum(np.sum((zi - m) ** 2) for zi, m in zip(z, zbar_i)))
    if within == 0.0:
        w = 0.0 if between == 0.0 else np.inf
    else:
        w = (N - k) / (k - 1) * between / within
    return float(w), f_sf(w, k - 1, N - k)


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags ``0..max_lag``."""
    x = np.asarray(series, dtype=np.float64)
    x = x - x.mean()
    denom = np.dot(x, x)
    if denom == 0:
        return np.r_[1.0, np.zeros(max_lag)]
    return np.array([np.dot(x[: x.size - lag], x[lag:]) / denom for lag in range(max_lag + 1)])


# ------------------------------------------------------------------ residuals

@dataclass
class ResidualSet:
    tau: np.ndarray
    fitted: np.ndarray
    real: np.ndarray
    residual: np.ndarray
    label: list[str]

    def __len__(self) -> int:
        return len(self.tau)

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "fitted", "real", "residual", "label"])
            for row in zip(self.tau, self.fitted, self.real, self.residual, self.label):
                w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), repr(float(row[3])), row[4]])


def residuals(preds, targets, tau_index, labels=()) -> ResidualSet:
    """One-step residuals ``real - fitted`` with the period kind of each window's tau."""
    p, t = _as_2d(preds, targets)
    tau = np.asarray(tau_index, dtype=np.int64)
    if tau.shape != (p.shape[0],):
        raise ShapeMismatch(f"tau_index {tau.shape} does not match {p.shape[0]} windows")
    labels = list(labels)
    if labels:
        n = max(max(lab.end_index for lab in labels), int(tau.max())) + 1
        kinds = kind_per_sample(labels, n)
        names = [kinds[i].value if kinds[i] is not None else "" for i in tau]
    else:
        names = [""] * len(tau)
    fitted = p[:, 0].copy()
    real = t[:, 0].copy()
    return ResidualSet(tau, fitted, real, real - fitted, names)


# -------------------------------------------------------------------- reports

@dataclass
class MetricsReport:
    mse_per_step: list[float]
    mse_total: float
    mse_0: float
    spearman_rs: float
    spearman_p: float
    n_windows: int
    mse_psi_total: float | None = None
    mse_psi_0: float | None = None
    spearman_rs_psi: float | None = None
    levene_w: float | None = None
    levene_p: float | None = None
    meta: dict = field(default_factory=dict)
    train_seconds: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["train_seconds"] is None:
            del d["train_seconds"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        if not isinstance(d, dict):
            raise ValueError("a metrics report must be a JSON object")
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MetricsReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def evaluate(preds, targets, tau_index, labels=(), scale: float = 1.0, meta: dict | None = None) -> MetricsReport:
    """Every metric for one set of predictions, on values divided by ``scale``.

    Psi metrics and the Levene test are filled in only when ``labels`` allow
    it: at least one window inside a psi span, and at least two windows in
    each of the normal and psi groups for Levene.
    """
    p, t = _as_2d(preds, targets)
    p = p / scale
    t = t / scale
    steps = mse_per_step(p, t)
    try:
        rs, rp = spearman(t[:, 0], p[:, 0])
    except (ZeroVariance, TooShort):
        rs, rp = float("nan"), float("nan")
    report = MetricsReport(
        mse_per_step=[float(v) for v in steps],
        mse_total=float(steps.sum()),
        mse_0=float(steps[0]),
        spearman_rs=rs,
        spearman_p=rp,
        n_windows=int(p.shape[0]),
        meta=dict(meta or {}),
    )
    labels = list(labels)
    if not any(lab.kind is PeriodKind.PSI for lab in labels):
        return report
    in_psi = _window_psi(tau_index, labels)
    if in_psi.any():
        report.mse_psi_total, report.mse_psi_0 = mse_psi(p, t, tau_index, labels)
        if in_psi.sum() >= 3:
            try:
                report.spearman_rs_psi = spearman(t[in_psi, 0], p[in_psi, 0])[0]
            except ZeroVariance:
                pass
    res = residuals(p, t, tau_index, labels)
    normal = np.array([lab == PeriodKind.NORMAL.value for lab in res.label])
    normal &= ~in_psi
    if normal.sum() >= 2 and in_psi.sum() >= 2:
        report.levene_w, report.levene_p = levene([res.residual[normal], res.residual[in_psi]])
    return report


# ------------------------------------------------------------ comparison table

_SUMMARY_FIELDS = (
    "mse_total",
    "mse_0",
    "mse_psi_total",
    "mse_psi_0",
    "spearman_rs",
    "spearman_rs_psi",
    "levene_w",
    "levene_p",
    "train_seconds",
)


def summarize(reports: list[MetricsReport]) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation of every scalar report field."""
    out = {}
    for name in _SUMMARY_FIELDS:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if vals:
            a = np.asarray(vals, dtype=np.float64)
            out[name] = (float(a.mean()), float(a.std()))
    steps = np.array([r.mse_per_step for r in reports])
    out["mse_per_step"] = (steps.mean(axis=0).tolist(), steps.std(axis=0).tolist())
    return out


@dataclass
class ComparisonRow:
    arch: str
    delta: int
    batch: str
    test: dict
    train: dict | None = None
    n_reps: int = 1


_COLUMNS = (
    ("delta", "Delta"),
    ("arch", "Model"),
    ("batch", "Batch-Filters/Units"),
    ("mse_train", "MSE train"),
    ("mse_test", "MSE test"),
    ("mse0_train", "MSE_0 train"),
    ("mse0_test", "MSE_0 test"),
    ("mse_psi", "MSE_psi(G)"),
    ("s_mse_psi", "S(MSE_psi)"),
    ("mse_psi0", "MSE_psi,0"),
    ("s_mse_psi0", "S(MSE_psi,0)"),
    ("r_s", "r_s"),
    ("time", "time [s]"),
)


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]

    def records(self) -> list[dict]:
        def mean(summary, name):
            return summary[name][0] if summary and name in summary else None

        def std(summary, name):
            return summary[name][1] if summary and name in summary else None

        out = []
        for r in self.rows:
            out.append(
                {
                    "delta": r.delta,
                    "arch": r.arch,
                    "batch": r.batch,
                    "mse_train": mean(r.train, "mse_total"),
                    "mse_test": mean(r.test, "mse_total"),
                    "mse0_train": mean(r.train, "mse_0"),
                    "mse0_test": mean(r.test, "mse_0"),
                    "mse_psi": mean(r.test, "mse_psi_total"),
                    "s_mse_psi": std(r.test, "mse_psi_total"),
                    "mse_psi0": mean(r.test, "mse_psi_0"),
                    "s_mse_psi0": std(r.test, "mse_psi_0"),
                    "r_s": mean(r.test, "spearman_rs"),
                    "time": mean(r.test, "train_seconds"),
                }
            )
        return out

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([key for key, _ in _COLUMNS])
            for rec in self.records():
                w.writerow(["" if rec[k] is None else rec[k] for k, _ in _COLUMNS])

    def to_text(self) -> str:
        header = [title for _, title in _COLUMNS]
        body = []
        for rec in self.records():
            cells = []
            for key, _ in _COLUMNS:
                v = rec[key]
                if v is None:
                    cells.append("-")
                elif isinstance(v, float):
                    cells.append(f"{v:.1f}" if key == "time" else f"{v:.3f}")
                else:
                    cells.append(str(v))
            body.append(cells)
        widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in [header] + body]
        lines.insert(1, "  ".join("-" * w for w in widths))
        reps = sorted({r.n_reps for r in self.rows})
        lines.append("")
        lines.append(
            f"Means over {'/'.join(map(str, reps))} repetition(s); S is the population standard deviation."
        )
        lines.append("MSE_i divides by the number of evaluated windows, N - gamma - delta + 1.")
        return "\n".join(lines) + "\n"


def compare_models(
    reports: dict[tuple[str, int], list[MetricsReport]],
    train_reports: dict[tuple[str, int], list[MetricsReport]] | None = None,
) -> ComparisonTable:
    """Aggregate repetitions per (arch, delta) into a table, rows sorted by delta then arch."""
    rows = []
    order = {"cnn": 0, "lstm": 1, "cnn_lstm": 2, "conv_lstm": 3}
    for key in sorted(reports, key=lambda k: (k[1], order.get(k[0], 9), k[0])):
        reps = reports[key]
        if not reps:
            raise EmptyInput(f"no reports for {key}")
        meta = reps[0].meta
        batch = f"{meta.get('batch_size', '?')}-{meta.get('f', '?')}"
        train = summarize(train_reports[key]) if train_reports and key in train_reports else None
        rows.append(ComparisonRow(key[0], key[1], batch, summarize(reps), train, len(reps)))
    return ComparisonTable(rows)
