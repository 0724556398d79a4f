"""Seeded simulator of FTS transfers over a capacity-limited link.

Each step of the simulation:

1. files of transfers starting at this step join the queue,
2. queued files become active, up to the concurrency cap,
3. throughput ramps geometrically toward ``min(plateau * capacity, demand)``
   and is cut multiplicatively while a drop event is active,
4. active files drain by ``throughput * interval`` bytes,
5. traffic is throughput plus non-FTS background, clamped to ``[0, capacity]``.

Randomness comes from numpy's PCG64 bit generator seeded with the scenario
seed, so a (scenario, link) pair always yields the same trace.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .trace import LinkSpec, PeriodKind, PeriodLabel, Sample, TrafficTrace

RAMP_FACTOR = 1.3
DEFAULT_SAT_THRESHOLD = 0.9
DEFAULT_MIN_SAT_LEN = 5
MAX_DROP_LEN = 10
DEFAULT_START_TIME = 1_577_836_800.0  # 2020-01-01T00:00:00Z


class InvalidScenario(ValueError):
    pass


@dataclass(frozen=True)
class TransferEvent:
    start_index: int
    n_files: int
    file_size: tuple[float, float]  # (mean bytes, jitter fraction)

    def __post_init__(self):
        object.__setattr__(self, "file_size", tuple(float(v) for v in self.file_size))
        if self.n_files <= 0:
            raise InvalidScenario(f"transfer at {self.start_index}: n_files must be positive")
        if not self.file_size[0] > 0:
            raise InvalidScenario(f"transfer at {self.start_index}: mean file size must be positive")
        if not 0 <= self.file_size[1] <= 1:
            raise InvalidScenario(f"transfer at {self.start_index}: jitter must be in [0, 1]")
        if self.start_index < 0:
            raise InvalidScenario("transfer start_index must be non-negative")


@dataclass(frozen=True)
class DropEvent:
    start_index: int
    depth: float
    recovery: int

    def __post_init__(self):
        if not 0 < self.depth <= 1:
            raise InvalidScenario(f"drop at {self.start_index}: depth must be in (0, 1]")
        if not 1 <= self.recovery <= MAX_DROP_LEN:
            raise InvalidScenario(f"drop at {self.start_index}: recovery must be in [1, {MAX_DROP_LEN}]")
        if self.start_index < 0:
            raise InvalidScenario("drop start_index must be non-negative")

    def factor(self, t: int) -> float:
        """Throughput multiplier at step ``t``; recovers linearly to 1."""
        k = t - self.start_index
        if k < 0 or k >= self.recovery:
            return 1.0
        return 1.0 - self.depth * (1.0 - k / self.recovery)


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: int
    transfers: tuple[TransferEvent, ...] = ()
    drop_events: tuple[DropEvent, ...] = ()
    background_noise: tuple[float, float] = (0.0, 0.0)  # (mean, std) as fractions of capacity
    spike_rate: float = 0.0  # expected spikes per 100 samples
    concurrency_cap: int = 100
    per_file_rate: float = 0.01  # fraction of capacity one active file can carry
    plateau: float = 0.98  # fraction of capacity the optimizer settles at
    start_time: float = DEFAULT_START_TIME

    def __post_init__(self):
        object.__setattr__(self, "transfers", tuple(self.transfers))
        object.__setattr__(self, "drop_events", tuple(self.drop_events))
        object.__setattr__(self, "background_noise", tuple(float(v) for v in self.background_noise))
        if self.duration < 0:
            raise InvalidScenario("duration must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise InvalidScenario("seed must be a 64-bit unsigned integer")
        for name, v in (
            ("background_noise mean", self.background_noise[0]),
            ("background_noise std", self.background_noise[1]),
            ("per_file_rate", self.per_file_rate),
            ("plateau", self.plateau),
        ):
            if not 0 <= v <= 1:
                raise InvalidScenario(f"{name} must be in [0, 1], got {v}")
        if self.spike_rate < 0 or self.spike_rate > 100:
            raise InvalidScenario("spike_rate must be in [0, 100]")
        if self.concurrency_cap < 1:
            raise InvalidScenario("concurrency_cap must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["transfers"] = [asdict(t) for t in self.transfers]
        d["drop_events"] = [asdict(e) for e in self.drop_events]
        for t in d["transfers"]:
            t["file_size"] = list(t["file_size"])
        d["background_noise"] = list(self.background_noise)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            d = dict(d)
            d["transfers"] = tuple(
                TransferEvent(int(t["start_index"]), int(t["n_files"]), tuple(t["file_size"]))
                for t in d.get("transfers", ())
            )
            d["drop_events"] = tuple(
                DropEvent(int(e["start_index"]), float(e["depth"]), int(e["recovery"]))
                for e in d.get("drop_events", ())
            )
            if "background_noise" in d:
                d["background_noise"] = tuple(d["background_noise"])
            return cls(**d)
        except (KeyError, TypeError) as exc:
            raise InvalidScenario(f"bad scenario document: {exc}") from None

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Scenario":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidScenario(f"{path}: {exc}") from None
        if not isinstance(doc, dict):
            raise InvalidScenario(f"{path}: expected a JSON object")
        return cls.from_dict(doc)


@dataclass
class _Transfer:
    queued: float
    active: float = 0.0
    file_size: float = 0.0
    remaining_bytes: float = 0.0  # bytes still to move for the active files


def generate(scenario: Scenario, link: LinkSpec) -> TrafficTrace:
    """Run the simulator and return a labeled trace of ``scenario.duration`` samples."""
    rng = np.random.Generator(np.random.PCG64(scenario.seed))
    cap = link.capacity
    dt = link.sample_interval
    n = scenario.duration

    starts: dict[int, list[TransferEvent]] = {}
    for ev in scenario.transfers:
        starts.setdefault(ev.start_index, []).append(ev)

    # Noise is drawn up front in a fixed order so it does not depend on load.
    noise_mean, noise_std = scenario.background_noise
    background = noise_mean + noise_std * rng.standard_normal(n)
    spikes = np.zeros(n)
    p_spike = scenario.spike_rate / 100.0
    spike_start = rng.random(n) < p_spike
    spike_len = rng.integers(1, 4, size=n)  # 1..3 samples
    spike_amp = rng.uniform(0.5, 1.0, size=n)
    for t in np.flatnonzero(spike_start):
        spikes[t : t + spike_len[t]] = np.maximum(spikes[t : t + spike_len[t]], spike_amp[t])
    background = np.maximum(background, 0.0) + spikes

    active: list[_Transfer] = []
    ramp = 0.0  # optimizer state, before drop cuts
    samples = []
    for t in range(n):
        for ev in starts.get(t, ()):
            mean, jitter = ev.file_size
            size = mean * (1.0 + jitter * rng.uniform(-1.0, 1.0))
            active.append(_Transfer(queued=float(ev.n_files), file_size=size))

        free = scenario.concurrency_cap - sum(tr.active for tr in active)
        for tr in active:
            if free <= 0:
                break
            take = min(tr.queued, free)
            if take > 0:
                tr.queued -= take
                tr.active += take
                tr.remaining_bytes += take * tr.file_size
                free -= take

        n_active = sum(tr.active for tr in active)
        n_queued = sum(tr.queued for tr in active)
        active_bytes = sum(tr.remaining_bytes for tr in active)
        afs = active_bytes / n_active if n_active > 0 else 0.0

        demand = n_active * scenario.per_file_rate * cap
        target = min(scenario.plateau * cap, demand)
        if ramp < target:
            ramp = min(target, max(RAMP_FACTOR * ramp, 0.05 * cap))
        else:
            ramp = target
        cut = 1.0
        for d in scenario.drop_events:
            cut *= d.factor(t)
        # Files freeing a slot mid-interval are replaced from the queue, so the
        # bytes available this step are the active plus the queued ones.
        queued_bytes = sum(tr.queued * tr.file_size for tr in active)
        throughput = min(ramp * cut, (active_bytes + queued_bytes) * 8.0 / dt)

        moved = throughput * dt / 8.0
        from_active = min(moved, active_bytes)
        if active_bytes > 0:
            share = from_active / active_bytes
            for tr in active:
                tr.remaining_bytes -= tr.remaining_bytes * share
                if tr.remaining_bytes <= 1e-6 * tr.file_size:
                    tr.remaining_bytes = 0.0
                    tr.active = 0.0
                else:
                    tr.active = tr.remaining_bytes / tr.file_size
        leftover = moved - from_active
        for tr in active:
            if leftover <= 0:
                break
            take = min(leftover, tr.queued * tr.file_size)
            tr.queued -= take / tr.file_size
            if tr.queued <= 1e-9:
                tr.queued = 0.0
            leftover -= take
        active = [tr for tr in active if tr.active > 0 or tr.queued > 0]

        traffic = min(max(throughput + background[t] * cap, 0.0), cap)
        samples.append(
            Sample(
                timestamp=scenario.start_time + t * dt,
                traffic=float(traffic),
                throughput=float(throughput),
                active_files=float(n_active),
                submitted_files=float(n_queued),
                avg_file_size=float(afs),
            )
        )

    trace = TrafficTrace(link, tuple(samples))
    return trace.with_labels(label_periods(trace))


def _runs(mask: np.ndarray) -> list[tuple[int, int, bool]]:
    """Maximal runs of equal values as (start, end inclusive, value)."""
    runs = []
    n = len(mask)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and mask[j + 1] == mask[i]:
            j += 1
        runs.append((i, j, bool(mask[i])))
        i = j + 1
    return runs


def label_periods(
    trace: TrafficTrace,
    sat_threshold: float = DEFAULT_SAT_THRESHOLD,
    min_sat_len: int = DEFAULT_MIN_SAT_LEN,
) -> list[PeriodLabel]:
    """Classify every sample as normal, saturation, drop or short spike.

    A drop is a below-threshold run of at most ``MAX_DROP_LEN`` samples that
    directly follows a saturation run and ends by crossing back above the
    threshold.  Each saturation run with a drop also yields a psi label
    spanning both.
    """
    if not 0 < sat_threshold < 1:
        raise ValueError("sat_threshold must be in (0, 1)")
    traffic = trace.column("traffic")
    above = traffic >= sat_threshold * trace.link.capacity
    runs = _runs(above)

    labels: list[PeriodLabel] = []
    prev_kind = None
    for k, (s, e, hi) in enumerate(runs):
        length = e - s + 1
        if hi:
            kind = PeriodKind.SATURATION if length >= min_sat_len else PeriodKind.SHORT_SPIKE
        elif (
            prev_kind is PeriodKind.SATURATION
            and length <= MAX_DROP_LEN
            and k + 1 < len(runs)  # re-crosses the threshold
        ):
            kind = PeriodKind.DROP
        else:
            kind = PeriodKind.NORMAL
        labels.append(PeriodLabel(kind, s, e))
        if kind is PeriodKind.DROP:
            labels.append(PeriodLabel(PeriodKind.PSI, labels[-2].start_index, e))
        prev_kind = kind
    return labels


def partition_labels(labels: list[PeriodLabel]) -> list[PeriodLabel]:
    return [lab for lab in labels if lab.kind is not PeriodKind.PSI]


def kind_per_sample(labels: list[PeriodLabel], n: int) -> list[PeriodKind | None]:
    """Partition kind of each sample index (psi spans ignored)."""
    out: list[PeriodKind | None] = [None] * n
    for lab in partition_labels(labels):
        for i in range(lab.start_index, lab.end_index + 1):
            out[i] = lab.kind
    return out


def psi_mask(labels: list[PeriodLabel], n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for lab in labels:
        if lab.kind is PeriodKind.PSI:
            mask[lab.start_index : lab.end_index + 1] = True
    return mask


def paper_like_scenario(
    seed: int,
    duration: int = 2000,
    n_psi: int = 2,
    noise: tuple[float, float] = (0.03, 0.01),
    spike_rate: float = 0.5,
    arrival_rate: float = 0.2,
    per_file_rate: float = 0.05,
) -> Scenario:
    """A scenario mixing background transfers with ``n_psi`` saturating bulk transfers.

    Each bulk transfer is long enough to hold the link at its plateau for a
    while and carries one throughput drop in the middle of the saturation.
    The remaining time holds small transfers that produce the short ramps of
    a normally loaded link.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    transfers = []
    drops = []
    slot = duration // n_psi
    for k in range(n_psi):
        base = k * slot
        start = base + int(rng.integers(slot // 5, slot // 3))
        size = float(rng.uniform(1.5e9, 3e9))
        sat_len = int(rng.integers(80, 140))
        # Files needed to keep the plateau busy for roughly sat_len samples.
        bytes_per_step = 0.98 * 10e9 * 120 / 8
        n_files = int(sat_len * bytes_per_step / size)
        transfers.append(TransferEvent(start, n_files, (size, 0.1)))
        drop_at = start + 15 + int(rng.integers(sat_len // 4, sat_len // 2))
        drops.append(DropEvent(drop_at, float(rng.uniform(0.4, 0.8)), int(rng.integers(3, 9))))

    # Background transfers arrive at random and keep the link partly busy.
    for start in np.flatnonzero(rng.random(duration) < arrival_rate):
        transfers.append(
            TransferEvent(int(start), int(rng.integers(10, 120)), (float(rng.uniform(3e8, 2e9)), 0.2))
        )
    transfers.sort(key=lambda ev: ev.start_index)
    return Scenario(
        seed=seed,
        duration=duration,
        transfers=tuple(transfers),
        drop_events=tuple(drops),
        background_noise=noise,
        spike_rate=spike_rate,
        per_file_rate=per_file_rate,
    )
