"""Poisson incident models: fitting from history and chain sampling.

Rates are events/hour per cell. Spike windows multiply the rates of the
cells they target inside [start, end); sampling treats the resulting rate
as piecewise constant, which is exact for step rates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import datetime

import numpy as np

from .units import MS_PER_HOUR, MS_PER_MINUTE, seconds_to_ms


class EmptyHistory(Exception):
    """No incident records and no explicit rates supplied."""


@dataclass(frozen=True)
class SpikeWindow:
    cells: frozenset[int]
    start_ms: int
    end_ms: int
    multiplier: float

    def __post_init__(self):
        if self.start_ms >= self.end_ms:
            raise ValueError("spike window must have start < end")
        if self.multiplier < 1:
            raise ValueError("spike multiplier must be >= 1")

    def active(self, cell: int, t_ms: int) -> bool:
        return cell in self.cells and self.start_ms <= t_ms < self.end_ms


@dataclass(frozen=True)
class ServiceLaw:
    """Service-duration law: deterministic by default, exponential optional."""

    kind: str = "fixed"  # fixed | exponential
    mean_ms: int = 20 * MS_PER_MINUTE

    def __post_init__(self):
        if self.kind not in ("fixed", "exponential"):
            raise ValueError(f"unknown service law {self.kind!r}")
        if self.mean_ms <= 0:
            raise ValueError("mean service duration must be positive")

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "fixed":
            return self.mean_ms
        return max(1, int(round(rng.exponential(self.mean_ms))))


@dataclass(frozen=True)
class Incident:
    id: int
    cell: int
    report_time_ms: int
    service_duration_ms: int


@dataclass
class IncidentChain:
    incidents: list[Incident]
    horizon_ms: int

    def __len__(self):
        return len(self.incidents)


@dataclass
class DemandModel:
    rates: np.ndarray  # events/hour, indexed by cell id
    spikes: list[SpikeWindow] = field(default_factory=list)
    service: ServiceLaw = ServiceLaw()

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if (self.rates < 0).any():
            raise ValueError("cell rates must be non-negative")

    def rate_at(self, cell: int, t_ms: int) -> float:
        """Effective rate of one cell at a point in time (events/hour)."""
        rate = float(self.rates[cell])
        for w in self.spikes:
            if w.active(cell, t_ms):
                rate *= w.multiplier
        return rate

    def restrict(self, cells) -> "DemandModel":
        """Zero out every cell outside the given set; used per region."""
        keep = set(cells)
        rates = np.where([c in keep for c in range(len(self.rates))], self.rates, 0.0)
        spikes = []
        for w in self.spikes:
            inter = w.cells & keep
            if inter:
                spikes.append(replace(w, cells=frozenset(inter)))
        return DemandModel(rates=rates, spikes=spikes, service=self.service)


def fit_rates(history, horizon_hours: float, num_cells: int,
              spikes=(), service: ServiceLaw = ServiceLaw()) -> DemandModel:
    """Empirical-mean Poisson fit: rate = count(cell) / horizon_hours.

    history: iterable of (cell_id, timestamp) pairs; timestamps are only
    used to validate that records fall inside the horizon.
    """
    if horizon_hours <= 0:
        raise ValueError("horizon_hours must be positive")
    counts = np.zeros(num_cells)
    n = 0
    for cell, _t in history:
        counts[int(cell)] += 1
        n += 1
    if n == 0:
        raise EmptyHistory("no incident records; supply rates directly")
    return DemandModel(rates=counts / horizon_hours, spikes=list(spikes), service=service)


def _segments(model: DemandModel, cell: int, start_ms: int, end_ms: int):
    """Constant-rate segments of one cell over [start, end)."""
    cuts = {start_ms, end_ms}
    for w in model.spikes:
        if cell in w.cells:
            cuts.add(min(max(w.start_ms, start_ms), end_ms))
            cuts.add(min(max(w.end_ms, start_ms), end_ms))
    edges = sorted(cuts)
    for a, b in zip(edges, edges[1:]):
        if b > a:
            yield a, b, model.rate_at(cell, a)


def sample_chain(model: DemandModel, horizon_ms: int, seed,
                 start_ms: int = 0) -> IncidentChain:
    """Sample one incident chain over [start_ms, start_ms + horizon_ms).

    Each cell is an independent (piecewise-constant) Poisson process:
    per segment the event count is Poisson(rate * duration) and the event
    times are uniform. Identical (model, horizon, seed) inputs reproduce
    the chain exactly. Coincident timestamps are pushed apart by 1 ms,
    preserving generation order.
    """
    if horizon_ms <= 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    end_ms = start_ms + horizon_ms
    raw: list[tuple[int, int]] = []  # (time_ms, cell)
    for cell in range(len(model.rates)):
        if model.rates[cell] <= 0:
            continue
        for a, b, rate in _segments(model, cell, start_ms, end_ms):
            mean = rate * (b - a) / MS_PER_HOUR
            n = rng.poisson(mean)
            if n == 0:
                continue
            times = np.sort(rng.integers(a, b, size=n))
            raw.extend((int(t), cell) for t in times)

    raw.sort(key=lambda tc: tc[0])
    incidents = []
    prev = -1
    for i, (t, cell) in enumerate(raw):
        if t <= prev:
            t = prev + 1
        prev = t
        incidents.append(Incident(id=i, cell=cell, report_time_ms=t,
                                  service_duration_ms=model.service.sample(rng)))
    return IncidentChain(incidents=incidents, horizon_ms=horizon_ms)


def region_rates_at(model: DemandModel, partition, t_ms: int) -> dict[int, float]:
    """Per-region effective arrival rates (events/hour) at time t."""
    rates = {r: 0.0 for r in partition.regions()}
    for cell, region in partition.cell_to_region.items():
        rates[region] += model.rate_at(cell, t_ms)
    return rates


def load_history(path, width: int, height: int):
    """Read incident_id,timestamp_iso8601,gx,gy rows into (cell, ms) pairs.

    Timestamps are measured from the earliest record.
    """
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"incident_id", "timestamp_iso8601", "gx", "gy"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"history file {path}: expected columns {sorted(required)}")
        for row in reader:
            ts = datetime.fromisoformat(row["timestamp_iso8601"])
            gx, gy = int(row["gx"]), int(row["gy"])
            if not (0 <= gx < width and 0 <= gy < height):
                raise ValueError(f"history record {row['incident_id']}: cell outside grid")
            rows.append((gy * width + gx, ts))
    if not rows:
        return []
    t0 = min(ts for _c, ts in rows)
    return [(c, seconds_to_ms((ts - t0).total_seconds())) for c, ts in rows]


def write_chain(path, chain: IncidentChain, cells) -> None:
    """Write a sampled chain: incident_id,report_time_s,gx,gy,service_duration_s."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["incident_id", "report_time_s", "gx", "gy", "service_duration_s"])
        for inc in chain.incidents:
            cell = cells[inc.cell]
            writer.writerow([inc.id, f"{inc.report_time_ms / 1000:.3f}",
                             cell.gx, cell.gy, f"{inc.service_duration_ms / 1000:.3f}"])


def read_chain(path, width: int, height: int, horizon_ms: int) -> IncidentChain:
    """Read a chain written by :func:`write_chain`."""
    incidents = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            cell = int(row["gy"]) * width + int(row["gx"])
            incidents.append(Incident(
                id=int(row["incident_id"]), cell=cell,
                report_time_ms=seconds_to_ms(float(row["report_time_s"])),
                service_duration_ms=seconds_to_ms(float(row["service_duration_s"]))))
    incidents.sort(key=lambda i: i.report_time_ms)
    return IncidentChain(incidents=incidents, horizon_ms=horizon_ms)
