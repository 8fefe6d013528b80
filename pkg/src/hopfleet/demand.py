"""Passenger and goods request workload: generation, ingestion, and forecasting.

Request counts per source follow a Poisson law sampled by CDF inversion from a
seeded uniform stream, so identical seeds give bit-identical request streams.
The demand forecaster is a trailing tick-of-day historical average; it sits
behind a plain ``forecast(now, horizon)`` call so other predictors can be
swapped in.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geo import GridWorld, ZoneId, manhattan

PASSENGER = "passenger"
GOODS = "goods"

QUEUED = "queued"
ASSIGNED = "assigned"
PICKED_UP = "picked_up"
DELIVERED = "delivered"
REJECTED = "rejected"

REQUEST_TRANSITIONS = {
    QUEUED: {ASSIGNED, REJECTED},
    ASSIGNED: {PICKED_UP},
    PICKED_UP: {DELIVERED},
    DELIVERED: set(),
    REJECTED: set(),
}

DEFAULT_URGENCY = {PASSENGER: 1.0, GOODS: 0.5}

TRIP_RECORD_HEADER = ["pickup_tick", "kind", "origin_row", "origin_col", "dest_row", "dest_col"]


class TripRecordError(ValueError):
    """Malformed or invalid row in a trip-record CSV."""


@dataclass
class Request:
    """One pickup demand: a passenger seat or a goods trunk slot.

    Hop-trip legs created mid-journey reference the original goods request
    through ``parent_id``; only original requests (parent_id None) count in
    service metrics.
    """

    id: int
    kind: str
    origin: ZoneId
    destination: ZoneId
    created_tick: int
    urgency: float
    status: str = QUEUED
    pickup_tick: int | None = None
    delivery_tick: int | None = None
    hops_completed: int = 0
    parent_id: int | None = None

    def __post_init__(self):
        if self.kind not in (PASSENGER, GOODS):
            raise ValueError(f"unknown request kind {self.kind!r}")
        if self.origin == self.destination:
            raise ValueError(f"request {self.id}: origin equals destination")
        if not (0.0 < self.urgency <= 1.0):
            raise ValueError(f"request {self.id}: urgency must be in (0, 1]")
        if self.kind == PASSENGER and self.hops_completed:
            raise ValueError("passengers never hop")

    def set_status(self, new: str, tick: int | None = None):
        if new not in REQUEST_TRANSITIONS[self.status]:
            raise ValueError(f"request {self.id}: illegal transition {self.status} -> {new}")
        self.status = new
        if new == PICKED_UP:
            self.pickup_tick = tick
        elif new == DELIVERED:
            self.delivery_tick = tick


@dataclass(frozen=True)
class ServiceLocation:
    zone: ZoneId
    kind: str  # postal | meal | supermarket
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be >= 0")


@dataclass
class DemandForecast:
    """Expected request counts per zone for ticks now..now+horizon."""

    start_tick: int
    counts: np.ndarray  # shape (horizon + 1, height, width)

    @property
    def horizon(self) -> int:
        return self.counts.shape[0] - 1

    def at(self, step: int) -> np.ndarray:
        return self.counts[step]

    def to_json(self) -> str:
        return json.dumps({"start_tick": self.start_tick, "counts": self.counts.tolist()})


def poisson_pmf(x: int, lam: float) -> float:
    """P(X = x) for X ~ Poisson(lam): e^-lam * lam^x / x!."""
    if x < 0 or int(x) != x:
        raise ValueError("x must be a nonnegative integer")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    x = int(x)
    if lam == 0:
        return 1.0 if x == 0 else 0.0
    return math.exp(x * math.log(lam) - lam - math.lgamma(x + 1))


def poisson_sample(lam: float, rng: np.random.Generator, max_count: int = 10_000) -> int:
    """Draw one Poisson count by inverting the CDF on a uniform draw."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        return 0
    u = rng.random()
    k = 0
    p = math.exp(-lam)
    cum = p
    while u > cum and k < max_count:
        k += 1
        p *= lam / k
        cum += p
    return k


@dataclass
class TripDistribution:
    """Passenger destination model: uniform or neighborhood trips, with
    optional hot zones.

    With probability ``hot_weight`` the destination is drawn uniformly from
    ``hot_zones`` (skipping the origin), otherwise uniformly over the grid,
    or over the ``local_radius`` neighborhood when one is set. Hot zones
    outside the neighborhood are ignored for that origin.
    """

    hot_zones: tuple = ()
    hot_weight: float = 0.0
    local_radius: int = 0  # 0 means city-wide trips

    def __post_init__(self):
        if not (0.0 <= self.hot_weight <= 1.0):
            raise ValueError("hot_weight must be in [0, 1]")
        if self.local_radius < 0:
            raise ValueError("local_radius must be >= 0")
        self.hot_zones = tuple(ZoneId(*z) for z in self.hot_zones)

    def sample_destination(self, grid: GridWorld, origin: ZoneId, rng: np.random.Generator) -> ZoneId:
        hot = [z for z in self.hot_zones if z != origin]
        if self.local_radius:
            hot = [z for z in hot if manhattan(origin, z) <= self.local_radius]
        if hot and rng.random() < self.hot_weight:
            return hot[int(rng.integers(len(hot)))]
        if self.local_radius:
            local = grid.zones_within(origin, self.local_radius)
            return local[int(rng.integers(len(local)))]
        while True:
            z = ZoneId(int(rng.integers(grid.height)), int(rng.integers(grid.width)))
            if z != origin:
                return z


def generate_tick_requests(
    grid: GridWorld,
    locations: Sequence[ServiceLocation],
    passenger_rates: Mapping,
    tick: int,
    rng: np.random.Generator,
    goods_radius: int,
    id_start: int = 0,
    trip_distribution: TripDistribution | None = None,
    urgency: Mapping | None = None,
    goods_dest_hot: Sequence = (),
    goods_dest_hot_weight: float = 0.0,
) -> list[Request]:
    """Draw one tick of demand. Goods destinations stay within goods_radius;
    optionally a share of them lands next to busy zones inside that radius."""
    if goods_radius <= 0:
        raise ValueError("goods_radius must be > 0")
    trip_distribution = trip_distribution or TripDistribution()
    urgency = dict(DEFAULT_URGENCY, **(urgency or {}))
    goods_dest_hot = [ZoneId(*z) for z in goods_dest_hot]
    out: list[Request] = []
    next_id = id_start

    for zone, lam in sorted(passenger_rates.items()):
        origin = grid.require(zone)
        for _ in range(poisson_sample(lam, rng)):
            dest = trip_distribution.sample_destination(grid, origin, rng)
            out.append(Request(next_id, PASSENGER, origin, dest, tick, urgency[PASSENGER]))
            next_id += 1

    for loc in locations:
        origin = grid.require(loc.zone)
        candidates = grid.zones_within(origin, goods_radius)
        if not candidates:
            continue
        hot_nearby = [z for z in goods_dest_hot
                      if z != origin and manhattan(origin, z) <= goods_radius]
        for _ in range(poisson_sample(loc.rate, rng)):
            if hot_nearby and rng.random() < goods_dest_hot_weight:
                around = hot_nearby[int(rng.integers(len(hot_nearby)))]
                near = [z for z in grid.zones_within(around, 2) + [around]
                        if z != origin and manhattan(origin, z) <= goods_radius]
                dest = near[int(rng.integers(len(near)))] if near else \
                    candidates[int(rng.integers(len(candidates)))]
            else:
                dest = candidates[int(rng.integers(len(candidates)))]
            out.append(Request(next_id, GOODS, origin, dest, tick, urgency[GOODS]))
            next_id += 1
    return out


def ingest_trip_records(path, grid: GridWorld, id_start: int = 0, urgency: Mapping | None = None) -> list[Request]:
    """Load requests from a CSV with header pickup_tick,kind,origin_row,origin_col,dest_row,dest_col."""
    urgency = dict(DEFAULT_URGENCY, **(urgency or {}))
    out: list[Request] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRIP_RECORD_HEADER:
            raise TripRecordError(f"{path}: expected header {','.join(TRIP_RECORD_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise TripRecordError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                tick = int(row[0])
                kind = row[1].strip()
                origin = ZoneId(int(row[2]), int(row[3]))
                dest = ZoneId(int(row[4]), int(row[5]))
            except ValueError as exc:
                raise TripRecordError(f"{path}:{lineno}: {exc}") from exc
            if kind not in (PASSENGER, GOODS):
                raise TripRecordError(f"{path}:{lineno}: unknown kind {kind!r}")
            if not grid.contains(origin) or not grid.contains(dest):
                raise TripRecordError(f"{path}:{lineno}: zone outside grid")
            if origin == dest:
                raise TripRecordError(f"{path}:{lineno}: origin equals destination")
            out.append(Request(id_start + len(out), kind, origin, dest, tick, urgency[kind]))
    return out


def write_trip_records(path, requests: Iterable[Request]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIP_RECORD_HEADER)
        for r in requests:
            writer.writerow([r.created_tick, r.kind, r.origin.row, r.origin.col, r.destination.row, r.destination.col])


class HistoricalAverageForecaster:
    """Trailing tick-of-day average of per-zone request counts.

    For each horizon step the forecast is the mean count observed in past
    ticks sharing the same tick-of-day; when a tick-of-day has no history yet
    the overall per-zone mean is used, and with no history at all the
    forecast is zero.
    """

    def __init__(self, grid: GridWorld, ticks_per_day: int = 1440):
        if ticks_per_day < 1:
            raise ValueError("ticks_per_day must be >= 1")
        self.grid = grid
        self.ticks_per_day = ticks_per_day
        shape = (grid.height, grid.width)
        self._tod_sum = {}
        self._tod_n = {}
        self._total = np.zeros(shape)
        self._n = 0

    def record(self, tick: int, counts: np.ndarray):
        tod = tick % self.ticks_per_day
        if tod not in self._tod_sum:
            self._tod_sum[tod] = np.zeros_like(self._total)
            self._tod_n[tod] = 0
        self._tod_sum[tod] += counts
        self._tod_n[tod] += 1
        self._total += counts
        self._n += 1

    def record_requests(self, tick: int, requests: Sequence[Request]):
        counts = np.zeros((self.grid.height, self.grid.width))
        for r in requests:
            counts[r.origin.row, r.origin.col] += 1
        self.record(tick, counts)

    def forecast(self, now: int, horizon: int) -> DemandForecast:
        steps = []
        overall = self._total / self._n if self._n else np.zeros_like(self._total)
        for k in range(horizon + 1):
            tod = (now + k) % self.ticks_per_day
            if self._tod_n.get(tod):
                steps.append(self._tod_sum[tod] / self._tod_n[tod])
            else:
                steps.append(overall.copy())
        return DemandForecast(start_tick=now, counts=np.stack(steps))


def forecast_demand(history: Mapping[int, np.ndarray], now: int, horizon: int,
                    grid: GridWorld, ticks_per_day: int = 1440) -> DemandForecast:
    """Forecast from a {tick: per-zone count array} history mapping."""
    fc = HistoricalAverageForecaster(grid, ticks_per_day)
    for tick in sorted(history):
        fc.record(tick, np.asarray(history[tick], dtype=float))
    return fc.forecast(now, horizon)
