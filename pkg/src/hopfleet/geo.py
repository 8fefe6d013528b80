"""Zone lattice, Manhattan routing, constant-speed ETA, and hop-zone designation.

All locations in the simulator are zones of a rectangular grid. Distances are
Manhattan in zone-units; meters are zone-units times ``zone_edge_m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple


class InvalidZoneError(ValueError):
    """A zone lies outside the configured grid."""


class ZoneId(NamedTuple):
    row: int
    col: int


class TravelEstimate(NamedTuple):
    ticks: int
    distance: int


def manhattan(a: ZoneId, b: ZoneId) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def step_toward(a: ZoneId, b: ZoneId) -> ZoneId:
    """One lattice step from ``a`` toward ``b``, row coordinate first."""
    if a[0] != b[0]:
        return ZoneId(a[0] + (1 if b[0] > a[0] else -1), a[1])
    if a[1] != b[1]:
        return ZoneId(a[0], a[1] + (1 if b[1] > a[1] else -1))
    return ZoneId(*a)


@dataclass
class GridWorld:
    """Rectangular city grid with a designated set of hop-zones.

    ``vehicle_speed`` is in zones per tick. Immutable in spirit: only
    ``hop_zones`` is reassigned, by :func:`designate_hop_zones`.
    """

    width: int
    height: int
    zone_edge_m: float = 150.0
    vehicle_speed: int = 1
    hop_zones: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        if self.vehicle_speed < 1:
            raise ValueError("vehicle_speed must be a positive integer")
        self.hop_zones = frozenset(ZoneId(*z) for z in self.hop_zones)
        for z in self.hop_zones:
            self.require(z)

    @property
    def n_zones(self) -> int:
        return self.width * self.height

    def contains(self, zone) -> bool:
        row, col = zone
        return 0 <= row < self.height and 0 <= col < self.width

    def require(self, zone) -> ZoneId:
        if not self.contains(zone):
            raise InvalidZoneError(f"zone {tuple(zone)} outside {self.height}x{self.width} grid")
        return ZoneId(*zone)

    def clamp(self, row: int, col: int) -> ZoneId:
        return ZoneId(min(max(row, 0), self.height - 1), min(max(col, 0), self.width - 1))

    def all_zones(self) -> Iterator[ZoneId]:
        for row in range(self.height):
            for col in range(self.width):
                yield ZoneId(row, col)

    def zone_index(self, zone: ZoneId) -> int:
        return zone[0] * self.width + zone[1]

    def distance(self, a, b) -> int:
        """Manhattan distance in zone-units; a metric, zero iff a == b."""
        return manhattan(self.require(a), self.require(b))

    def eta(self, a, b) -> TravelEstimate:
        """Constant-speed travel estimate: ticks = ceil(distance / speed)."""
        d = self.distance(a, b)
        return TravelEstimate(math.ceil(d / self.vehicle_speed), d)

    def zones_within(self, center, radius: int) -> list[ZoneId]:
        """All zones at distance 1..radius of ``center``, lexicographic order."""
        center = self.require(center)
        out = []
        for row in range(max(0, center.row - radius), min(self.height, center.row + radius + 1)):
            rem = radius - abs(row - center.row)
            for col in range(max(0, center.col - rem), min(self.width, center.col + rem + 1)):
                if (row, col) != center:
                    out.append(ZoneId(row, col))
        return out

    def nearest_hop_zone(self, origin, exclude: Iterable = ()) -> ZoneId | None:
        """Closest hop-zone to ``origin``; ties broken by (row, col). None if no candidate."""
        origin = self.require(origin)
        excluded = {ZoneId(*z) for z in exclude}
        best = None
        for hz in sorted(self.hop_zones):
            if hz in excluded:
                continue
            d = manhattan(origin, hz)
            if best is None or d < best[0]:
                best = (d, hz)
        return best[1] if best else None


def designate_hop_zones(
    grid: GridWorld,
    stride: int,
    pickup_counts: Mapping,
    min_pickups: int,
    offset: int = 0,
) -> frozenset:
    """Pick hop-zones on a stride lattice, keeping only busy-enough zones.

    Candidates are zones with row % stride == offset and col % stride == offset;
    a candidate survives when its pickup count is at least ``min_pickups``.
    The result is stored on ``grid.hop_zones`` and returned.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if min_pickups < 0:
        raise ValueError("min_pickups must be >= 0")
    counts = {ZoneId(*z): c for z, c in pickup_counts.items()}
    chosen = []
    for row in range(offset % stride, grid.height, stride):
        for col in range(offset % stride, grid.width, stride):
            z = ZoneId(row, col)
            if counts.get(z, 0) >= min_pickups:
                chosen.append(z)
    grid.hop_zones = frozenset(chosen)
    return grid.hop_zones
