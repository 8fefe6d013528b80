"""Vehicle state, the five-status lifecycle, and capacity accounting.

Statuses move along idle -> dispatching -> dispatched -> matched -> serving
-> idle; a partially filled serving vehicle that accepts another request
steps back to matched to route to the new pickup. Any other transition is a
bug and raises.

A vehicle's work is its manifest. Entries start as reserved pickups and
become onboard at the pickup zone; seats and trunk slots are reserved at
assignment time so matching can never overbook. Stops are ordered by a
nearest-next greedy: all pending pickups first, then deliveries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .demand import GOODS, PASSENGER
from .geo import GridWorld, ZoneId, manhattan, step_toward

IDLE = "idle"
DISPATCHING = "dispatching"
DISPATCHED = "dispatched"
MATCHED = "matched"
SERVING = "serving"

VEHICLE_STATUSES = (IDLE, DISPATCHING, DISPATCHED, MATCHED, SERVING)

ALLOWED_TRANSITIONS = {
    (IDLE, DISPATCHING),
    (DISPATCHING, DISPATCHED),
    (DISPATCHED, MATCHED),
    (MATCHED, SERVING),
    (SERVING, IDLE),
    (SERVING, MATCHED),
}

DIRECT = "direct"
HOP_LEG = "hop_leg"


class VehicleStateError(RuntimeError):
    """Internal consistency violation in a vehicle's lifecycle."""


@dataclass
class ManifestEntry:
    request_id: int
    kind: str  # passenger | goods
    origin: ZoneId
    destination: ZoneId
    leg_kind: str = DIRECT
    onboard: bool = False
    pickup_tick: int | None = None
    hops_completed: int = 0


class PickupEvent(NamedTuple):
    request_id: int
    vehicle_id: int
    zone: ZoneId
    tick: int


class DropEvent(NamedTuple):
    request_id: int
    vehicle_id: int
    zone: ZoneId
    tick: int
    leg_kind: str


@dataclass
class VehicleState:
    id: int
    location: ZoneId
    status: str = IDLE
    seats_total: int = 4
    trunk_total: int = 5
    manifest: list = field(default_factory=list)
    dispatch_target: ZoneId | None = None
    last_decision_tick: int | None = None

    # ---- capacity -------------------------------------------------------

    @property
    def seats_committed(self) -> int:
        return sum(1 for e in self.manifest if e.kind == PASSENGER)

    @property
    def trunk_committed(self) -> int:
        return sum(1 for e in self.manifest if e.kind == GOODS)

    @property
    def seats_free(self) -> int:
        return self.seats_total - self.seats_committed

    @property
    def trunk_free(self) -> int:
        return self.trunk_total - self.trunk_committed

    @property
    def passengers_onboard(self) -> int:
        return sum(1 for e in self.manifest if e.kind == PASSENGER and e.onboard)

    @property
    def packages_onboard(self) -> int:
        return sum(1 for e in self.manifest if e.kind == GOODS and e.onboard)

    @property
    def active(self) -> bool:
        return self.status != IDLE

    # ---- lifecycle ------------------------------------------------------

    def set_status(self, new: str):
        if (self.status, new) not in ALLOWED_TRANSITIONS:
            raise VehicleStateError(f"vehicle {self.id}: illegal transition {self.status} -> {new}")
        self.status = new

    def add_entry(self, entry: ManifestEntry):
        if entry.kind == PASSENGER and self.seats_free <= 0:
            raise VehicleStateError(f"vehicle {self.id}: no seat for request {entry.request_id}")
        if entry.kind == GOODS and self.trunk_free <= 0:
            raise VehicleStateError(f"vehicle {self.id}: no trunk slot for request {entry.request_id}")
        self.manifest.append(entry)

    # ---- routing --------------------------------------------------------

    def planned_stops(self) -> list:
        """Greedy stop order from the current location: pickups, then drops.

        Returns [(zone, cumulative_distance)], merging co-located events.
        """
        pos = self.location
        cum = 0
        pickups = {e.request_id: e for e in self.manifest if not e.onboard}
        drops = {e.request_id: e for e in self.manifest if e.onboard}
        stops = []
        while pickups or drops:
            if pickups:
                zone = min((manhattan(pos, e.origin), e.origin, rid) for rid, e in pickups.items())[1]
            else:
                zone = min((manhattan(pos, e.destination), e.destination, rid) for rid, e in drops.items())[1]
            cum += manhattan(pos, zone)
            pos = zone
            stops.append((zone, cum))
            # everything co-located resolves at this stop
            for rid in [rid for rid, e in pickups.items() if e.origin == zone]:
                drops[rid] = pickups.pop(rid)
            for rid in [rid for rid, e in drops.items() if e.destination == zone]:
                drops.pop(rid)
        return stops

    def next_stop(self) -> ZoneId | None:
        stops = self.planned_stops()
        return stops[0][0] if stops else None

    def remaining_etas(self, speed: int) -> dict:
        """Estimated ticks until each onboard order's drop zone is reached."""
        etas = {}
        for zone, cum in self.planned_stops():
            for e in self.manifest:
                if e.onboard and e.destination == zone and e.request_id not in etas:
                    etas[e.request_id] = math.ceil(cum / speed)
        return etas

    def route_eta(self, speed: int) -> int:
        """Ticks to finish the whole manifest (last planned stop)."""
        stops = self.planned_stops()
        return math.ceil(stops[-1][1] / speed) if stops else 0


def availability(v: VehicleState) -> tuple:
    """(seats_free, trunk_free) after subtracting committed work.

    A vehicle is available for new work while either count is positive.
    """
    return (v.seats_free, v.trunk_free)


def is_available(v: VehicleState) -> bool:
    return v.seats_free > 0 or v.trunk_free > 0


def process_arrivals(v: VehicleState, tick: int) -> list:
    """Resolve everything co-located with the vehicle: dispatch arrival,
    drops, then pickups. Returns Pickup/Drop events for the engine."""
    events = []
    if v.status == DISPATCHING and v.location == v.dispatch_target:
        v.dispatch_target = None
        v.set_status(DISPATCHED)

    if v.status in (MATCHED, SERVING):
        for e in [e for e in v.manifest if e.onboard and e.destination == v.location]:
            v.manifest.remove(e)
            events.append(DropEvent(e.request_id, v.id, v.location, tick, e.leg_kind))
        picked = False
        for e in v.manifest:
            if not e.onboard and e.origin == v.location:
                e.onboard = True
                e.pickup_tick = tick
                picked = True
                events.append(PickupEvent(e.request_id, v.id, v.location, tick))
        if picked and v.status == MATCHED:
            v.set_status(SERVING)
        if v.status == SERVING and not v.manifest:
            v.set_status(IDLE)
    return events


def move(v: VehicleState, grid: GridWorld) -> int:
    """Advance up to vehicle_speed lattice steps toward the current objective.

    Dispatching vehicles head for their dispatch target; matched/serving
    vehicles head for their next planned stop; idle and dispatched vehicles
    hold position. Returns the number of steps moved.
    """
    if v.status == DISPATCHING:
        target = v.dispatch_target
        if target is None:
            raise VehicleStateError(f"vehicle {v.id}: dispatching without a target")
    elif v.status in (MATCHED, SERVING):
        target = v.next_stop()
        if target is None:
            raise VehicleStateError(f"vehicle {v.id}: {v.status} with an empty stop plan")
    else:
        return 0
    moved = 0
    while moved < grid.vehicle_speed and v.location != target:
        v.location = step_toward(v.location, target)
        moved += 1
    return moved


def advance(v: VehicleState, grid: GridWorld, tick: int) -> tuple:
    """One self-contained vehicle tick: resolve arrivals, then move.

    Returns (events, steps_moved). The engine splits these two halves across
    its per-tick phases; this composition is the standalone equivalent.
    """
    events = process_arrivals(v, tick)
    moved = move(v, grid)
    return events, moved


@dataclass
class FleetSnapshot:
    """Current and projected per-zone vehicle availability."""

    available: np.ndarray  # (height, width), vehicles with free capacity now
    projected: np.ndarray  # (horizon + 1, height, width), busy vehicles by finish tick

    def available_by(self, step: int) -> np.ndarray:
        """Vehicles free now plus those projected to free up within ``step`` ticks."""
        return self.available + self.projected[1 : step + 1].sum(axis=0)


def project_supply(vehicles: Sequence[VehicleState], grid: GridWorld, horizon: int) -> FleetSnapshot:
    """Count available vehicles per zone and project busy ones to their
    final stop at now + remaining route ETA (when within the horizon)."""
    available = np.zeros((grid.height, grid.width))
    projected = np.zeros((horizon + 1, grid.height, grid.width))
    for v in vehicles:
        if is_available(v):
            available[v.location.row, v.location.col] += 1
            continue
        stops = v.planned_stops()
        if not stops:
            continue
        final_zone, cum = stops[-1]
        eta = math.ceil(cum / grid.vehicle_speed)
        if eta <= horizon:
            projected[eta, final_zone.row, final_zone.col] += 1
    return FleetSnapshot(available=available, projected=projected)
