"""Greedy request-to-vehicle assignment, nearest first.

Candidate (request, vehicle) pairs are those whose pickup ETA fits inside
the reject radius and whose slot type (seat for passengers, trunk for goods)
has free capacity. Pairs are consumed in ascending ETA order; when several
vehicles tie at a request's best ETA, one of them is drawn uniformly at
random. Capacity is decremented as assignments accrue, so a single call can
never overbook a vehicle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .demand import GOODS, PASSENGER, Request
from .fleet import VehicleState
from .geo import GridWorld

SEAT = "seat"
TRUNK = "trunk"


@dataclass(frozen=True)
class Assignment:
    request_id: int
    vehicle_id: int
    slot: str  # seat | trunk
    eta_ticks: int


def reject_radius_ticks(grid: GridWorld, reject_radius: float) -> int:
    """The pickup-ETA bound implied by a reject radius in zone-units."""
    return math.ceil(reject_radius / grid.vehicle_speed)


def match(
    requests: Sequence[Request],
    vehicles: Sequence[VehicleState],
    grid: GridWorld,
    reject_radius: float,
    rng: np.random.Generator,
) -> list[Assignment]:
    """Assign queued requests to vehicles, minimizing pickup ETA greedily.

    Unassignable requests are simply left out; expiring them is the engine's
    job. Output order follows assignment order and is deterministic for a
    fixed rng state.
    """
    bound = reject_radius_ticks(grid, reject_radius)
    seats_free = {v.id: v.seats_free for v in vehicles}
    trunk_free = {v.id: v.trunk_free for v in vehicles}
    by_id = {v.id: v for v in vehicles}

    candidates = []  # (eta, request_id, vehicle_id)
    for r in requests:
        free = seats_free if r.kind == PASSENGER else trunk_free
        for v in vehicles:
            if free[v.id] <= 0:
                continue
            eta = grid.eta(v.location, r.origin).ticks
            if eta <= bound:
                candidates.append((eta, r.id, v.id))
    candidates.sort()

    req_by_id = {r.id: r for r in requests}
    assigned: dict[int, Assignment] = {}
    out: list[Assignment] = []
    i = 0
    while i < len(candidates):
        eta, rid, _ = candidates[i]
        # gather this request's vehicles tied at this ETA
        j = i
        tied = []
        while j < len(candidates) and candidates[j][0] == eta and candidates[j][1] == rid:
            tied.append(candidates[j][2])
            j += 1
        i = j
        if rid in assigned:
            continue
        kind = req_by_id[rid].kind
        free = seats_free if kind == PASSENGER else trunk_free
        tied = [vid for vid in tied if free[vid] > 0]
        if not tied:
            continue
        vid = tied[0] if len(tied) == 1 else tied[int(rng.integers(len(tied)))]
        free[vid] -= 1
        a = Assignment(rid, vid, SEAT if kind == PASSENGER else TRUNK, eta)
        assigned[rid] = a
        out.append(a)
    return out
