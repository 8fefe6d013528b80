"""Service metrics computed post-hoc from an episode log.

All figures count primary requests only: relay legs created at hop-zones are
bookkeeping and are excluded from acceptance and wait accounting. Fuel is
charged per non-idle vehicle-hour at a flat gallons-per-hour burn rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

from .geo import manhattan

COST_PER_GALLON = 2.0
GALLONS_PER_DRIVING_HOUR = 0.5


def _primary_requests(log) -> dict:
    """id -> record for requests that customers actually submitted."""
    out = {}
    for e in log.by_kind("request"):
        if e.get("parent") is None:
            out[e["request"]] = {
                "kind": e["req_kind"],
                "origin": tuple(e["origin"]),
                "destination": tuple(e["destination"]),
                "created": e["tick"],
                "picked": None,
                "delivered": None,
                "rejected": False,
            }
    for e in log.by_kind("pickup"):
        if e.get("parent") is None and e["request"] in out:
            out[e["request"]]["picked"] = e["tick"]
    for e in log.by_kind("deliver"):
        if e["request"] in out:
            out[e["request"]]["delivered"] = e["tick"]
    for e in log.by_kind("reject"):
        if e["request"] in out:
            out[e["request"]]["rejected"] = True
    return out


def accept_rate(log, kind: str | None = None) -> float | None:
    """Picked-up fraction of generated requests; None when none were generated."""
    reqs = [r for r in _primary_requests(log).values() if kind is None or r["kind"] == kind]
    if not reqs:
        return None
    return sum(1 for r in reqs if r["picked"] is not None) / len(reqs)


def vehicle_hours_active(log) -> float:
    ticks_active = sum(e["active"] for e in log.by_kind("tick_stats"))
    return ticks_active * log.dt_minutes / 60.0


def fuel_cost_per_delivery(log, cost_per_gallon: float = COST_PER_GALLON,
                           gallons_per_hour: float = GALLONS_PER_DRIVING_HOUR) -> float | None:
    """Dollars of fuel per delivered request; None when nothing was delivered."""
    delivered = sum(1 for r in _primary_requests(log).values() if r["delivered"] is not None)
    if delivered == 0:
        return None
    return vehicle_hours_active(log) * gallons_per_hour * cost_per_gallon / delivered


def active_vehicle_ratio(log) -> float | None:
    stats = log.by_kind("tick_stats")
    if not stats:
        return None
    return sum(e["active"] / log.n_vehicles for e in stats) / len(stats)


def mean_wait(log) -> float | None:
    """Mean ticks from request creation to pickup, picked-up requests only."""
    waits = [r["picked"] - r["created"] for r in _primary_requests(log).values()
             if r["picked"] is not None]
    if not waits:
        return None
    return sum(waits) / len(waits)


def effective_distance_ratio(log, include_dispatch: bool = True) -> float | None:
    """Direct origin-destination distance of delivered requests over fleet
    distance actually driven. Above 1 means rides and relays packed well."""
    direct = sum(
        manhattan(r["origin"], r["destination"])
        for r in _primary_requests(log).values()
        if r["delivered"] is not None
    )
    key = "moved_total" if include_dispatch else "moved_serving"
    driven = sum(e[key] for e in log.by_kind("tick_stats"))
    if driven == 0:
        return None
    return direct / driven


@dataclass
class MetricsReport:
    baseline: str
    seed: int
    ticks: int
    n_vehicles: int
    generated: dict = field(default_factory=dict)
    accept_rate_overall: float | None = None
    accept_rate_passenger: float | None = None
    accept_rate_goods: float | None = None
    fuel_cost_per_delivery: float | None = None
    active_vehicle_ratio: float | None = None
    mean_wait_ticks: float | None = None
    mean_wait_minutes: float | None = None
    effective_distance_ratio: float | None = None
    hop_transfers: int = 0
    delivered: int = 0
    per_day: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, blob: str) -> "MetricsReport":
        return cls(**json.loads(blob))

    def table(self) -> str:
        rows = [
            ("baseline", self.baseline),
            ("seed", self.seed),
            ("ticks", self.ticks),
            ("vehicles", self.n_vehicles),
            ("generated (p/g)", f"{self.generated.get('passenger', 0)}/{self.generated.get('goods', 0)}"),
            ("accept rate overall", _fmt(self.accept_rate_overall)),
            ("accept rate passenger", _fmt(self.accept_rate_passenger)),
            ("accept rate goods", _fmt(self.accept_rate_goods)),
            ("fuel cost / delivery ($)", _fmt(self.fuel_cost_per_delivery, 4)),
            ("active vehicle ratio", _fmt(self.active_vehicle_ratio)),
            ("mean wait (min)", _fmt(self.mean_wait_minutes)),
            ("effective distance ratio", _fmt(self.effective_distance_ratio)),
            ("hop transfers", self.hop_transfers),
            ("delivered", self.delivered),
        ]
        width = max(len(str(k)) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _fmt(value, digits=3):
    return "n/a" if value is None else f"{value:.{digits}f}"


def per_day_series(log) -> list:
    """Accept rate, wait, and activity bucketed by simulated day."""
    tpd = log.ticks_per_day
    reqs = _primary_requests(log)
    stats = log.by_kind("tick_stats")
    if not stats:
        return []
    days = range(0, (max(e["tick"] for e in stats) // tpd) + 1)
    series = []
    for day in days:
        lo, hi = day * tpd, (day + 1) * tpd
        in_day = [r for r in reqs.values() if lo <= r["created"] < hi]
        picked = [r for r in in_day if r["picked"] is not None]
        day_stats = [e for e in stats if lo <= e["tick"] < hi]
        series.append({
            "day": day,
            "generated": len(in_day),
            "accept_rate": len(picked) / len(in_day) if in_day else None,
            "mean_wait_ticks": (sum(r["picked"] - r["created"] for r in picked) / len(picked)
                                if picked else None),
            "active_vehicle_ratio": (sum(e["active"] / log.n_vehicles for e in day_stats) / len(day_stats)
                                     if day_stats else None),
        })
    return series


def build_report(log, include_dispatch_distance: bool = True) -> MetricsReport:
    reqs = _primary_requests(log)
    generated = {
        "passenger": sum(1 for r in reqs.values() if r["kind"] == "passenger"),
        "goods": sum(1 for r in reqs.values() if r["kind"] == "goods"),
    }
    wait = mean_wait(log)
    return MetricsReport(
        baseline=log.baseline,
        seed=log.seed,
        ticks=log.ticks,
        n_vehicles=log.n_vehicles,
        generated=generated,
        accept_rate_overall=accept_rate(log),
        accept_rate_passenger=accept_rate(log, "passenger"),
        accept_rate_goods=accept_rate(log, "goods"),
        fuel_cost_per_delivery=fuel_cost_per_delivery(log),
        active_vehicle_ratio=active_vehicle_ratio(log),
        mean_wait_ticks=wait,
        mean_wait_minutes=None if wait is None else wait * log.dt_minutes,
        effective_distance_ratio=effective_distance_ratio(log, include_dispatch_distance),
        hop_transfers=len(log.by_kind("hop_drop")),
        delivered=sum(1 for r in reqs.values() if r["delivered"] is not None),
        per_day=per_day_series(log),
    )


def write_per_day_csv(path, report: MetricsReport):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "generated", "accept_rate", "mean_wait_ticks", "active_vehicle_ratio"])
        for row in report.per_day:
            writer.writerow([row["day"], row["generated"], row["accept_rate"],
                             row["mean_wait_ticks"], row["active_vehicle_ratio"]])
