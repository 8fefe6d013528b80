"""Synthetic demand: Poisson arrivals, trip records, and the forecaster.

Request counts per source are Poisson draws inverted from a seeded uniform
stream, so a seed pins the entire workload. The forecaster averages counts
by tick-of-day and backs the demand channel of the dispatch observation.
"""

import numpy as np

from hopfleet.demand import (
    HistoricalAverageForecaster,
    ServiceLocation,
    generate_tick_requests,
    poisson_pmf,
)
from hopfleet.geo import GridWorld, ZoneId

grid = GridWorld(width=10, height=10)
rng = np.random.default_rng(42)

print("Poisson pmf sanity: p(0;0)=%.3f  p(1;1)=%.5f  p(2;3)=%.5f"
      % (poisson_pmf(0, 0), poisson_pmf(1, 1), poisson_pmf(2, 3)))

locations = [
    ServiceLocation(ZoneId(2, 2), "postal", 1.2),
    ServiceLocation(ZoneId(7, 7), "meal", 0.8),
]
passenger_rates = {z: 0.02 for z in grid.all_zones()}

forecaster = HistoricalAverageForecaster(grid, ticks_per_day=48)
total = {"passenger": 0, "goods": 0}
next_id = 0
for tick in range(96):  # two synthetic days
    batch = generate_tick_requests(grid, locations, passenger_rates, tick, rng,
                                   goods_radius=4, id_start=next_id)
    next_id += len(batch)
    forecaster.record_requests(tick, batch)
    for r in batch:
        total[r.kind] += 1

print(f"\ntwo days of workload: {total} requests")
fc = forecaster.forecast(now=96, horizon=5)
print("forecast for the postal source zone over the next 6 ticks:",
      np.round(fc.counts[:, 2, 2], 2))
print("every goods destination lies within the 4-zone delivery radius.")
