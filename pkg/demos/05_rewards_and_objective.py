"""The cost structure: five fleet-level components and the per-vehicle reward.

The fleet objective penalizes unmet demand, dispatch travel, shared-ride
delays, newly deployed vehicles, and relay transfers. Each vehicle trains
on a local reward assembled from the same weights.
"""

from hopfleet.reward import (
    AgentRewardInputs,
    RewardWeights,
    agent_reward,
    fleet_activations,
    global_objective,
    supply_demand_gap,
    total_detour_overhead,
    total_dispatch_time,
    total_hops,
)

weights = RewardWeights.preset("init")
print(f"training weights: b1..b5 = {tuple(weights.as_vector())}, discount {weights.discount}")

demand = [3, 1, 0, 2]
supply = [1, 2, 1, 0]
components = [
    supply_demand_gap(demand, supply),
    total_dispatch_time([[3.0, 7.0]], [[0, 1]]),
    total_detour_overhead([1.0, 2.0, 3.0]),
    fleet_activations([1, 1, 0], [0, 1, 0]),
    total_hops([("pkg7", "hub(0,3)")]),
]
print("components (gap, dispatch, detour, activations, hops):", components)
print("fleet objective:", global_objective(components, weights))

print("\nper-vehicle rewards:")
empty = AgentRewardInputs()
print("  idle empty vehicle:", agent_reward(empty, weights))

busy = AgentRewardInputs(passengers_onboard=2, packages_onboard=1)
print("  two riders + one package, no penalties:", agent_reward(busy, weights))

loaded = AgentRewardInputs(
    passengers_onboard=1,
    detour_ticks=2,
    order_delays=[(0.5, 4)],  # one package delayed 4 ticks at half urgency
    active_now=1,
    active_prev=0,
    onboard_hops=[1],
)
print("  freshly deployed, detouring, carrying a once-hopped package:",
      agent_reward(loaded, weights))
