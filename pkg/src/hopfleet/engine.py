"""Discrete-time fleet simulation: intake, dispatch, matching, relays, learning.

Each tick runs a fixed phase order over vehicles in ascending id:

  1. intake new requests; plan relay chains for goods
  2. per-vehicle arrival processing (status transitions, pickups, drops;
     a hop-leg drop enqueues the next leg as a child request)
  3. idle vehicles query the dispatch policy with the scheduled probability;
     a self-targeted action holds the vehicle idle, anything else starts a
     dispatch drive
  4. greedy matching binds queued requests to dispatched vehicles (and, by
     default, to partially filled en-route vehicles); stale requests expire
  5. vehicles advance along their routes
  6. rewards and objective components are settled, decision transitions are
     pushed to replay, per-tick stats are logged
  7. training mode takes one gradient step and syncs the target on schedule

Identical seed and config give bit-identical episode logs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import demand as dm
from . import dispatch_rl as rl
from . import fleet as fl
from .geo import GridWorld, ZoneId, designate_hop_zones, manhattan
from .hopplan import assign_hop_zones
from .matching import match
from .reward import AgentRewardInputs, RewardWeights, agent_reward, global_objective

BASELINE_FLEX_HOPS = "flex_hops"
BASELINE_FLEX_NOHOPS = "flex_nohops"
BASELINE_SEPARATE = "separate"
BASELINES = (BASELINE_FLEX_HOPS, BASELINE_FLEX_NOHOPS, BASELINE_SEPARATE)

MODE_TRAIN = "train"
MODE_EVAL = "eval"

FULL_CHECK_EVERY = 25  # ticks between full conservation scans


class EngineInvariantError(RuntimeError):
    """A simulation invariant broke; the message carries a state dump."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class GridConfig:
    width: int = 20
    height: int = 20
    zone_edge_m: float = 150.0
    vehicle_speed: int = 1
    hop_stride: int = 3
    hop_offset: int = 0
    hop_min_pickups: int = 0
    hop_count_radius: int = 0  # neighborhood radius when tallying warmup pickups


@dataclass
class DemandConfig:
    passenger_rate_per_zone: float = 0.004  # uniform base rate
    origin_hot_zone_count: int = 5
    origin_hot_rate: float = 0.5  # extra passenger rate at each hot origin
    hot_zone_count: int = 4  # destination attractors when centers are not shared
    hot_weight: float = 0.6
    passenger_trip_radius: int = 0  # 0: city-wide rides; else neighborhood rides
    shared_activity_centers: bool = True  # busy zones attract trips both ways
    center_min_separation: int = 0  # pairwise zone distance between hot origins
    goods_locations_per_kind: int = 3
    goods_location_rate: float = 0.25
    goods_radius_zones: int = 12
    goods_sites_near_hot_origins: bool = True
    goods_dest_hot_weight: float = 0.0  # share of packages headed near another center
    goods_burst_period: int = 0  # 0: steady flow; else rush-cycle length in ticks
    goods_burst_duty: float = 0.25  # fraction of the cycle that carries the flow
    trips_csv: str | None = None


@dataclass
class RLConfig:
    window: int = 15
    action_radius: int = 7
    hidden: tuple = (128, 128)
    learning_rate: float = 0.005
    batch_size: int = 32
    buffer_capacity: int = rl.REPLAY_CAPACITY
    sync_period: int = rl.TARGET_SYNC_PERIOD
    train_every: int = 1
    per_vehicle: bool = False


@dataclass
class SimConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    demand: DemandConfig = field(default_factory=DemandConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    n_vehicles: int = 50
    seats: int = 4
    trunk: int = 5
    separate_split: float = 0.5
    separate_goods_trunk: int = 10
    horizon: int = 30
    dt_minutes: float = 1.0
    ticks_per_day: int = 1440
    weights_preset: str = "eval"
    discount: float = 0.98
    t_n: int = 1500
    seed: int = 0
    reject_radius_m: float = 5000.0
    patience_ticks: int = 10
    max_hop_depth: int = 4
    baseline: str = BASELINE_FLEX_HOPS
    warmup_ticks: int = 100
    episode_ticks: int = 750
    enroute_matching: bool = True
    effective_distance_includes_dispatch: bool = True

    def __post_init__(self):
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if self.n_vehicles < 1 or self.horizon < 1 or self.episode_ticks < 0:
            raise ValueError("n_vehicles, horizon must be >= 1 and episode_ticks >= 0")
        if isinstance(self.grid, dict):
            self.grid = GridConfig(**self.grid)
        if isinstance(self.demand, dict):
            self.demand = DemandConfig(**self.demand)
        if isinstance(self.rl, dict):
            self.rl = RLConfig(**self.rl)
        self.rl.hidden = tuple(self.rl.hidden)

    @property
    def reject_radius_zones(self) -> float:
        return self.reject_radius_m / self.grid.zone_edge_m

    def weights(self) -> RewardWeights:
        w = RewardWeights.preset(self.weights_preset, discount=self.discount)
        if self.baseline == BASELINE_FLEX_NOHOPS or self.baseline == BASELINE_SEPARATE:
            w = replace(w, b5=0.0)  # no hop-trips, no hop penalty
        return w


# ---------------------------------------------------------------------------
# episode log


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


@dataclass
class EpisodeLog:
    """Ordered event records for one episode; everything metrics need."""

    n_vehicles: int
    dt_minutes: float
    ticks_per_day: int
    baseline: str
    seed: int
    ticks: int = 0
    events: list = field(default_factory=list)

    def add(self, tick: int, kind: str, **payload):
        event = {"tick": tick, "kind": kind}
        for key, value in payload.items():
            event[key] = _plain(value)
        self.events.append(event)

    def by_kind(self, kind: str) -> list:
        return [e for e in self.events if e["kind"] == kind]

    def canonical(self) -> str:
        head = {
            "n_vehicles": self.n_vehicles,
            "dt_minutes": self.dt_minutes,
            "ticks_per_day": self.ticks_per_day,
            "baseline": self.baseline,
            "seed": self.seed,
            "ticks": self.ticks,
        }
        lines = [json.dumps(head, sort_keys=True)]
        lines.extend(json.dumps(e, sort_keys=True) for e in self.events)
        return "\n".join(lines) + "\n"

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(self.canonical())

    @classmethod
    def from_jsonl(cls, path) -> "EpisodeLog":
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        head = lines[0]
        log = cls(
            n_vehicles=head["n_vehicles"],
            dt_minutes=head["dt_minutes"],
            ticks_per_day=head["ticks_per_day"],
            baseline=head["baseline"],
            seed=head["seed"],
            ticks=head["ticks"],
        )
        log.events = lines[1:]
        return log


# ---------------------------------------------------------------------------
# dispatch policy container


class DispatchPolicy:
    """Q-networks plus replay, shared across the fleet by default.

    The per-vehicle flag keeps one network and buffer per vehicle for
    ablations; the shared default trains a single pair on one buffer.
    """

    def __init__(self, cfg: SimConfig, seed_seq: np.random.SeedSequence | None = None):
        self.cfg = cfg
        self.input_dim = rl.state_dim(cfg.rl.window)
        self.n_actions = rl.action_count(cfg.rl.action_radius)
        seq = seed_seq or np.random.SeedSequence(cfg.seed)
        init_seq, sample_seq = seq.spawn(2)
        self.sample_rng = np.random.default_rng(sample_seq)
        self.per_vehicle = cfg.rl.per_vehicle
        keys = list(range(cfg.n_vehicles)) if self.per_vehicle else [None]
        self.online = {}
        self.target = {}
        self.buffers = {}
        for key, child in zip(keys, init_seq.spawn(len(keys))):
            net = rl.QNetwork(self.input_dim, self.n_actions, cfg.rl.hidden,
                              rng=np.random.default_rng(child))
            self.online[key] = net
            self.target[key] = net.clone()
            self.buffers[key] = rl.ReplayBuffer(cfg.rl.buffer_capacity)
        self.schedule_step = 0

    def _key(self, vehicle_id: int):
        return vehicle_id if self.per_vehicle else None

    def q_net(self, vehicle_id: int) -> rl.QNetwork:
        return self.online[self._key(vehicle_id)]

    def store(self, vehicle_id: int, tr: rl.Transition):
        self.buffers[self._key(vehicle_id)].push(tr)

    def train_tick(self):
        """One scheduled training step; returns the mean loss or None."""
        self.schedule_step += 1
        losses = []
        if self.schedule_step % self.cfg.rl.train_every == 0:
            for key in self.online:
                loss = rl.train_step(
                    self.buffers[key],
                    self.online[key],
                    self.target[key],
                    self.cfg.rl.batch_size,
                    self.cfg.rl.learning_rate,
                    self.cfg.discount,
                    self.sample_rng,
                )
                if loss is not None:
                    losses.append(loss)
        for key in self.online:
            rl.sync_target(self.online[key], self.target[key], self.schedule_step,
                           self.cfg.rl.sync_period)
        return float(np.mean(losses)) if losses else None

    def epsilon(self, training: bool) -> float:
        if not training:
            return rl.EPSILON_FLOOR
        return rl.epsilon_at(self.schedule_step, self.cfg.t_n)

    def act_probability(self, training: bool) -> float:
        if not training:
            return 1.0
        return rl.act_probability_at(self.schedule_step, self.cfg.t_n)

    def save(self, path, extra: dict | None = None):
        if self.per_vehicle:
            raise ValueError("checkpointing supports the shared-parameter mode only")
        rl.save_checkpoint(path, self.online[None], self.target[None], self.schedule_step, extra)

    def load(self, path):
        expected = {"input_dim": self.input_dim, "hidden": list(self.cfg.rl.hidden),
                    "n_actions": self.n_actions}
        online, target, header = rl.load_checkpoint(path, expected=expected)
        self.online[None] = online
        self.target[None] = target
        self.schedule_step = int(header["step"])
        return header


# ---------------------------------------------------------------------------
# simulation


@dataclass
class _Pending:
    """A decision waiting for its successor: the replay transition in flight."""

    state: np.ndarray
    action: int
    tick: int
    accum: float = 0.0


class Simulation:
    def __init__(self, cfg: SimConfig, policy: DispatchPolicy | None = None):
        self.cfg = cfg
        seq = np.random.SeedSequence(cfg.seed)
        (self.demand_seq, self.place_seq, self.match_seq, self.explore_seq,
         policy_seq, self._layout_seq) = seq.spawn(6)
        self.demand_rng = np.random.default_rng(self.demand_seq)
        self.match_rng = np.random.default_rng(self.match_seq)
        self.explore_rng = np.random.default_rng(self.explore_seq)
        self.policy = policy or DispatchPolicy(cfg, seed_seq=policy_seq)
        self.weights = cfg.weights()

        self.grid = GridWorld(
            width=cfg.grid.width,
            height=cfg.grid.height,
            zone_edge_m=cfg.grid.zone_edge_m,
            vehicle_speed=cfg.grid.vehicle_speed,
        )
        self.forecaster = dm.HistoricalAverageForecaster(self.grid, cfg.ticks_per_day)
        self.vehicles: list[fl.VehicleState] = []
        self.registry: dict[int, dm.Request] = {}
        self.queue: list[int] = []
        self.chains: dict[int, dict] = {}  # original id -> {legs, cursor_rid, next_leg}
        self.leg_of: dict[int, tuple] = {}  # leg request id -> (original id, leg index)
        self.next_request_id = 0
        self.tick = 0
        self.training = False
        self.dispatch_enabled = True
        self.pending: dict[int, _Pending] = {}
        self.prev_active: dict[int, bool] = {}
        self.log: EpisodeLog | None = None
        self.curve: list[dict] = []
        self._initialized = False
        self._trip_table = None
        self._locations: list[dm.ServiceLocation] = []
        self._passenger_rates: dict = {}
        self._origin_hot: list[ZoneId] = []
        self._trip_distribution = dm.TripDistribution()

    # -- demand sources ----------------------------------------------------

    def _build_demand(self):
        cfg = self.cfg
        rng = np.random.default_rng(self._layout_seq)
        if cfg.demand.trips_csv:
            records = dm.ingest_trip_records(cfg.demand.trips_csv, self.grid)
            self._trip_table = {}
            for r in records:
                self._trip_table.setdefault(r.created_tick, []).append(r)
            return
        def draw_zones(count, min_sep=0):
            out = []
            attempts = 0
            while len(out) < count:
                z = ZoneId(int(rng.integers(self.grid.height)), int(rng.integers(self.grid.width)))
                attempts += 1
                if attempts > 10_000:  # separation infeasible; relax it
                    min_sep = 0
                if z in out or any(manhattan(z, q) < min_sep for q in out):
                    continue
                out.append(z)
            return out

        self._origin_hot = draw_zones(cfg.demand.origin_hot_zone_count,
                                      cfg.demand.center_min_separation)
        if cfg.demand.shared_activity_centers:
            dest_hot = list(self._origin_hot)
        else:
            dest_hot = draw_zones(cfg.demand.hot_zone_count)
        self._trip_distribution = dm.TripDistribution(
            hot_zones=tuple(dest_hot),
            hot_weight=cfg.demand.hot_weight,
            local_radius=cfg.demand.passenger_trip_radius,
        )
        self._passenger_rates = {z: cfg.demand.passenger_rate_per_zone for z in self.grid.all_zones()}
        for z in self._origin_hot:
            self._passenger_rates[z] += cfg.demand.origin_hot_rate

        def lattice_snap(zone):
            stride, off = cfg.grid.hop_stride, cfg.grid.hop_offset % cfg.grid.hop_stride
            best = None
            for row in range(off, self.grid.height, stride):
                for col in range(off, self.grid.width, stride):
                    cand = ZoneId(row, col)
                    d = manhattan(zone, cand)
                    if best is None or d < best[0]:
                        best = (d, cand)
            return best[1]

        self._locations = []
        for kind in ("postal", "meal", "supermarket"):
            for _ in range(cfg.demand.goods_locations_per_kind):
                if cfg.demand.goods_sites_near_hot_origins and self._origin_hot:
                    # park goods sources on the relay lattice next to a busy
                    # center, so their own corner never splits their trips
                    hub = self._origin_hot[int(rng.integers(len(self._origin_hot)))]
                    z = lattice_snap(hub)
                else:
                    z = ZoneId(int(rng.integers(self.grid.height)), int(rng.integers(self.grid.width)))
                self._locations.append(dm.ServiceLocation(z, kind, cfg.demand.goods_location_rate))

    def _draw_requests(self, tick: int, rng) -> list:
        if self._trip_table is not None:
            rows = self._trip_table.get(tick, [])
            out = []
            for r in rows:
                out.append(dm.Request(self.next_request_id, r.kind, r.origin, r.destination,
                                      tick, r.urgency))
                self.next_request_id += 1
            return out
        locations = self._locations
        period = self.cfg.demand.goods_burst_period
        if period > 0:
            # rush cycles: the same mean flow, concentrated into bursts
            duty = self.cfg.demand.goods_burst_duty
            in_burst = (tick % period) < max(1, round(duty * period))
            gain = 1.0 / duty if in_burst else 0.0
            locations = [dm.ServiceLocation(l.zone, l.kind, l.rate * gain) for l in locations]
        reqs = dm.generate_tick_requests(
            self.grid,
            locations,
            self._passenger_rates,
            tick,
            rng,
            goods_radius=self.cfg.demand.goods_radius_zones,
            id_start=self.next_request_id,
            trip_distribution=self._trip_distribution,
            goods_dest_hot=self._origin_hot,
            goods_dest_hot_weight=self.cfg.demand.goods_dest_hot_weight,
        )
        if reqs:
            self.next_request_id = reqs[-1].id + 1
        return reqs

    # -- initialization ----------------------------------------------------

    def initialize(self):
        """Place the fleet, run the no-dispatch warmup, designate hop-zones."""
        cfg = self.cfg
        self._build_demand()

        # fleet at the origins of the first requests drawn from a placement stream
        origins: list[ZoneId] = []
        if self._trip_table is not None:
            for t in sorted(self._trip_table):
                origins.extend(r.origin for r in self._trip_table[t])
            if not origins:
                raise EngineInvariantError("trip file holds no requests to place the fleet at")
            while len(origins) < cfg.n_vehicles:
                origins.extend(origins[: cfg.n_vehicles - len(origins)])
        else:
            place_rng = np.random.default_rng(self.place_seq)
            guard = 0
            while len(origins) < cfg.n_vehicles:
                batch = dm.generate_tick_requests(
                    self.grid, self._locations, self._passenger_rates, 0, place_rng,
                    goods_radius=cfg.demand.goods_radius_zones,
                    trip_distribution=self._trip_distribution,
                )
                origins.extend(r.origin for r in batch)
                guard += 1
                if guard > 100_000:
                    raise EngineInvariantError("placement stream is empty; are all demand rates zero?")

        n_passenger_only = round(cfg.n_vehicles * cfg.separate_split)
        for i in range(cfg.n_vehicles):
            if cfg.baseline == BASELINE_SEPARATE:
                if i < n_passenger_only:
                    seats, trunk = cfg.seats, 0
                else:
                    seats, trunk = 0, cfg.separate_goods_trunk
            else:
                seats, trunk = cfg.seats, cfg.trunk
            self.vehicles.append(
                fl.VehicleState(id=i, location=origins[i], seats_total=seats, trunk_total=trunk)
            )
            self.prev_active[i] = False

        # warmup: demand history and pickup counts only, no dispatch, no queueing
        pickup_counts: dict[ZoneId, int] = {}
        for k in range(cfg.warmup_ticks):
            tick = -cfg.warmup_ticks + k
            batch = self._draw_requests(tick, self.demand_rng) if self._trip_table is None else []
            self.forecaster.record_requests(tick, batch)
            for r in batch:
                pickup_counts[r.origin] = pickup_counts.get(r.origin, 0) + 1
        self.next_request_id = 0  # warmup ids are discarded with the requests

        if cfg.grid.hop_count_radius > 0:
            # candidates qualify on pickups in their neighborhood, so relay
            # hubs land next to busy blocks rather than exactly on them
            smoothed = {}
            for row in range(cfg.grid.hop_offset % cfg.grid.hop_stride, self.grid.height,
                             cfg.grid.hop_stride):
                for col in range(cfg.grid.hop_offset % cfg.grid.hop_stride, self.grid.width,
                                 cfg.grid.hop_stride):
                    z = ZoneId(row, col)
                    total = pickup_counts.get(z, 0)
                    for nb in self.grid.zones_within(z, cfg.grid.hop_count_radius):
                        total += pickup_counts.get(nb, 0)
                    smoothed[z] = total
            counts_for_designation = smoothed
        else:
            counts_for_designation = pickup_counts
        designate_hop_zones(self.grid, cfg.grid.hop_stride, counts_for_designation,
                            cfg.grid.hop_min_pickups, cfg.grid.hop_offset)

        self.log = EpisodeLog(
            n_vehicles=cfg.n_vehicles,
            dt_minutes=cfg.dt_minutes,
            ticks_per_day=cfg.ticks_per_day,
            baseline=cfg.baseline,
            seed=cfg.seed,
        )
        self._initialized = True

    # -- per-tick helpers ----------------------------------------------------

    def _leg_for(self, rid: int) -> tuple:
        """(origin, destination, leg_kind, hops_done) of a queued request."""
        req = self.registry[rid]
        if rid in self.leg_of:
            orig_id, idx = self.leg_of[rid]
            legs = self.chains[orig_id]["legs"]
            o, d = legs[idx]
            kind = fl.HOP_LEG if idx < len(legs) - 1 else fl.DIRECT
            return o, d, kind, req.hops_completed
        if req.id in self.chains:
            legs = self.chains[req.id]["legs"]
            o, d = legs[0]
            return o, d, fl.HOP_LEG if len(legs) > 1 else fl.DIRECT, 0
        return req.origin, req.destination, fl.DIRECT, req.hops_completed

    def _original_of(self, rid: int) -> dm.Request:
        req = self.registry[rid]
        if req.parent_id is not None:
            return self.registry[req.parent_id]
        return req

    def _intake(self, detail: dict):
        reqs = self._draw_requests(self.tick, self.demand_rng)
        self.forecaster.record_requests(self.tick, reqs)
        for r in reqs:
            self.registry[r.id] = r
            self.queue.append(r.id)
            self.log.add(self.tick, "request", request=r.id, req_kind=r.kind,
                         origin=r.origin, destination=r.destination, parent=r.parent_id,
                         urgency=r.urgency)
            if r.kind == dm.GOODS and self.cfg.baseline == BASELINE_FLEX_HOPS:
                trip = assign_hop_zones(r, self.grid, self.cfg.max_hop_depth)
                if len(trip.legs) > 1:
                    self.chains[r.id] = {"legs": trip.legs, "cursor_rid": r.id, "next_leg": 1}
        detail["generated"] = len(reqs)

    def _handle_drop(self, event: fl.DropEvent, detour: dict):
        req = self.registry[event.request_id]
        orig = self._original_of(event.request_id)
        if event.leg_kind == fl.DIRECT:
            if req.parent_id is not None:
                req.set_status(dm.DELIVERED, event.tick)
            if orig.status != dm.DELIVERED:
                orig.set_status(dm.DELIVERED, event.tick)
            self.log.add(event.tick, "deliver", request=orig.id, vehicle=event.vehicle_id,
                         zone=event.zone, leg=event.request_id)
            return
        # hop handoff: close this leg and enqueue the next one
        chain = self.chains[orig.id]
        if req.parent_id is not None:
            req.set_status(dm.DELIVERED, event.tick)
        orig.hops_completed += 1
        idx = chain["next_leg"]
        legs = chain["legs"]
        o, d = legs[idx]
        if o != event.zone:
            raise EngineInvariantError(self._dump(f"hop chain misaligned for request {orig.id}"))
        child = dm.Request(self.next_request_id, dm.GOODS, o, d, event.tick, orig.urgency,
                           hops_completed=orig.hops_completed, parent_id=orig.id)
        self.next_request_id += 1
        self.registry[child.id] = child
        self.leg_of[child.id] = (orig.id, idx)
        chain["cursor_rid"] = child.id
        chain["next_leg"] = idx + 1
        self.queue.append(child.id)
        detour[event.vehicle_id] = detour.get(event.vehicle_id, 0.0) + 1.0
        self.log.add(event.tick, "hop_drop", request=orig.id, leg=event.request_id,
                     vehicle=event.vehicle_id, zone=event.zone, hops_done=orig.hops_completed)

    def _arrivals(self, detour: dict, detail: dict):
        hops = 0
        for v in self.vehicles:
            for event in fl.process_arrivals(v, self.tick):
                if isinstance(event, fl.PickupEvent):
                    req = self.registry[event.request_id]
                    req.set_status(dm.PICKED_UP, self.tick)
                    orig = self._original_of(event.request_id)
                    if orig.id != req.id and orig.status == dm.ASSIGNED:
                        orig.set_status(dm.PICKED_UP, self.tick)
                    self.log.add(self.tick, "pickup", request=event.request_id,
                                 parent=req.parent_id, vehicle=event.vehicle_id,
                                 zone=event.zone, wait=self.tick - req.created_tick)
                else:
                    if event.leg_kind == fl.HOP_LEG:
                        hops += 1
                    self._handle_drop(event, detour)
        detail["hops"] = hops

    def _dispatch(self, supply: fl.FleetSnapshot, forecast: dm.DemandForecast, detail: dict):
        cfg = self.cfg
        beta = self.policy.act_probability(self.training)
        eps = self.policy.epsilon(self.training)
        dispatch_time = 0.0
        q_maxes = []
        for v in self.vehicles:
            if v.status != fl.IDLE or not self.dispatch_enabled:
                continue
            if self.explore_rng.random() >= beta:
                continue
            snap = rl.encode_state(self.grid, supply, forecast, v, self.tick,
                                   window=cfg.rl.window, ticks_per_day=cfg.ticks_per_day)
            vec = snap.vector()
            net = self.policy.q_net(v.id)
            action = rl.select_action(net, vec, eps, self.explore_rng)
            q_maxes.append(float(np.max(net.q_values(vec))))
            old = self.pending.get(v.id)
            if old is not None:
                self._finalize[v.id] = (old, vec)
            self.pending[v.id] = _Pending(vec, action, self.tick)
            v.last_decision_tick = self.tick
            target = rl.action_target(self.grid, v.location, action, cfg.rl.action_radius)
            if target == v.location:
                continue  # hold: stay idle, stay unmatched
            v.dispatch_target = target
            v.set_status(fl.DISPATCHING)
            eta = self.grid.eta(v.location, target).ticks
            dispatch_time += eta
            self.log.add(self.tick, "dispatch", vehicle=v.id, origin=v.location,
                         target=target, eta=eta)
        detail["dispatch_time"] = dispatch_time
        detail["q_max"] = float(np.mean(q_maxes)) if q_maxes else None

    def _match(self, detour: dict, detail: dict):
        cfg = self.cfg
        pool = [v for v in self.vehicles if v.status == fl.DISPATCHED]
        if cfg.enroute_matching:
            pool += [
                v for v in self.vehicles
                if v.status in (fl.MATCHED, fl.SERVING) and fl.is_available(v)
            ]
        pool.sort(key=lambda v: v.id)
        requests = [self.registry[rid] for rid in self.queue]
        assignments = match(requests, pool, self.grid, cfg.reject_radius_zones, self.match_rng)
        by_id = {v.id: v for v in self.vehicles}
        for a in assignments:
            v = by_id[a.vehicle_id]
            req = self.registry[a.request_id]
            origin, dest, leg_kind, hops_done = self._leg_for(a.request_id)
            before = v.route_eta(self.grid.vehicle_speed) if v.manifest else None
            v.add_entry(fl.ManifestEntry(req.id, req.kind, origin, dest, leg_kind=leg_kind,
                                         hops_completed=hops_done))
            if before is not None:
                after = v.route_eta(self.grid.vehicle_speed)
                detour[v.id] = detour.get(v.id, 0.0) + max(0.0, after - before)
            req.set_status(dm.ASSIGNED)
            orig = self._original_of(req.id)
            if orig.id != req.id and orig.status == dm.QUEUED:
                orig.set_status(dm.ASSIGNED)
            if v.status in (fl.DISPATCHED, fl.SERVING):
                v.set_status(fl.MATCHED)
            self.queue.remove(req.id)
            self.log.add(self.tick, "assign", request=req.id, parent=req.parent_id,
                         vehicle=v.id, slot=a.slot, eta=a.eta_ticks)
        # expire stale primary requests; relay legs wait at their hop-zone
        expired = [
            rid for rid in self.queue
            if self.registry[rid].parent_id is None
            and self.tick - self.registry[rid].created_tick >= cfg.patience_ticks
        ]
        for rid in expired:
            self.queue.remove(rid)
            self.registry[rid].set_status(dm.REJECTED)
            self.chains.pop(rid, None)
            self.log.add(self.tick, "reject", request=rid,
                         req_kind=self.registry[rid].kind)
        detail["assigned"] = len(assignments)
        detail["rejected"] = len(expired)

    def _advance(self, detail: dict):
        moved_total = 0
        moved_serving = 0
        for v in self.vehicles:
            moved = fl.move(v, self.grid)
            moved_total += moved
            if v.status in (fl.MATCHED, fl.SERVING):
                moved_serving += moved
        detail["moved_total"] = moved_total
        detail["moved_serving"] = moved_serving

    def _settle(self, supply, forecast, detour: dict, detail: dict):
        cfg = self.cfg
        speed = self.grid.vehicle_speed
        total_detour_delay = 0.0
        activations = 0
        rewards = {}
        for v in self.vehicles:
            etas = v.remaining_etas(speed) if v.status in (fl.MATCHED, fl.SERVING) else {}
            delays = []
            hops = []
            for e in v.manifest:
                if not e.onboard:
                    continue
                req = self.registry[e.request_id]
                waited = (e.pickup_tick or self.tick) - req.created_tick
                t_actual = (self.tick - (e.pickup_tick or self.tick)) + etas.get(e.request_id, 0)
                t_direct = math.ceil(manhattan(e.origin, e.destination) / speed)
                delay = max(0.0, waited + t_actual - t_direct)
                delays.append((req.urgency, delay))
                if e.kind == dm.GOODS:
                    hops.append(e.hops_completed)
            active_now = int(v.active)
            active_prev = int(self.prev_active[v.id])
            activations += max(active_now - active_prev, 0)
            inputs = AgentRewardInputs(
                passengers_onboard=v.passengers_onboard,
                packages_onboard=v.packages_onboard,
                detour_ticks=detour.get(v.id, 0.0),
                order_delays=delays,
                active_now=active_now,
                active_prev=active_prev,
                onboard_hops=hops,
            )
            rewards[v.id] = agent_reward(inputs, self.weights)
            total_detour_delay += sum(d for _, d in delays)
            self.prev_active[v.id] = v.active

        # fold rewards into pending decisions, flush completed transitions
        for vid, pend in list(self.pending.items()):
            if pend.tick < self.tick:
                pend.accum += (self.cfg.discount ** (self.tick - pend.tick - 1)) * rewards[vid]
        for vid, (old, next_vec) in self._finalize.items():
            old.accum += (self.cfg.discount ** (self.tick - old.tick - 1)) * rewards[vid]
            self.policy.store(vid, rl.Transition(old.state, old.action, old.accum, next_vec,
                                                 elapsed=self.tick - old.tick - 1))
        self._finalize = {}

        gap = float(np.maximum(forecast.at(0) - supply.available, 0.0).sum())
        components = [gap, detail["dispatch_time"], total_detour_delay,
                      float(activations), float(detail["hops"])]
        detail["objective"] = global_objective(components, self.weights)
        detail["gap"] = gap
        detail["detour_delay"] = total_detour_delay
        detail["activations"] = activations
        detail["reward_mean"] = float(np.mean(list(rewards.values()))) if rewards else 0.0
        detail["active"] = sum(1 for v in self.vehicles if v.active)
        detail["queued"] = len(self.queue)

    # -- invariants ----------------------------------------------------------

    def _dump(self, message: str) -> str:
        state = {
            "tick": self.tick,
            "queue": self.queue[:50],
            "vehicles": [
                {"id": v.id, "status": v.status, "location": list(v.location),
                 "manifest": [(e.request_id, e.kind, e.onboard) for e in v.manifest]}
                for v in self.vehicles[:20]
            ],
        }
        return f"{message}\nstate dump: {json.dumps(state, sort_keys=True)}"

    def _check_invariants(self, full: bool):
        manifest_owner = {}
        for v in self.vehicles:
            if v.passengers_onboard > v.seats_total or v.packages_onboard > v.trunk_total:
                raise EngineInvariantError(self._dump(f"vehicle {v.id} over capacity"))
            if v.seats_committed > v.seats_total or v.trunk_committed > v.trunk_total:
                raise EngineInvariantError(self._dump(f"vehicle {v.id} overcommitted"))
            if v.status not in fl.VEHICLE_STATUSES:
                raise EngineInvariantError(self._dump(f"vehicle {v.id} bad status {v.status}"))
            for e in v.manifest:
                if e.request_id in manifest_owner:
                    raise EngineInvariantError(self._dump(f"request {e.request_id} in two manifests"))
                manifest_owner[e.request_id] = v.id
                status = self.registry[e.request_id].status
                expect = dm.PICKED_UP if e.onboard else dm.ASSIGNED
                if status != expect:
                    raise EngineInvariantError(
                        self._dump(f"request {e.request_id} status {status} vs manifest {expect}"))
        for rid in self.queue:
            if rid in manifest_owner:
                raise EngineInvariantError(self._dump(f"request {rid} queued and assigned"))
            if self.registry[rid].status != dm.QUEUED:
                raise EngineInvariantError(self._dump(f"queued request {rid} not in queued status"))
        if not full:
            return
        # every primary request sits in exactly one lifecycle bucket
        for req in self.registry.values():
            if req.parent_id is not None:
                continue
            if req.status in (dm.DELIVERED, dm.REJECTED):
                continue
            if req.status == dm.QUEUED:
                if req.id not in self.queue:
                    raise EngineInvariantError(self._dump(f"request {req.id} queued but not in queue"))
                continue
            cursor = self.chains[req.id]["cursor_rid"] if req.id in self.chains else req.id
            leg = self.registry[cursor]
            if leg.status == dm.QUEUED:
                if cursor not in self.queue:
                    raise EngineInvariantError(self._dump(f"leg {cursor} lost from queue"))
            elif leg.status in (dm.ASSIGNED, dm.PICKED_UP):
                if cursor not in manifest_owner:
                    raise EngineInvariantError(self._dump(f"leg {cursor} not in any manifest"))
            else:
                raise EngineInvariantError(self._dump(f"package {req.id} has no live leg"))

    # -- main loop -----------------------------------------------------------

    def step(self) -> dict:
        if not self._initialized:
            raise EngineInvariantError("call initialize() before step()")
        detail = {}
        detour: dict[int, float] = {}
        self._finalize = {}
        self._intake(detail)
        self._arrivals(detour, detail)
        supply = fl.project_supply(self.vehicles, self.grid, self.cfg.horizon)
        forecast = self.forecaster.forecast(self.tick, self.cfg.horizon)
        self._dispatch(supply, forecast, detail)
        self._match(detour, detail)
        self._advance(detail)
        self._settle(supply, forecast, detour, detail)
        self._check_invariants(full=(self.tick % FULL_CHECK_EVERY == 0))

        loss = self.policy.train_tick() if self.training else None
        if self.training:
            self.curve.append({
                "step": self.policy.schedule_step,
                "q_max": detail.get("q_max"),
                "loss": loss,
                "epsilon": self.policy.epsilon(True),
                "act_probability": self.policy.act_probability(True),
            })

        self.log.add(self.tick, "tick_stats", active=detail["active"],
                     moved_total=detail["moved_total"], moved_serving=detail["moved_serving"],
                     gap=detail["gap"], dispatch_time=detail["dispatch_time"],
                     detour_delay=detail["detour_delay"], activations=detail["activations"],
                     hops=detail["hops"], objective=detail["objective"],
                     queued=detail["queued"], generated=detail["generated"],
                     assigned=detail["assigned"], rejected=detail["rejected"],
                     reward_mean=detail["reward_mean"])
        self.tick += 1
        self.log.ticks = self.tick
        return detail

    def _flush_pending(self):
        """Episode truncation: bootstrap every in-flight decision."""
        supply = fl.project_supply(self.vehicles, self.grid, self.cfg.horizon)
        forecast = self.forecaster.forecast(self.tick, self.cfg.horizon)
        for vid in sorted(self.pending):
            pend = self.pending[vid]
            v = self.vehicles[vid]
            snap = rl.encode_state(self.grid, supply, forecast, v, self.tick,
                                   window=self.cfg.rl.window, ticks_per_day=self.cfg.ticks_per_day)
            self.policy.store(vid, rl.Transition(pend.state, pend.action, pend.accum,
                                                 snap.vector(),
                                                 elapsed=max(0, self.tick - pend.tick - 1)))
        self.pending = {}

    def run(self, ticks: int | None = None, mode: str = MODE_EVAL) -> EpisodeLog:
        if mode not in (MODE_TRAIN, MODE_EVAL):
            raise ValueError("mode must be 'train' or 'eval'")
        if not self._initialized:
            self.initialize()
        self.training = mode == MODE_TRAIN
        for _ in range(self.cfg.episode_ticks if ticks is None else ticks):
            self.step()
        if self.training:
            self._flush_pending()
        self._check_invariants(full=True)
        return self.log


def run_episode(cfg: SimConfig, mode: str = MODE_EVAL, ticks: int | None = None,
                policy: DispatchPolicy | None = None) -> EpisodeLog:
    """Initialize a fresh world from the config and run one episode."""
    sim = Simulation(cfg, policy=policy)
    sim.initialize()
    return sim.run(ticks=ticks, mode=mode)


def generate_workload(cfg: SimConfig, ticks: int, seed: int | None = None) -> list:
    """Draw the request stream the config implies, without simulating the fleet."""
    sim = Simulation(cfg if seed is None else replace(cfg, seed=seed))
    sim._build_demand()
    rng = np.random.default_rng(sim.cfg.seed)
    out = []
    for tick in range(ticks):
        out.extend(sim._draw_requests(tick, rng))
    return out
