"""Dispatch policy learning: state encoding, Q-network, replay, double-Q targets.

The action space is a square of zone offsets around the vehicle (radius 7 by
default, 225 actions). The Q-function is a fully connected ReLU network
over the flattened channel crop, with hand-written forward and backward
passes so gradients can be verified by finite differences. Targets follow
the double estimator: the online network picks the bootstrap action, the
target network evaluates it, discounted by gamma^(1 + elapsed) where
``elapsed`` counts extra ticks between an agent's consecutive decisions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .demand import DemandForecast
from .fleet import FleetSnapshot, VehicleState
from .geo import GridWorld, ZoneId

ACTION_RADIUS = 7
WINDOW = 15
EPSILON_FLOOR = 0.05
ACT_PROBABILITY_START = 0.3
TARGET_SYNC_PERIOD = 150
REPLAY_CAPACITY = 10_000

N_CHANNELS = 4  # demand, available now, freeing by +15, freeing by +30
N_SCALARS = 6  # seats_free, trunk_free, sin/cos tick-of-day, sin/cos day-of-week


class CheckpointShapeError(ValueError):
    """Checkpoint architecture does not match the configured network."""


# ---------------------------------------------------------------------------
# action space


def action_count(radius: int = ACTION_RADIUS) -> int:
    return (2 * radius + 1) ** 2


def action_to_offset(index: int, radius: int = ACTION_RADIUS) -> tuple:
    side = 2 * radius + 1
    if not (0 <= index < side * side):
        raise ValueError(f"action index {index} out of range")
    return index // side - radius, index % side - radius


def offset_to_action(dr: int, dc: int, radius: int = ACTION_RADIUS) -> int:
    if abs(dr) > radius or abs(dc) > radius:
        raise ValueError(f"offset ({dr}, {dc}) exceeds radius {radius}")
    side = 2 * radius + 1
    return (dr + radius) * side + (dc + radius)


def action_target(grid: GridWorld, location: ZoneId, index: int, radius: int = ACTION_RADIUS) -> ZoneId:
    dr, dc = action_to_offset(index, radius)
    return grid.clamp(location.row + dr, location.col + dc)


# ---------------------------------------------------------------------------
# state encoding


@dataclass(frozen=True)
class StateSnapshot:
    channels: np.ndarray  # (N_CHANNELS, window, window)
    scalars: np.ndarray  # (N_SCALARS,)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.channels.ravel(), self.scalars])


def state_dim(window: int = WINDOW) -> int:
    return N_CHANNELS * window * window + N_SCALARS


def crop_window(arr: np.ndarray, center: ZoneId, window: int) -> np.ndarray:
    """Window x window crop centered on ``center``, zero-padded off-grid."""
    half = window // 2
    out = np.zeros((window, window))
    h, w = arr.shape
    r0, c0 = center.row - half, center.col - half
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + window, h), min(c0 + window, w)
    if rs < re and cs < ce:
        out[rs - r0 : re - r0, cs - c0 : ce - c0] = arr[rs:re, cs:ce]
    return out


def encode_state(
    grid: GridWorld,
    supply: FleetSnapshot,
    forecast: DemandForecast,
    vehicle: VehicleState,
    tick: int,
    window: int = WINDOW,
    ticks_per_day: int = 1440,
) -> StateSnapshot:
    """Deterministic per-vehicle observation: local demand/supply crops plus
    own free capacity and clock features."""
    if window % 2 == 0:
        raise ValueError("window must be odd")
    demand_next = forecast.counts[1 : min(16, forecast.counts.shape[0])].sum(axis=0)
    freeing_15 = supply.projected[1 : min(16, supply.projected.shape[0])].sum(axis=0)
    freeing_30 = supply.projected[1 : min(31, supply.projected.shape[0])].sum(axis=0)
    channels = np.stack(
        [
            crop_window(demand_next, vehicle.location, window),
            crop_window(supply.available, vehicle.location, window),
            crop_window(freeing_15, vehicle.location, window),
            crop_window(freeing_30, vehicle.location, window),
        ]
    )
    tod = 2.0 * math.pi * (tick % ticks_per_day) / ticks_per_day
    dow = 2.0 * math.pi * ((tick // ticks_per_day) % 7) / 7.0
    scalars = np.array(
        [
            float(vehicle.seats_free),
            float(vehicle.trunk_free),
            math.sin(tod),
            math.cos(tod),
            math.sin(dow),
            math.cos(dow),
        ]
    )
    return StateSnapshot(channels=channels, scalars=scalars)


# ---------------------------------------------------------------------------
# Q-function


class QNetwork:
    """Fully connected ReLU network mapping a state vector to action values."""

    def __init__(self, input_dim: int, n_actions: int, hidden: Sequence[int] = (128, 128),
                 rng: np.random.Generator | None = None):
        self.input_dim = input_dim
        self.n_actions = n_actions
        self.hidden = tuple(hidden)
        rng = rng or np.random.default_rng()
        sizes = [input_dim, *hidden, n_actions]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            scale = math.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    # -- forward ----------------------------------------------------------

    def _forward(self, x: np.ndarray) -> list:
        """Activations per layer for a (batch, input_dim) matrix."""
        acts = [x]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            acts.append(np.maximum(z, 0.0) if i < len(self.weights) - 1 else z)
        return acts

    def q_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = self._forward(x[None, :] if single else x)[-1]
        return out[0] if single else out

    # -- backward ---------------------------------------------------------

    def loss_and_gradients(self, states, actions, targets):
        """Mean squared TD error over selected actions, with its gradient."""
        X = np.asarray(states, dtype=float)
        a = np.asarray(actions, dtype=int)
        z = np.asarray(targets, dtype=float)
        n = X.shape[0]
        acts = self._forward(X)
        q = acts[-1]
        q_sel = q[np.arange(n), a]
        err = q_sel - z
        loss = float(np.mean(err**2))

        delta = np.zeros_like(q)
        delta[np.arange(n), a] = 2.0 * err / n
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for i in reversed(range(len(self.weights))):
            grads_w[i] = delta.T @ acts[i]
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * (acts[i] > 0)
        return loss, (grads_w, grads_b)

    def apply_gradients(self, grads, learning_rate: float, clip_norm: float = 10.0):
        grads_w, grads_b = grads
        if clip_norm:
            total = math.sqrt(
                sum(float((g**2).sum()) for g in grads_w) + sum(float((g**2).sum()) for g in grads_b)
            )
            if total > clip_norm:
                scale = clip_norm / total
                grads_w = [g * scale for g in grads_w]
                grads_b = [g * scale for g in grads_b]
        for w, g in zip(self.weights, grads_w):
            w -= learning_rate * g
        for b, g in zip(self.biases, grads_b):
            b -= learning_rate * g

    # -- parameters -------------------------------------------------------

    def parameters(self) -> list:
        return [*(w.copy() for w in self.weights), *(b.copy() for b in self.biases)]

    def set_parameters(self, params: Sequence[np.ndarray]):
        k = len(self.weights)
        for i, w in enumerate(params[:k]):
            if w.shape != self.weights[i].shape:
                raise CheckpointShapeError(
                    f"layer {i}: expected {self.weights[i].shape}, got {w.shape}"
                )
            self.weights[i] = w.copy()
        for i, b in enumerate(params[k:]):
            self.biases[i] = b.copy()

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.input_dim, self.n_actions, self.hidden, rng=np.random.default_rng(0))
        twin.set_parameters(self.parameters())
        return twin


# ---------------------------------------------------------------------------
# replay and targets


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    elapsed: int  # extra ticks between consecutive decisions; exponent is 1 + elapsed
    terminal: bool = False


class ReplayBuffer:
    """FIFO ring of transitions with uniform seeded sampling."""

    def __init__(self, capacity: int = REPLAY_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._data: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._data)

    def push(self, tr: Transition):
        if len(self._data) < self.capacity:
            self._data.append(tr)
        else:
            self._data[self._next] = tr
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list:
        if batch_size > len(self._data):
            raise ValueError("not enough transitions to sample")
        idx = rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idx]


def ddqn_target(tr: Transition, online: QNetwork, target: QNetwork, gamma: float) -> float:
    """Bootstrap value: online picks the action, target evaluates it."""
    if tr.terminal:
        return float(tr.reward)
    best = int(np.argmax(online.q_values(tr.next_state)))
    return float(tr.reward + gamma ** (1 + tr.elapsed) * target.q_values(tr.next_state)[best])


def ddqn_targets(batch: Sequence[Transition], online: QNetwork, target: QNetwork, gamma: float) -> np.ndarray:
    next_states = np.stack([tr.next_state for tr in batch])
    best = np.argmax(online.q_values(next_states), axis=1)
    boot = target.q_values(next_states)[np.arange(len(batch)), best]
    out = np.empty(len(batch))
    for i, tr in enumerate(batch):
        out[i] = tr.reward if tr.terminal else tr.reward + gamma ** (1 + tr.elapsed) * boot[i]
    return out


def train_step(
    buffer: ReplayBuffer,
    online: QNetwork,
    target: QNetwork,
    batch_size: int,
    learning_rate: float,
    gamma: float,
    rng: np.random.Generator,
    clip_norm: float = 10.0,
):
    """One SGD step on the mean squared TD error; None when the buffer is short."""
    if len(buffer) < batch_size:
        return None
    batch = buffer.sample(batch_size, rng)
    z = ddqn_targets(batch, online, target, gamma)
    states = np.stack([tr.state for tr in batch])
    actions = [tr.action for tr in batch]
    loss, grads = online.loss_and_gradients(states, actions, z)
    online.apply_gradients(grads, learning_rate, clip_norm)
    return loss


def sync_target(online: QNetwork, target: QNetwork, step: int, period: int = TARGET_SYNC_PERIOD) -> bool:
    """Copy online parameters into the target exactly at multiples of period."""
    if period < 1:
        raise ValueError("period must be >= 1")
    if step % period == 0:
        target.set_parameters(online.parameters())
        return True
    return False


def select_action(q: QNetwork, state: StateSnapshot | np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the action values; ties go to the lowest index."""
    vec = state.vector() if isinstance(state, StateSnapshot) else np.asarray(state, dtype=float)
    if rng.random() < epsilon:
        return int(rng.integers(q.n_actions))
    return int(np.argmax(q.q_values(vec)))


# ---------------------------------------------------------------------------
# schedules


def epsilon_at(step: int, t_n: int, floor: float = EPSILON_FLOOR) -> float:
    """Exploration rate annealed linearly from 1 to ``floor`` over t_n steps."""
    if t_n < 1:
        raise ValueError("t_n must be >= 1")
    return max(floor, 1.0 - (1.0 - floor) * step / t_n)


def act_probability_at(step: int, t_n: int, start: float = ACT_PROBABILITY_START) -> float:
    """Probability an idle vehicle acts this tick, ramped linearly to 1."""
    if t_n < 1:
        raise ValueError("t_n must be >= 1")
    return min(1.0, start + (1.0 - start) * step / t_n)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, online: QNetwork, target: QNetwork, step: int, extra: dict | None = None):
    header = {
        "format_version": CHECKPOINT_VERSION,
        "input_dim": online.input_dim,
        "hidden": list(online.hidden),
        "n_actions": online.n_actions,
        "step": step,
    }
    if extra:
        header["extra"] = extra
    arrays = {}
    for tag, net in (("online", online), ("target", target)):
        for i, p in enumerate(net.parameters()):
            arrays[f"{tag}_{i}"] = p
    np.savez(path, header=json.dumps(header), **arrays)


def load_checkpoint(path, expected: dict | None = None) -> tuple:
    """Load (online, target, header). ``expected`` may pin input_dim / hidden /
    n_actions; a mismatch raises CheckpointShapeError before any allocation."""
    with np.load(path, allow_pickle=False) as blob:
        header = json.loads(str(blob["header"]))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointShapeError(f"unsupported checkpoint version {header.get('format_version')}")
        for key in ("input_dim", "hidden", "n_actions"):
            if expected and key in expected and list(np.ravel(expected[key])) != list(np.ravel(header[key])):
                raise CheckpointShapeError(
                    f"checkpoint {key}={header[key]} but configuration expects {expected[key]}"
                )
        nets = []
        for tag in ("online", "target"):
            net = QNetwork(header["input_dim"], header["n_actions"], header["hidden"],
                           rng=np.random.default_rng(0))
            n_params = 2 * (len(header["hidden"]) + 1)
            net.set_parameters([blob[f"{tag}_{i}"] for i in range(n_params)])
            nets.append(net)
    return nets[0], nets[1], header
