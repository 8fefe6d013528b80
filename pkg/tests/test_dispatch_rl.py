import numpy as np
import pytest

from hopfleet.demand import DemandForecast
from hopfleet.dispatch_rl import (
    CheckpointShapeError,
    QNetwork,
    ReplayBuffer,
    StateSnapshot,
    Transition,
    act_probability_at,
    action_count,
    action_target,
    action_to_offset,
    crop_window,
    ddqn_target,
    ddqn_targets,
    encode_state,
    epsilon_at,
    load_checkpoint,
    offset_to_action,
    save_checkpoint,
    select_action,
    state_dim,
    sync_target,
    train_step,
)
from hopfleet.fleet import FleetSnapshot, VehicleState
from hopfleet.geo import GridWorld, ZoneId


def empty_world(width=20, height=20, horizon=30):
    grid = GridWorld(width=width, height=height)
    supply = FleetSnapshot(
        available=np.zeros((height, width)),
        projected=np.zeros((horizon + 1, height, width)),
    )
    forecast = DemandForecast(start_tick=0, counts=np.zeros((horizon + 1, height, width)))
    return grid, supply, forecast


def test_action_space_size_and_round_trip():
    assert action_count(7) == 225
    for idx in range(225):
        dr, dc = action_to_offset(idx)
        assert -7 <= dr <= 7 and -7 <= dc <= 7
        assert offset_to_action(dr, dc) == idx
    with pytest.raises(ValueError):
        offset_to_action(8, 0)


def test_action_target_clamped_to_grid():
    grid = GridWorld(width=10, height=10)
    idx = offset_to_action(-7, -7)
    assert action_target(grid, ZoneId(0, 0), idx) == ZoneId(0, 0)
    idx = offset_to_action(7, 7)
    assert action_target(grid, ZoneId(9, 9), idx) == ZoneId(9, 9)
    idx = offset_to_action(2, -1)
    assert action_target(grid, ZoneId(4, 4), idx) == ZoneId(6, 3)


def test_encode_empty_world_only_time_features():
    grid, supply, forecast = empty_world()
    v = VehicleState(id=0, location=ZoneId(10, 10))
    snap = encode_state(grid, supply, forecast, v, tick=0, ticks_per_day=1440)
    assert np.all(snap.channels == 0)
    assert snap.scalars[0] == 4.0 and snap.scalars[1] == 5.0
    assert snap.scalars[2] == pytest.approx(0.0)  # sin of tick 0
    assert snap.scalars[3] == pytest.approx(1.0)
    assert snap.vector().shape == (state_dim(),)


def test_encode_corner_zero_padded():
    grid, supply, forecast = empty_world()
    supply.available[:, :] = 1.0
    v = VehicleState(id=0, location=ZoneId(0, 0))
    snap = encode_state(grid, supply, forecast, v, tick=0)
    avail = snap.channels[1]
    assert avail[7, 7] == 1.0  # own zone at the crop center
    assert np.all(avail[:7, :] == 0.0)  # off-map rows above
    assert np.all(avail[:, :7] == 0.0)


def test_encode_demand_offset_east():
    grid, supply, forecast = empty_world()
    # 3 requests expected one step ahead, two zones east of the vehicle
    forecast.counts[1, 10, 12] = 3.0
    v = VehicleState(id=0, location=ZoneId(10, 10))
    snap = encode_state(grid, supply, forecast, v, tick=0)
    assert snap.channels[0][7, 9] == 3.0
    assert snap.channels[0].sum() == 3.0


def test_encode_deterministic():
    grid, supply, forecast = empty_world()
    supply.available[3, 4] = 2
    forecast.counts[2, 5, 5] = 1.5
    v = VehicleState(id=0, location=ZoneId(5, 5))
    a = encode_state(grid, supply, forecast, v, tick=77).vector()
    b = encode_state(grid, supply, forecast, v, tick=77).vector()
    assert np.array_equal(a, b)


def test_crop_window_identity_inside():
    arr = np.arange(100.0).reshape(10, 10)
    got = crop_window(arr, ZoneId(5, 5), 3)
    assert np.array_equal(got, arr[4:7, 4:7])


def test_select_action_greedy_and_ties():
    rng = np.random.default_rng(0)
    net = QNetwork(4, 5, hidden=(8,), rng=np.random.default_rng(1))
    s = np.ones(4)
    q = net.q_values(s)
    assert select_action(net, s, 0.0, rng) == int(np.argmax(q))

    class Flat:
        n_actions = 5

        def q_values(self, x):
            return np.zeros(5)

    assert select_action(Flat(), s, 0.0, rng) == 0


def test_select_action_epsilon_one_uniform():
    class Flat:
        n_actions = 10

        def q_values(self, x):
            return np.zeros(10)

    rng = np.random.default_rng(7)
    n = 10_000
    counts = np.zeros(10)
    for _ in range(n):
        counts[select_action(Flat(), np.zeros(2), 1.0, rng)] += 1
    expected = n / 10
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 21.67  # chi-square 99th percentile, 9 dof


class StubNet:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.n_actions = self.values.shape[-1]

    def q_values(self, x):
        return self.values


def test_ddqn_target_examples():
    tr = Transition(np.zeros(2), 0, 1.0, np.zeros(2), elapsed=1)
    online = StubNet([0.0, 5.0])  # argmax -> action 1
    target = StubNet([9.0, 4.0])  # evaluated at action 1 -> 4
    assert ddqn_target(tr, online, target, gamma=0.0) == 1.0
    assert ddqn_target(tr, online, target, gamma=0.5) == pytest.approx(1 + 0.25 * 4)


def test_ddqn_target_identical_nets_reduce_to_max():
    tr = Transition(np.zeros(2), 0, 2.0, np.zeros(2), elapsed=0)
    net = StubNet([3.0, 7.0])
    assert ddqn_target(tr, net, net, gamma=0.9) == pytest.approx(2.0 + 0.9 * 7.0)


def test_ddqn_target_decouples_selection_from_evaluation():
    # online prefers action 1; target thinks action 0 is best.
    tr = Transition(np.zeros(2), 0, 0.0, np.zeros(2), elapsed=0)
    online = StubNet([0.0, 1.0])
    target = StubNet([10.0, 2.0])
    z_double = ddqn_target(tr, online, target, gamma=1.0)
    z_single = ddqn_target(tr, target, target, gamma=1.0)
    assert z_double == pytest.approx(2.0)
    assert z_single == pytest.approx(10.0)
    assert z_double != z_single


def test_ddqn_target_terminal_skips_bootstrap():
    tr = Transition(np.zeros(2), 0, 3.5, np.zeros(2), elapsed=4, terminal=True)
    assert ddqn_target(tr, StubNet([9, 9]), StubNet([9, 9]), gamma=0.9) == 3.5


def test_ddqn_targets_batch_matches_scalar():
    rng = np.random.default_rng(3)
    online = QNetwork(6, 4, hidden=(12,), rng=np.random.default_rng(10))
    target = QNetwork(6, 4, hidden=(12,), rng=np.random.default_rng(11))
    batch = [
        Transition(rng.normal(size=6), int(rng.integers(4)), float(rng.normal()),
                   rng.normal(size=6), int(rng.integers(3)), bool(rng.random() < 0.2))
        for _ in range(16)
    ]
    z = ddqn_targets(batch, online, target, gamma=0.9)
    for i, tr in enumerate(batch):
        assert z[i] == pytest.approx(ddqn_target(tr, online, target, 0.9))


def fd_gradient(net, states, actions, targets, h=1e-6):
    grads_w = [np.zeros_like(w) for w in net.weights]
    grads_b = [np.zeros_like(b) for b in net.biases]

    def loss():
        return net.loss_and_gradients(states, actions, targets)[0]

    for w, g in zip(net.weights, grads_w):
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = w[idx]
            w[idx] = old + h
            up = loss()
            w[idx] = old - h
            down = loss()
            w[idx] = old
            g[idx] = (up - down) / (2 * h)
    for b, g in zip(net.biases, grads_b):
        for i in range(b.shape[0]):
            old = b[i]
            b[i] = old + h
            up = loss()
            b[i] = old - h
            down = loss()
            b[i] = old
            g[i] = (up - down) / (2 * h)
    return grads_w, grads_b


def rel_err(a, b):
    denom = max(float(np.abs(a).max(initial=0)), float(np.abs(b).max(initial=0)), 1e-8)
    return float(np.abs(a - b).max(initial=0)) / denom


@pytest.mark.parametrize("hidden", [(8,), (16, 8), (12, 10, 6)])
def test_gradient_check_against_finite_differences(hidden):
    rng = np.random.default_rng(99)
    net = QNetwork(7, 5, hidden=hidden, rng=rng)
    states = rng.normal(size=(6, 7))
    actions = rng.integers(0, 5, size=6)
    targets = rng.normal(size=6)
    _, (gw, gb) = net.loss_and_gradients(states, actions, targets)
    fw, fb = fd_gradient(net, states, actions, targets)
    for a, b in zip(gw, fw):
        assert rel_err(a, b) < 1e-4
    for a, b in zip(gb, fb):
        assert rel_err(a, b) < 1e-4


def test_train_step_zero_loss_leaves_params():
    rng = np.random.default_rng(5)
    net = QNetwork(4, 3, hidden=(6,), rng=np.random.default_rng(2))
    target = net.clone()
    buf = ReplayBuffer(10)
    s = rng.normal(size=4)
    s2 = rng.normal(size=4)
    # terminal transition whose reward already equals the prediction: zero error
    a = 1
    r = float(net.q_values(s)[a])
    buf.push(Transition(s, a, r, s2, 0, terminal=True))
    before = net.parameters()
    loss = train_step(buf, net, target, batch_size=1, learning_rate=0.1, gamma=0.9, rng=rng)
    assert loss == pytest.approx(0.0, abs=1e-24)
    for p, q in zip(before, net.parameters()):
        assert np.array_equal(p, q)


def test_train_step_descends_on_fixed_target():
    rng = np.random.default_rng(6)
    net = QNetwork(4, 3, hidden=(8,), rng=np.random.default_rng(3))
    target = net.clone()
    buf = ReplayBuffer(10)
    buf.push(Transition(rng.normal(size=4), 2, 5.0, rng.normal(size=4), 0, terminal=True))
    losses = [train_step(buf, net, target, 1, 0.01, 0.9, rng) for _ in range(100)]
    assert all(l2 <= l1 + 1e-12 for l1, l2 in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_train_step_underfull_buffer_noop():
    net = QNetwork(4, 3, hidden=(6,), rng=np.random.default_rng(0))
    target = net.clone()
    buf = ReplayBuffer(10)
    assert train_step(buf, net, target, 4, 0.1, 0.9, np.random.default_rng(0)) is None


def test_train_step_never_touches_target():
    rng = np.random.default_rng(8)
    net = QNetwork(4, 3, hidden=(6,), rng=np.random.default_rng(4))
    target = QNetwork(4, 3, hidden=(6,), rng=np.random.default_rng(5))
    frozen = target.parameters()
    buf = ReplayBuffer(64)
    for _ in range(32):
        buf.push(Transition(rng.normal(size=4), int(rng.integers(3)), float(rng.normal()),
                            rng.normal(size=4), 0))
    for _ in range(10):
        train_step(buf, net, target, 8, 0.05, 0.9, rng)
    for p, q in zip(frozen, target.parameters()):
        assert np.array_equal(p, q)


def test_replay_buffer_fifo_eviction():
    buf = ReplayBuffer(5)
    for i in range(8):
        buf.push(Transition(np.array([float(i)]), 0, 0.0, np.array([0.0]), 0))
    assert len(buf) == 5
    kept = sorted(tr.state[0] for tr in buf._data)
    assert kept == [3.0, 4.0, 5.0, 6.0, 7.0]


def test_sync_target_schedule():
    online = QNetwork(3, 2, hidden=(4,), rng=np.random.default_rng(1))
    target = QNetwork(3, 2, hidden=(4,), rng=np.random.default_rng(2))
    assert sync_target(online, target, step=150, period=150)
    for p, q in zip(online.parameters(), target.parameters()):
        assert np.array_equal(p, q)
    online.weights[0][0, 0] += 1.0
    assert not sync_target(online, target, step=151, period=150)
    assert target.weights[0][0, 0] != online.weights[0][0, 0]
    assert sync_target(online, target, step=1, period=1)


def test_epsilon_schedule_endpoints():
    assert epsilon_at(0, 1000) == 1.0
    assert epsilon_at(1000, 1000) == pytest.approx(0.05)
    assert epsilon_at(500, 1000) == pytest.approx(0.525)
    assert epsilon_at(5000, 1000) == pytest.approx(0.05)


def test_act_probability_schedule_endpoints():
    assert act_probability_at(0, 1000) == pytest.approx(0.3)
    assert act_probability_at(1000, 1000) == 1.0
    assert act_probability_at(500, 1000) == pytest.approx(0.65)
    assert act_probability_at(9000, 1000) == 1.0


def test_checkpoint_round_trip(tmp_path):
    online = QNetwork(6, 4, hidden=(8, 8), rng=np.random.default_rng(11))
    target = QNetwork(6, 4, hidden=(8, 8), rng=np.random.default_rng(12))
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, online, target, step=42, extra={"note": "test"})
    o2, t2, header = load_checkpoint(path)
    assert header["step"] == 42
    for p, q in zip(online.parameters(), o2.parameters()):
        assert np.array_equal(p, q)
    for p, q in zip(target.parameters(), t2.parameters()):
        assert np.array_equal(p, q)


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    online = QNetwork(6, 4, hidden=(8,), rng=np.random.default_rng(1))
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, online, online.clone(), step=0)
    with pytest.raises(CheckpointShapeError):
        load_checkpoint(path, expected={"input_dim": 7, "hidden": [8], "n_actions": 4})
    with pytest.raises(CheckpointShapeError):
        load_checkpoint(path, expected={"input_dim": 6, "hidden": [16], "n_actions": 4})
