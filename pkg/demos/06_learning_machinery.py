"""The learning stack in isolation: replay, double-Q targets, schedules.

A tiny Q-network learns a fixed target to show the training loop works, and
the double estimator is contrasted with the single-network target on a
crafted two-action example.
"""

import numpy as np

from hopfleet.dispatch_rl import (
    QNetwork,
    ReplayBuffer,
    Transition,
    act_probability_at,
    ddqn_target,
    epsilon_at,
    sync_target,
    train_step,
)

rng = np.random.default_rng(0)

print("schedules over a 1000-step horizon:")
for step in (0, 250, 500, 1000, 2000):
    print(f"  step {step:4d}: epsilon {epsilon_at(step, 1000):.3f}  "
          f"act probability {act_probability_at(step, 1000):.3f}")

# double estimator vs single network on two actions
class Stub:
    def __init__(self, values):
        self.values = np.asarray(values, float)
        self.n_actions = 2

    def q_values(self, x):
        return self.values

tr = Transition(np.zeros(2), 0, reward=1.0, next_state=np.zeros(2), elapsed=1)
online, target = Stub([0.0, 5.0]), Stub([9.0, 4.0])
print("\ndouble estimator picks with the online net, evaluates with the target:")
print("  z_double =", ddqn_target(tr, online, target, gamma=0.5))
print("  z_single =", ddqn_target(tr, target, target, gamma=0.5), "(overestimates)")

# gradient descent on a fixed target drives the TD error down
net = QNetwork(4, 3, hidden=(16,), rng=rng)
frozen = net.clone()
buffer = ReplayBuffer(100)
for _ in range(50):
    buffer.push(Transition(rng.normal(size=4), int(rng.integers(3)),
                           float(rng.normal()), rng.normal(size=4), 0, terminal=True))
losses = [train_step(buffer, net, frozen, 16, 0.02, 0.9, rng) for _ in range(200)]
print(f"\ntraining on a frozen batch: loss {losses[0]:.3f} -> {losses[-1]:.3f}")
sync_target(net, frozen, step=150, period=150)
print("after sync, target equals online bit for bit:",
      all(np.array_equal(p, q) for p, q in zip(net.parameters(), frozen.parameters())))
