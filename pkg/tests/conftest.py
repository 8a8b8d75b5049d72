"""Shared test helpers."""

import numpy as np

from hrteam.ppo import DemoDataset, Trajectory


class ToyTask:
    """One observable state, two actions, fixed-length episodes.

    The smallest setting where imitation is measurable: an expert that always
    picks action 0 should be recovered as a policy concentrated on action 0.
    """

    action_count = 2
    episode_len = 8

    def sample(self, rng):
        return None, 0

    def features(self, env, state) -> np.ndarray:
        return np.array([1.0])

    def step(self, env, state, action):
        nxt = state + 1
        return nxt, 0.0, nxt >= self.episode_len


def toy_expert_demos(count: int) -> DemoDataset:
    return DemoDataset(
        [Trajectory(0, [0] * ToyTask.episode_len, False) for _ in range(count)]
    )
