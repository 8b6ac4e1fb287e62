"""Deterministic re-simulation of recorded episodes (trajectory export)."""

from __future__ import annotations

import numpy as np

from . import guidewire as gw
from .env import EpisodeRecord, NavigationEnv
from .guidewire import Command


class IntegrityError(RuntimeError):
    """Replay diverged from the recorded episode (wrong seed/config/phantom)."""


def replay_episode(record: EpisodeRecord, seed: int, env: NavigationEnv,
                   tol_px: float = 1e-3) -> np.ndarray:
    """Re-simulate a recorded episode and return the tip trajectory polyline
    (initial tip plus one point per step). Raises IntegrityError when the
    recorded tip positions, rewards or outcome do not reproduce."""
    env.reset(record.goal, seed)
    traj = [gw.body_tip_point(env.tree, env.state)]
    for i, (cmd, reward, x, y) in enumerate(record.steps):
        if env.done:
            raise IntegrityError(f"episode ended early at step {i}")
        res = env.step(Command(int(cmd)))
        tip = gw.body_tip_point(env.tree, env.state)
        if abs(res.reward - reward) > 1e-9:
            raise IntegrityError(
                f"step {i}: reward {res.reward} != recorded {reward}")
        if abs(round(float(tip[0]), 3) - x) > tol_px or \
                abs(round(float(tip[1]), 3) - y) > tol_px:
            raise IntegrityError(
                f"step {i}: tip {tip} != recorded ({x}, {y})")
        traj.append(tip)
    if env.outcome != record.outcome:
        raise IntegrityError(
            f"outcome {env.outcome!r} != recorded {record.outcome!r}")
    return np.asarray(traj)
