"""Learning from demonstrations: demo files, ingestion into replay,
supervised pre-training and the large-margin classification loss.

Demo files come in pairs: `<stem>.episodes.jsonl` (one EpisodeRecord per
line) and `<stem>.frames.npz` (per episode `epNNNNN`: uint8 array of shape
(steps+1, window, window) holding the focus-window frame after reset and
after every step).
"""

from __future__ import annotations

import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import AgentConfig
from .env import EpisodeRecord, NavigationEnv, Observation
from .guidewire import Command, locate, select_branch
from .rainbow.replay import NStepAssembler, Transition


class DemoError(ValueError):
    """Malformed, empty or non-successful demonstration data."""


@dataclass
class DemoSet:
    episodes: list[EpisodeRecord]
    frames: list[np.ndarray]            # (steps+1, H, W) uint8 per episode
    source: str = "scripted"            # or "human-ui"
    targets: tuple[str, ...] = ()

    def __post_init__(self):
        for rec in self.episodes:
            if rec.outcome != "success":
                raise DemoError(f"demo episode for {rec.goal!r} did not succeed "
                                f"(outcome {rec.outcome!r})")
        covered = {rec.goal for rec in self.episodes}
        missing = set(self.targets) - covered
        if missing:
            raise DemoError(f"no demo episode for target(s) {sorted(missing)}")

    def count_per_target(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for rec in self.episodes:
            out[rec.goal] = out.get(rec.goal, 0) + 1
        return out


# -- file format ---------------------------------------------------------------

def demo_paths(stem: str | Path) -> tuple[Path, Path]:
    stem = Path(stem)
    return (stem.parent / (stem.name + ".episodes.jsonl"),
            stem.parent / (stem.name + ".frames.npz"))


def write_demoset(stem: str | Path, demos: DemoSet) -> None:
    jpath, fpath = demo_paths(stem)
    jpath.parent.mkdir(parents=True, exist_ok=True)
    with open(jpath, "w") as f:
        for rec in demos.episodes:
            f.write(rec.to_json() + "\n")
    with zipfile.ZipFile(fpath, "w", compression=zipfile.ZIP_DEFLATED) as z:
        for i, frames in enumerate(demos.frames):
            with z.open(f"ep{i:05d}.npy", "w") as f:
                np.lib.format.write_array(f, frames)


def append_demo(stem: str | Path, record: EpisodeRecord, frames: np.ndarray) -> int:
    """Append one successful episode to a demo file pair; returns its index."""
    if record.outcome != "success":
        raise DemoError("only successful episodes may be saved as demos")
    jpath, fpath = demo_paths(stem)
    jpath.parent.mkdir(parents=True, exist_ok=True)
    idx = 0
    if jpath.exists():
        with open(jpath) as f:
            idx = sum(1 for line in f if line.strip())
    with open(jpath, "a") as f:
        f.write(record.to_json() + "\n")
    mode = "a" if fpath.exists() else "w"
    with zipfile.ZipFile(fpath, mode, compression=zipfile.ZIP_DEFLATED) as z:
        with z.open(f"ep{idx:05d}.npy", "w") as f:
            np.lib.format.write_array(f, np.asarray(frames, dtype=np.uint8))
    return idx


def read_demoset(stem: str | Path, source: str = "human-ui",
                 targets: tuple[str, ...] = ()) -> DemoSet:
    jpath, fpath = demo_paths(stem)
    if not jpath.exists():
        raise DemoError(f"missing demo file {jpath}")
    records = []
    with open(jpath) as f:
        for line in f:
            if line.strip():
                records.append(EpisodeRecord.from_json(line))
    if not records:
        raise DemoError(f"demo file {jpath} is empty")
    with np.load(fpath) as z:
        frames = [z[f"ep{i:05d}"] for i in range(len(records))]
    for rec, fr in zip(records, frames):
        if fr.shape[0] != rec.step_count + 1:
            raise DemoError(f"frame count {fr.shape[0]} does not match "
                            f"{rec.step_count} steps for goal {rec.goal!r}")
    return DemoSet(episodes=records, frames=frames, source=source, targets=targets)


# -- ingestion ---------------------------------------------------------------

def _episode_transitions(record: EpisodeRecord, frames: np.ndarray,
                         n_step: int, gamma: float,
                         stack_size: int = 4) -> list[Transition]:
    """Reconstruct the env's frame-stacked observations and n-step fold."""
    stacks = []
    for t in range(record.step_count + 1):
        lo = max(0, t - (stack_size - 1))
        window = [frames[0]] * (stack_size - (t - lo + 1)) \
            + [frames[k] for k in range(lo, t + 1)]
        stacks.append(Observation(tuple(window)))
    asm = NStepAssembler(n_step, gamma)
    out = []
    for t, (cmd, reward, _x, _y) in enumerate(record.steps):
        done = t == record.step_count - 1
        out += asm.push(stacks[t], int(cmd), float(reward), stacks[t + 1], done,
                        is_demo=True)
    return out


def ingest_demos(demos: DemoSet, replay, cfg: AgentConfig,
                 expected_hw: int = 84) -> int:
    """Push every demo episode as n-step transitions with is_demo=True.

    Transitions are constructed identically to agent-generated ones. Returns
    the number of transitions pushed.
    """
    count = 0
    for rec, frames in zip(demos.episodes, demos.frames):
        if frames.shape[1:] != (expected_hw, expected_hw):
            raise DemoError(f"demo frames are {frames.shape[1:]}, "
                            f"expected {(expected_hw, expected_hw)}")
        for tr in _episode_transitions(rec, frames, cfg.n_step, cfg.gamma,
                                       cfg.frame_stack):
            replay.push(tr)
            count += 1
    return count


def large_margin_loss(q_values, demo_action: int, margin: float = 0.8) -> float:
    """max_a [Q(a) + margin * 1(a != demo_action)] - Q(demo_action).

    Non-negative; zero iff the demo action dominates every other action by at
    least `margin`.
    """
    q = np.asarray(q_values, dtype=float)
    bump = np.full(q.shape, margin)
    bump[demo_action] = 0.0
    return float(np.max(q + bump) - q[demo_action])


def pretrain(agent, steps: int | None = None) -> list[dict]:
    """Supervised pre-training phase: gradient steps on demo-only replay.

    The environment is untouched; the margin term is active because every
    sampled transition carries is_demo=True.
    """
    if agent.replay.demo_count() != len(agent.replay):
        raise DemoError("pretrain requires a replay containing only demos")
    steps = agent.cfg.demo_pretrain_steps if steps is None else steps
    metrics = []
    for _ in range(steps):
        m = agent.train_step()
        if m is None:
            raise DemoError("not enough demo transitions for a batch")
        metrics.append(m)
    return metrics


# -- scripted demonstrator ---------------------------------------------------------

LOOKAHEAD_PX = 14.0


def pilot_command(env: NavigationEnv) -> Command:
    """Path-following heuristic standing in for a human operator.

    Backs out of wrong branches, rotates when the upcoming bifurcation would
    select off the goal path, otherwise advances.
    """
    state = env.state
    tree = env.tree
    goal_path = env.targets.path_segments
    wp = state.path
    on_path = len(wp) <= len(goal_path) and all(
        a == b for a, b in zip(wp, goal_path))
    if not on_path:
        return Command.BACKWARD
    sid, local = locate(tree, state)
    k = len(wp) - 1
    seg = tree.segments[sid]
    if k < len(goal_path) - 1 and seg.length - local < LOOKAHEAD_PX:
        desired = goal_path[k + 1]
        if select_branch(tree, state, env.sim, node=seg.child) != desired:
            return Command.ROTATE
    return Command.FORWARD


def scripted_episode(env: NavigationEnv, goal: str, seed: int):
    """Run the scripted pilot once; returns (record, frames) on success,
    None on failure."""
    env.reset(goal, seed)
    frames = [env.last_crop_u8()]
    while not env.done:
        res = env.step(pilot_command(env))
        frames.append(env.last_crop_u8())
    if env.outcome != "success":
        return None
    return env.record(), np.stack(frames)


def generate_scripted_demos(env: NavigationEnv, targets: list[str],
                            per_target: int = 10, seed: int = 0,
                            max_attempts: int = 200) -> DemoSet:
    """Scripted stand-in for the human recording session: `per_target`
    successful episodes per target."""
    episodes, frames = [], []
    attempt_seed = seed
    for goal in targets:
        got = 0
        attempts = 0
        while got < per_target:
            attempts += 1
            if attempts > max_attempts:
                raise DemoError(f"scripted pilot cannot reach {goal!r} "
                                f"({max_attempts} attempts)")
            result = scripted_episode(env, goal, attempt_seed)
            attempt_seed += 1
            if result is None:
                continue
            rec, fr = result
            episodes.append(rec)
            frames.append(fr)
            got += 1
    return DemoSet(episodes=episodes, frames=frames, source="scripted",
                   targets=tuple(targets))
