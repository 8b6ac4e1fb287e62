"""Episodic navigation environment: reset/step protocol, subgoal-shaped
rewards, focus-window observations, terminal signals and the 500-step cap."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import guidewire as gw
from .config import EnvConfig, SimConfig
from .phantom import (NavigationTargets, PhantomRenderer, VesselTree,
                      boundary_terminals, place_subgoals)

OUTCOMES = ("ongoing", "success", "terminal-signal", "step-cap")


class ProtocolError(RuntimeError):
    """step() after the episode ended, or observe() before reset()."""


class InactiveZoneError(ValueError):
    """Requested goal lies outside the active navigation area."""


class Observation:
    """Stack of the four most recent focus-window frames (most recent last).

    Frames are shared uint8 arrays; `stack()` materializes the float32 tensor.
    """

    __slots__ = ("frames",)

    def __init__(self, frames: tuple[np.ndarray, ...]):
        self.frames = frames

    def stack(self) -> np.ndarray:
        return np.stack(self.frames).astype(np.float32) / 255.0

    def __eq__(self, other):
        return isinstance(other, Observation) and \
            all(np.array_equal(a, b) for a, b in zip(self.frames, other.frames))


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    outcome: str


@dataclass
class EpisodeRecord:
    goal: str
    seed: int
    steps: list = field(default_factory=list)   # [command, reward, tip_x, tip_y]
    outcome: str = "ongoing"
    step_count: int = 0
    time_s: float = 0.0
    total_reward: float = 0.0

    def to_json(self) -> str:
        d = {"goal": self.goal, "seed": self.seed, "steps": self.steps,
             "outcome": self.outcome, "step_count": self.step_count,
             "time_s": round(self.time_s, 4),
             "total_reward": round(self.total_reward, 6)}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(line: str) -> "EpisodeRecord":
        d = json.loads(line)
        return EpisodeRecord(goal=d["goal"], seed=d["seed"], steps=d["steps"],
                             outcome=d["outcome"], step_count=d["step_count"],
                             time_s=d["time_s"], total_reward=d["total_reward"])


def _point_segment_dist(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        return float(np.hypot(*(p - a)))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.hypot(*(p - (a + t * ab))))


class NavigationEnv:
    """Single-owner episodic environment over one phantom and active zone set.

    One instance must not be stepped concurrently; run several instances for
    parallel evaluation.
    """

    def __init__(self, tree: VesselTree, active_zones=("proximal",),
                 env_cfg: EnvConfig | None = None, sim_cfg: SimConfig | None = None):
        self.tree = tree
        self.active_zones = frozenset(active_zones)
        self.cfg = env_cfg or EnvConfig()
        self.sim = sim_cfg or SimConfig()
        self.renderer = PhantomRenderer(tree, self.cfg)
        self._targets_cache: dict[str, tuple[NavigationTargets, tuple]] = {}
        self._state: gw.GuidewireState | None = None
        self._stack: list[np.ndarray] = []
        self._record: EpisodeRecord | None = None
        self._done = True
        self._outcome = "ongoing"
        self._credited: set[int] = set()
        self._rng: np.random.Generator | None = None
        self.targets: NavigationTargets | None = None
        self._terminals: tuple = ()
        self._last_tl = (0, 0)

    # -- goals ---------------------------------------------------------------
    def valid_goals(self) -> list[str]:
        return [name for name, node in self.tree.goals.items()
                if self.tree.node_zone(node) in self.active_zones]

    def _targets_for(self, goal_name: str):
        if goal_name not in self._targets_cache:
            targets = place_subgoals(self.tree, goal_name, self.cfg)
            extra = boundary_terminals(self.tree, self.active_zones,
                                       targets.goal_node, self.cfg)
            self._targets_cache[goal_name] = (targets, targets.terminals + extra)
        return self._targets_cache[goal_name]

    # -- protocol --------------------------------------------------------------
    def reset(self, goal: str, seed: int) -> Observation:
        if goal not in self.tree.goals:
            raise InactiveZoneError(f"unknown goal {goal!r}")
        if self.tree.node_zone(self.tree.goals[goal]) not in self.active_zones:
            raise InactiveZoneError(
                f"goal {goal!r} lies outside the active zones {sorted(self.active_zones)}")
        self.targets, self._terminals = self._targets_for(goal)
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._state = gw.initial_state(self.tree, self.sim)
        self._credited = set()
        self._done = False
        self._outcome = "ongoing"
        self._record = EpisodeRecord(goal=goal, seed=seed)
        crop = self._render_crop()
        self._stack = [crop] * self.cfg.frame_stack
        return self.observe()

    def step(self, cmd: gw.Command) -> StepResult:
        if self._done or self._state is None:
            raise ProtocolError("step() on a finished or uninitialized episode")
        old_tip = gw.body_tip_point(self.tree, self._state)
        self._state = gw.apply_command(self._state, gw.Command(cmd), self.tree,
                                       self._rng, self.sim)
        new_tip = gw.body_tip_point(self.tree, self._state)

        reward = self.cfg.step_reward
        outcome = "ongoing"
        if _point_segment_dist(self.targets.goal.point, old_tip, new_tip) \
                <= self.targets.goal.radius:
            reward, outcome = 0.0, "success"
        elif any(_point_segment_dist(t.point, old_tip, new_tip) <= t.radius
                 for t in self._terminals):
            reward, outcome = self.cfg.terminal_reward, "terminal-signal"
        else:
            hit = [i for i, m in enumerate(self.targets.subgoals)
                   if i not in self._credited
                   and _point_segment_dist(m.point, old_tip, new_tip) <= m.radius]
            if hit:
                self._credited.update(hit)
                reward = 0.0

        self._record.step_count += 1
        if outcome == "ongoing" and self._record.step_count >= self.cfg.step_cap:
            outcome = "step-cap"
        self._done = outcome != "ongoing"
        self._outcome = outcome

        self._record.steps.append([int(cmd), reward,
                                   round(float(new_tip[0]), 3),
                                   round(float(new_tip[1]), 3)])
        self._record.total_reward += reward
        self._record.time_s = self._record.step_count * self.cfg.command_latency_s
        self._record.outcome = outcome

        self._stack = self._stack[1:] + [self._render_crop()]
        return StepResult(observation=self.observe(), reward=reward,
                          done=self._done, outcome=outcome)

    def observe(self) -> Observation:
        if self._state is None:
            raise ProtocolError("observe() before reset()")
        return Observation(tuple(self._stack))

    # -- rendering ----------------------------------------------------------------
    def _visible_markers(self):
        pts = [m.point for i, m in enumerate(self.targets.subgoals)
               if i not in self._credited]
        return pts, self.targets.goal.point

    def _render_crop(self) -> np.ndarray:
        n = self.cfg.window
        half = n // 2
        tip = gw.tip_point(self.tree, self._state, self.sim)
        cx, cy = int(round(tip[0])), int(round(tip[1]))
        tl = np.array([cx - half, cy - half])

        sub_pts, goal_pt = self._visible_markers()
        markers = sub_pts + [goal_pt]
        margin = self.cfg.marker_dot_px - 1

        def visible(m):
            return (tl[0] + margin <= round(m[0]) <= tl[0] + n - 1 - margin and
                    tl[1] + margin <= round(m[1]) <= tl[1] + n - 1 - margin)

        if not any(visible(m) for m in markers):
            # shift the window minimally toward the nearest uncredited marker
            dists = [float(np.hypot(*(m - tip))) for m in markers]
            m = markers[int(np.argmin(dists))]
            for axis in (0, 1):
                lo = tl[axis] + margin
                hi = tl[axis] + n - 1 - margin
                c = round(m[axis])
                if c < lo:
                    tl[axis] -= lo - c
                elif c > hi:
                    tl[axis] += c - hi

        self._last_tl = (int(tl[0]), int(tl[1]))
        poly = gw.render_polyline(self.tree, self._state, self.sim)
        return self.renderer.window_u8(self._last_tl, poly, sub_pts, goal_pt)

    def full_frame_u8(self) -> np.ndarray:
        sub_pts, goal_pt = self._visible_markers()
        poly = gw.render_polyline(self.tree, self._state, self.sim)
        return self.renderer.full_u8(poly, sub_pts, goal_pt)

    def last_crop_u8(self) -> np.ndarray:
        return self._stack[-1]

    # -- introspection (curriculum, scripted demos, tests) -------------------------
    @property
    def done(self) -> bool:
        return self._done

    @property
    def outcome(self) -> str:
        return self._outcome

    @property
    def state(self) -> gw.GuidewireState:
        return self._state

    def record(self) -> EpisodeRecord:
        return self._record

    def current_zone(self) -> str:
        sid, _ = gw.locate(self.tree, self._state)
        return self.tree.segments[sid].zone

    def check_invariants(self) -> None:
        gw.check_containment(self.tree, self._state, self.sim)
        if abs(self._state.roller_angle_deg) > self.sim.max_roller_angle_deg + 1e-9:
            raise gw.SimInvariantError("roller angle out of bounds")
        if not _frame_has_marker(self._stack[-1], self.cfg):
            raise gw.SimInvariantError("observation frame without any marker")

    def focus_window_rect(self) -> tuple[int, int, int, int]:
        """(x, y, w, h) of the last rendered focus window in field coordinates."""
        x, y = self._last_tl
        return (x, y, self.cfg.window, self.cfg.window)


def _frame_has_marker(frame: np.ndarray, cfg: EnvConfig) -> bool:
    lv_sub = int(round(cfg.intensity_subgoal * 255))
    lv_goal = int(round(cfg.intensity_goal * 255))
    return bool(np.any(frame == lv_sub) or np.any(frame == lv_goal))
