"""Guidewire response to discrete robot commands.

The wire body rides the centerline of the segments it has traversed; its arc
position is driven through a slack/transmission model that reproduces the
non-linear command-to-tip relationship: friction (curvature, stenoses, the
catheter exit region) withholds insertion as slack, which can release later in
a single burst. The pre-angled tip is a short whisker whose in-plane deflection
sweeps with the accumulated roll angle; it decides branch selection.

Angles are degrees; the in-plane convention is atan2(y, x) on image axes
(x right, y down). All randomness comes from the caller's generator, so
identical (state, command sequence, seed) yields identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .config import SimConfig
from .phantom.tree import VesselTree


class Command(IntEnum):
    FORWARD = 0
    BACKWARD = 1
    ROTATE = 2


class SimInvariantError(Exception):
    """A guidewire-state invariant failed (indicates a simulator bug)."""


@dataclass(frozen=True)
class TipMotion:
    advance_mm: float        # signed tip displacement along the path
    slack_mm: float          # slack remaining after the command
    roll_delta_deg: float    # change of the tip roll angle


@dataclass(frozen=True)
class GuidewireState:
    """Value-semantic wire state; `apply_command` returns a new instance."""

    path: tuple[str, ...]        # segment ids traversed from the root
    s_tip: float                 # tip arc position along the path (px)
    tip_roll_deg: float          # accumulated roll of the pre-angled tip
    roller_angle_deg: float      # commanded rotation at the roller side
    rotation_direction: int      # +1 / -1
    slack_mm: float              # unreleased insertion

    def tip_angle_deg(self, cfg: SimConfig) -> float:
        """In-plane deflection of the tip relative to the local centerline."""
        return cfg.tip_pre_angle_deg * math.cos(math.radians(self.tip_roll_deg))


def initial_state(tree: VesselTree, cfg: SimConfig) -> GuidewireState:
    first = tree.children[tree.root]
    if len(first) != 1:
        raise SimInvariantError("root must have exactly one outgoing segment")
    return GuidewireState(path=(first[0],), s_tip=cfg.init_insertion_px,
                          tip_roll_deg=90.0, roller_angle_deg=0.0,
                          rotation_direction=1, slack_mm=0.0)


# -- path bookkeeping -------------------------------------------------------

def _segment_starts(tree: VesselTree, path: tuple[str, ...]) -> list[float]:
    starts = [0.0]
    for sid in path[:-1]:
        starts.append(starts[-1] + tree.segments[sid].length)
    return starts


def locate(tree: VesselTree, state: GuidewireState) -> tuple[str, float]:
    """(segment id, local arc) of the tip."""
    starts = _segment_starts(tree, state.path)
    for sid, start in zip(reversed(state.path), reversed(starts)):
        if state.s_tip >= start - 1e-9:
            return sid, max(state.s_tip - start, 0.0)
    return state.path[0], state.s_tip


def body_points(tree: VesselTree, state: GuidewireState) -> np.ndarray:
    """Wire body polyline (root side -> body tip) on the traversed centerlines."""
    pts = []
    remaining = state.s_tip
    for sid in state.path:
        seg = tree.segments[sid]
        if remaining >= seg.length:
            pts.append(seg.points)
            remaining -= seg.length
        else:
            n = int(remaining / seg._ds)
            pts.append(seg.points[:n + 1])
            pts.append(seg.point_at(remaining)[None, :])
            break
    return np.concatenate(pts, axis=0)


def _rotate_vec(v: np.ndarray, deg: float) -> np.ndarray:
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def tip_heading(tree: VesselTree, state: GuidewireState, cfg: SimConfig) -> np.ndarray:
    sid, local = locate(tree, state)
    tan = tree.segments[sid].tangent_at(local)
    return _rotate_vec(tan, state.tip_angle_deg(cfg))


def _point_in_lumen(tree: VesselTree, pt: np.ndarray, seg_ids) -> bool:
    for sid in seg_ids:
        seg = tree.segments[sid]
        d = seg.points - pt
        i = int(np.argmin(d[:, 0] ** 2 + d[:, 1] ** 2))
        if np.hypot(*d[i]) <= seg.radii[i] + 0.5:
            return True
    return False


def tip_whisker(tree: VesselTree, state: GuidewireState, cfg: SimConfig) -> np.ndarray:
    """Points of the pre-angled tip, clipped to stay inside the lumen."""
    sid, local = locate(tree, state)
    base = tree.segments[sid].point_at(local)
    heading = tip_heading(tree, state, cfg)
    nearby = [sid] + list(tree.children[tree.segments[sid].child])
    parent = tree.segments[sid].parent
    if parent in tree.parent_seg:
        nearby.append(tree.parent_seg[parent])
    pts = [base]
    steps = int(cfg.tip_len_px)
    for k in range(1, steps + 1):
        p = base + heading * float(k)
        if not _point_in_lumen(tree, p, nearby):
            break
        pts.append(p)
    return np.stack(pts, axis=0)


def tip_point(tree: VesselTree, state: GuidewireState, cfg: SimConfig) -> np.ndarray:
    return tip_whisker(tree, state, cfg)[-1]


def body_tip_point(tree: VesselTree, state: GuidewireState) -> np.ndarray:
    """Distal end of the wire body (trigger probe; the whisker is sensing
    geometry, not the wire end)."""
    sid, local = locate(tree, state)
    return tree.segments[sid].point_at(local)


def render_polyline(tree: VesselTree, state: GuidewireState, cfg: SimConfig) -> np.ndarray:
    return np.concatenate([body_points(tree, state),
                           tip_whisker(tree, state, cfg)[1:]], axis=0)


# -- friction / transmission -------------------------------------------------

def friction_load(tree: VesselTree, state: GuidewireState, cfg: SimConfig) -> float:
    sid, local = locate(tree, state)
    seg = tree.segments[sid]
    fr = cfg.friction
    load = fr.curvature_coef * seg.curvature_at(local) \
        + fr.stenosis_coef * seg.severity_at(local)
    if state.s_tip < fr.catheter_len_px:
        load += fr.catheter_load
    return load


def expected_forward_advance_mm(tree: VesselTree, state: GuidewireState,
                                cfg: SimConfig) -> float:
    """Closed-form mean tip advance of a single FORWARD from this pose
    (zero accumulated slack assumed): E[T] * advance_mm."""
    load = friction_load(tree, state, cfg)
    fr = cfg.friction
    p_stall = min(fr.stall_max, fr.stall_coef * load)
    t_base = 1.0 / (1.0 + load)
    return (1.0 - p_stall) * t_base * (cfg.advance_mm + state.slack_mm)


def _effective_rotation_direction(state: GuidewireState, cfg: SimConfig) -> int:
    step = cfg.rotate_step_deg * state.rotation_direction
    if abs(state.roller_angle_deg + step) > cfg.max_roller_angle_deg + 1e-9:
        return -state.rotation_direction
    return state.rotation_direction


def propagate_tip(state: GuidewireState, cmd: Command, tree: VesselTree,
                  rng: np.random.Generator, cfg: SimConfig) -> TipMotion:
    """Slack/transmission model mapping a roller command to tip motion.

    FORWARD adds one insertion quantum to the slack, then releases
    T * slack as tip advance where T = (1 + load)^-1 with bounded
    multiplicative noise; with probability ~ load the command stalls
    entirely (T = 0) and the slack is held for a later burst. BACKWARD
    consumes slack first, then retracts the tip. ROTATE transmits a
    fraction in [1 - rotation_loss, 1] of the roller step to the tip roll.
    """
    fr = cfg.friction
    if cmd == Command.FORWARD:
        slack = state.slack_mm + cfg.advance_mm
        u_stall = rng.random()
        u_noise = rng.random()
        load = friction_load(tree, state, cfg)
        p_stall = min(fr.stall_max, fr.stall_coef * load)
        if u_stall < p_stall:
            t = 0.0
        else:
            t_base = 1.0 / (1.0 + load)
            t = t_base * (1.0 + fr.noise_mag * min(load, 1.0) * (2.0 * u_noise - 1.0))
        advance = t * slack
        return TipMotion(advance_mm=advance, slack_mm=slack - advance,
                         roll_delta_deg=0.0)
    if cmd == Command.BACKWARD:
        consumed = min(state.slack_mm, cfg.advance_mm)
        return TipMotion(advance_mm=-(cfg.advance_mm - consumed),
                         slack_mm=state.slack_mm - consumed, roll_delta_deg=0.0)
    if cmd == Command.ROTATE:
        u = rng.random()
        load = friction_load(tree, state, cfg)
        t_rot = 1.0 - fr.rotation_loss * min(load, 1.0) * u
        direction = _effective_rotation_direction(state, cfg)
        return TipMotion(advance_mm=0.0, slack_mm=state.slack_mm,
                         roll_delta_deg=cfg.rotate_step_deg * direction * t_rot)
    raise ValueError(f"unknown command {cmd!r}")


# -- branch selection ---------------------------------------------------------

def select_branch(tree: VesselTree, state: GuidewireState, cfg: SimConfig,
                  node: str | None = None) -> str:
    """Child segment whose take-off direction is angularly closest to the tip
    heading; exact ties resolve to the lower segment id (declaration order)."""
    if node is None:
        node = tree.segments[locate(tree, state)[0]].child
    children = tree.children[node]
    if not children:
        raise SimInvariantError(f"select_branch at leaf node {node}")
    heading = tip_heading(tree, state, cfg)
    href = math.atan2(heading[1], heading[0])
    best, best_delta = None, None
    for sid in children:  # sorted by declaration index
        t0 = tree.segments[sid].tangents[0]
        delta = abs(_wrap_deg(math.degrees(math.atan2(t0[1], t0[0]) - href)))
        if best is None or delta < best_delta - 1e-9:
            best, best_delta = sid, delta
    return best


def _wrap_deg(a: float) -> float:
    while a > 180.0:
        a -= 360.0
    while a <= -180.0:
        a += 360.0
    return a


# -- command application -------------------------------------------------------

def apply_command(state: GuidewireState, cmd: Command, tree: VesselTree,
                  rng: np.random.Generator, cfg: SimConfig) -> GuidewireState:
    """One discrete robot command; pure given the rng. Retracting past the
    minimum insertion clamps (no error); advancing past a leaf end clamps."""
    motion = propagate_tip(state, cmd, tree, rng, cfg)

    roller = state.roller_angle_deg
    direction = state.rotation_direction
    if cmd == Command.ROTATE:
        direction = _effective_rotation_direction(state, cfg)
        roller = roller + cfg.rotate_step_deg * direction
        if abs(roller) > cfg.max_roller_angle_deg + 1e-9:
            raise SimInvariantError("roller angle exceeded its bound")

    path, s_tip = state.path, state.s_tip
    slack = motion.slack_mm
    ds = motion.advance_mm / cfg.mm_per_px
    if ds > 0:
        path, s_tip = _advance(tree, state, path, s_tip, ds, cfg)
    elif ds < 0:
        path, s_tip = _retract(tree, path, s_tip, -ds, cfg)
        if s_tip <= cfg.min_insertion_px + 1e-9:
            slack = 0.0

    return replace(state, path=path, s_tip=s_tip, slack_mm=slack,
                   roller_angle_deg=roller, rotation_direction=direction,
                   tip_roll_deg=state.tip_roll_deg + motion.roll_delta_deg)


def _advance(tree: VesselTree, state: GuidewireState, path: tuple[str, ...],
             s_tip: float, ds: float, cfg: SimConfig) -> tuple[tuple[str, ...], float]:
    starts = _segment_starts(tree, path)
    end = starts[-1] + tree.segments[path[-1]].length
    s_new = s_tip + ds
    while s_new > end + 1e-9:
        node = tree.segments[path[-1]].child
        if not tree.children[node]:
            return path, end  # leaf: clamp, surplus push is absorbed by the wall
        probe = replace(state, path=path, s_tip=end)
        chosen = select_branch(tree, probe, cfg, node=node)
        path = path + (chosen,)
        end += tree.segments[chosen].length
    return path, min(s_new, end)


def _retract(tree: VesselTree, path: tuple[str, ...], s_tip: float, ds: float,
             cfg: SimConfig) -> tuple[tuple[str, ...], float]:
    s_new = max(s_tip - ds, cfg.min_insertion_px)
    starts = _segment_starts(tree, path)
    while len(path) > 1 and s_new < starts[len(path) - 1] - 1e-9:
        path = path[:-1]
        starts.pop()
    return path, s_new


def _lumen_samples(tree: VesselTree) -> tuple[np.ndarray, np.ndarray]:
    cached = getattr(tree, "_lumen_samples", None)
    if cached is None:
        pts = np.concatenate([s.points for s in tree.segments.values()])
        radii = np.concatenate([s.radii for s in tree.segments.values()])
        cached = (pts, radii)
        tree._lumen_samples = cached
    return cached


def check_containment(tree: VesselTree, state: GuidewireState, cfg: SimConfig) -> None:
    """Assert every wire point lies inside the lumen of some segment."""
    poly = render_polyline(tree, state, cfg)
    pts, radii = _lumen_samples(tree)
    d = np.hypot(poly[:, None, 0] - pts[None, :, 0],
                 poly[:, None, 1] - pts[None, :, 1])
    inside = (d - radii[None, :] <= 0.5).any(axis=1)
    if not inside.all():
        bad = poly[~inside][0]
        raise SimInvariantError(f"wire point {bad} outside every lumen")
