"""Per-goal navigation markers: subgoals, goal point, terminal triggers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import EnvConfig
from .tree import PhantomError, VesselTree


@dataclass(frozen=True)
class Marker:
    point: np.ndarray
    arc: float          # arc length from root along the goal path (triggers: entrance arc)
    radius: float


@dataclass
class NavigationTargets:
    """Markers for one episode goal. Subgoals are ordered root -> goal and each
    carries a one-time reward credit (tracked by the environment, not here)."""

    goal_name: str
    goal_node: str
    goal: Marker
    subgoals: tuple[Marker, ...]
    terminals: tuple[Marker, ...]
    path_segments: tuple[str, ...] = field(default=())
    path_length: float = 0.0


def _path_point(tree: VesselTree, path: list[str], arc: float) -> np.ndarray:
    for sid in path:
        seg = tree.segments[sid]
        if arc <= seg.length:
            return seg.point_at(arc)
        arc -= seg.length
    return tree.segments[path[-1]].point_at(tree.segments[path[-1]].length)


def _branch_entrance(tree: VesselTree, seg_id: str, depth: float) -> Marker:
    seg = tree.segments[seg_id]
    d = min(depth, 0.5 * seg.length)
    return Marker(point=seg.point_at(d), arc=d, radius=0.0)


def place_subgoals(tree: VesselTree, goal_name: str,
                   cfg: EnvConfig | None = None) -> NavigationTargets:
    """Build the marker set for a goal: a subgoal at every bifurcation on the
    root->goal path, densified to <= `subgoal_spacing_px` arc spacing, plus
    terminal triggers near the entrances of the file-designated branches."""
    cfg = cfg or EnvConfig()
    if goal_name not in tree.goals:
        raise PhantomError(f"unknown goal {goal_name!r} "
                           f"(have {sorted(tree.goals)})")
    goal_node = tree.goals[goal_name]
    path = tree.path_segments(goal_node)
    if not path:
        raise PhantomError(f"goal {goal_name!r} unreachable from root")

    # arc positions of bifurcation nodes strictly inside the path
    arcs = []
    bif_arcs = []
    total = 0.0
    for sid in path:
        seg = tree.segments[sid]
        total += seg.length
        if seg.child != goal_node and len(tree.children[seg.child]) > 1:
            bif_arcs.append(total)
    spacing = cfg.subgoal_spacing_px
    k = 1
    while k * spacing <= total + 1e-9:
        arcs.append(k * spacing)
        k += 1
    for b in bif_arcs:
        if not any(abs(b - a) < 0.5 for a in arcs):
            arcs.append(b)
    arcs.sort()

    subgoals = tuple(
        Marker(point=_path_point(tree, path, a), arc=a, radius=cfg.subgoal_radius_px)
        for a in arcs)
    goal = Marker(point=tree.nodes[goal_node].copy(), arc=total,
                  radius=cfg.goal_radius_px)

    path_set = set(path)
    terminals = []
    for leaf in tree.terminal_leaves:
        branch_seg = tree.parent_seg[leaf]
        if branch_seg in path_set:
            raise PhantomError(f"terminal branch {branch_seg} lies on the goal path")
        m = _branch_entrance(tree, branch_seg, cfg.terminal_entrance_px)
        terminals.append(Marker(point=m.point, arc=m.arc,
                                radius=cfg.terminal_radius_px))

    return NavigationTargets(goal_name=goal_name, goal_node=goal_node, goal=goal,
                             subgoals=subgoals, terminals=tuple(terminals),
                             path_segments=tuple(path), path_length=total)


def boundary_terminals(tree: VesselTree, active_zones: set[str], goal_node: str,
                       cfg: EnvConfig | None = None) -> tuple[Marker, ...]:
    """Terminal triggers at the exits of the active navigation area: one just
    inside every inactive segment hanging off an active-area node, except at
    the goal node itself."""
    cfg = cfg or EnvConfig()
    out = []
    for seg in tree.segments.values():
        if seg.zone in active_zones:
            continue
        parent = seg.parent
        if parent == goal_node:
            continue
        parent_in = (parent == tree.root) or \
            (tree.segments[tree.parent_seg[parent]].zone in active_zones)
        if parent_in:
            m = _branch_entrance(tree, seg.id, cfg.terminal_entrance_px)
            out.append(Marker(point=m.point, arc=m.arc, radius=cfg.terminal_radius_px))
    return tuple(out)
