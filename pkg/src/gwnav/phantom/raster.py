"""Grayscale rendering of the phantom field, markers and guidewire.

All drawing happens on uint8 canvases with a fixed palette derived from the
EnvConfig intensities; `Frame` exposes the [0, 1] float view. Rendering is a
pure function of its inputs: the same scene always produces identical pixels,
whether drawn full-field or windowed (coordinates are shifted by the integer
window origin before rasterization).
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from ..config import EnvConfig
from .tree import VesselTree


@dataclass(frozen=True)
class Frame:
    """Full-field grayscale image; intensities in [0, 1]."""

    pixels: np.ndarray
    width: int
    height: int

    @staticmethod
    def from_u8(u8: np.ndarray) -> "Frame":
        return Frame(pixels=u8.astype(np.float32) / 255.0,
                     width=u8.shape[1], height=u8.shape[0])


def _level(value: float) -> int:
    return int(round(value * 255.0))


class PhantomRenderer:
    """Rasterizes a vessel tree once into a static background, then draws
    per-step dynamic content (markers, wire) on copies or window crops."""

    def __init__(self, tree: VesselTree, cfg: EnvConfig | None = None):
        self.tree = tree
        self.cfg = cfg or EnvConfig()
        c = self.cfg
        self.lv_wall = _level(c.intensity_wall)
        self.lv_lumen = _level(c.intensity_lumen)
        self.lv_subgoal = _level(c.intensity_subgoal)
        self.lv_goal = _level(c.intensity_goal)
        self.lv_wire = _level(c.intensity_wire)
        self.background = self._render_background()

    def _render_background(self) -> np.ndarray:
        w, h = self.tree.field_size
        bg = np.full((h, w), self.lv_wall, dtype=np.uint8)
        for seg in self.tree.segments.values():
            pts = seg.points
            tan = seg.tangents
            normals = np.stack([-tan[:, 1], tan[:, 0]], axis=1)
            left = pts + normals * seg.radii[:, None]
            right = pts - normals * seg.radii[:, None]
            poly = np.concatenate([left, right[::-1]], axis=0)
            cv2.fillPoly(bg, [np.rint(poly).astype(np.int32)], self.lv_lumen)
        # round junctions and endpoints
        for node, xy in self.tree.nodes.items():
            radii = []
            if node in self.tree.parent_seg:
                radii.append(self.tree.segments[self.tree.parent_seg[node]].radii[-1])
            for sid in self.tree.children[node]:
                radii.append(self.tree.segments[sid].radii[0])
            if radii:
                cv2.circle(bg, tuple(np.rint(xy).astype(int)), int(round(max(radii))),
                           self.lv_lumen, thickness=-1)
        return bg

    # -- dynamic drawing ---------------------------------------------------
    def _draw(self, canvas: np.ndarray, origin: tuple[int, int],
              wire_polyline: np.ndarray | None,
              subgoal_points: list[np.ndarray],
              goal_point: np.ndarray | None) -> None:
        ox, oy = origin
        dot = self.cfg.marker_dot_px
        for p in subgoal_points:
            cv2.circle(canvas, (int(round(p[0])) - ox, int(round(p[1])) - oy),
                       dot, self.lv_subgoal, thickness=-1)
        if goal_point is not None:
            cv2.circle(canvas, (int(round(goal_point[0])) - ox,
                                int(round(goal_point[1])) - oy),
                       dot, self.lv_goal, thickness=-1)
        if wire_polyline is not None and len(wire_polyline) >= 2:
            pts = np.rint(wire_polyline).astype(np.int32)
            pts[:, 0] -= ox
            pts[:, 1] -= oy
            cv2.polylines(canvas, [pts], isClosed=False, color=self.lv_wire,
                          thickness=self.cfg.wire_thickness_px)

    def full_u8(self, wire_polyline: np.ndarray | None,
                subgoal_points: list[np.ndarray],
                goal_point: np.ndarray | None) -> np.ndarray:
        canvas = self.background.copy()
        self._draw(canvas, (0, 0), wire_polyline, subgoal_points, goal_point)
        return canvas

    def window_u8(self, topleft: tuple[int, int],
                  wire_polyline: np.ndarray | None,
                  subgoal_points: list[np.ndarray],
                  goal_point: np.ndarray | None) -> np.ndarray:
        """`window` x `window` crop with top-left corner at `topleft` (may lie
        outside the field: the overhang is padded with the wall intensity)."""
        n = self.cfg.window
        ox, oy = topleft
        h, w = self.background.shape
        canvas = np.full((n, n), self.lv_wall, dtype=np.uint8)
        x0, x1 = max(ox, 0), min(ox + n, w)
        y0, y1 = max(oy, 0), min(oy + n, h)
        if x1 > x0 and y1 > y0:
            canvas[y0 - oy:y1 - oy, x0 - ox:x1 - ox] = self.background[y0:y1, x0:x1]
        self._draw(canvas, (ox, oy), wire_polyline, subgoal_points, goal_point)
        return canvas


def rasterize(tree: VesselTree, wire_polyline: np.ndarray | None, targets,
              credited: frozenset[int] = frozenset(),
              cfg: EnvConfig | None = None,
              renderer: PhantomRenderer | None = None) -> Frame:
    """Render the full field: lumen, walls, wire, uncredited subgoals and the
    goal. Terminal triggers encode environment knowledge, not sensor data, and
    are not rendered. Deterministic for identical inputs. `wire_polyline` is
    the wire's render polyline (see guidewire.render_polyline) or None for an
    empty field."""
    r = renderer or PhantomRenderer(tree, cfg)
    subgoals = [m.point for i, m in enumerate(targets.subgoals) if i not in credited]
    return Frame.from_u8(r.full_u8(wire_polyline, subgoals, targets.goal.point))
