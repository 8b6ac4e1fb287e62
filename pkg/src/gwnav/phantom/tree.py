"""Planar vessel-tree geometry: segments, zones, radii and path queries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ZONES = ("proximal", "medial", "distal")

RESAMPLE_STEP_PX = 2.0


class PhantomError(Exception):
    """Raised on phantom parse errors or geometry invariant violations."""


@dataclass(frozen=True)
class Stenosis:
    """Local lumen narrowing: radius is scaled down to `factor` at the center
    of a cosine bump of half-width `width_px` centered at arc fraction `center_t`."""

    factor: float      # in (0, 1]
    center_t: float    # arc-length fraction along the segment
    width_px: float


@dataclass
class Segment:
    id: str
    index: int                 # declaration order; used as the deterministic tie-break
    parent: str                # node id
    child: str                 # node id
    zone: str
    raw_centerline: np.ndarray  # (K, 2) as declared
    radius_start: float
    radius_end: float
    stenoses: tuple[Stenosis, ...] = ()

    # filled by _finalize(); uniform resampling at RESAMPLE_STEP_PX
    points: np.ndarray = field(default=None, repr=False)
    cum: np.ndarray = field(default=None, repr=False)       # arc length at each sample
    tangents: np.ndarray = field(default=None, repr=False)  # unit, (N, 2)
    curvature: np.ndarray = field(default=None, repr=False)  # 1/px, >= 0
    radii: np.ndarray = field(default=None, repr=False)      # effective lumen radius
    severity: np.ndarray = field(default=None, repr=False)   # 1 - stenosis scale
    length: float = 0.0

    def _finalize(self) -> None:
        pts = np.asarray(self.raw_centerline, dtype=float)
        d = np.diff(pts, axis=0)
        seglen = np.hypot(d[:, 0], d[:, 1])
        if np.any(seglen <= 0):
            raise PhantomError(f"segment {self.id}: repeated centerline point")
        cum = np.concatenate([[0.0], np.cumsum(seglen)])
        total = float(cum[-1])
        n = max(int(np.ceil(total / RESAMPLE_STEP_PX)) + 1, 3)
        s = np.linspace(0.0, total, n)
        x = np.interp(s, cum, pts[:, 0])
        y = np.interp(s, cum, pts[:, 1])
        self.points = np.stack([x, y], axis=1)
        self.cum = s
        self.length = total
        self._ds = total / (n - 1)  # actual uniform sample spacing (<= step)

        grad = np.gradient(self.points, s, axis=0)
        norms = np.hypot(grad[:, 0], grad[:, 1])
        self.tangents = grad / norms[:, None]
        # curvature = |d tangent / ds|
        dtan = np.gradient(self.tangents, s, axis=0)
        self.curvature = np.hypot(dtan[:, 0], dtan[:, 1])

        taper = self.radius_start + (self.radius_end - self.radius_start) * (s / total)
        scale = np.ones_like(s)
        for st in self.stenoses:
            c = st.center_t * total
            u = np.clip((s - c) / st.width_px, -1.0, 1.0)
            bump = 1.0 - (1.0 - st.factor) * np.cos(0.5 * np.pi * u) ** 2
            scale = np.minimum(scale, bump)
        self.radii = taper * scale
        self.severity = 1.0 - scale
        if np.any(self.radii <= 0):
            raise PhantomError(f"segment {self.id}: lumen radius <= 0")

    # -- lookups by arc position (clamped) --------------------------------
    def _idx(self, s: float) -> float:
        return float(np.clip(s, 0.0, self.length)) / self._ds

    def _interp(self, arr: np.ndarray, s: float):
        i = self._idx(s)
        lo = int(i)
        hi = min(lo + 1, len(self.cum) - 1)
        w = i - lo
        return arr[lo] * (1.0 - w) + arr[hi] * w

    def point_at(self, s: float) -> np.ndarray:
        return self._interp(self.points, s)

    def tangent_at(self, s: float) -> np.ndarray:
        t = self._interp(self.tangents, s)
        return t / np.hypot(t[0], t[1])

    def radius_at(self, s: float) -> float:
        return float(self._interp(self.radii, s))

    def curvature_at(self, s: float) -> float:
        return float(self._interp(self.curvature, s))

    def severity_at(self, s: float) -> float:
        return float(self._interp(self.severity, s))


@dataclass
class VesselTree:
    """Validated, immutable-after-load centerline tree of the phantom.

    Goal candidates live on named nodes (leaves or zone-boundary nodes);
    terminal-signal markers live on leaves. Safe for concurrent readers.
    """

    name: str
    field_size: tuple[int, int]          # (width, height) px
    mm_per_px: float
    nodes: dict[str, np.ndarray]
    segments: dict[str, Segment]
    root: str
    goals: dict[str, str]                # target name -> node id
    terminal_leaves: tuple[str, ...]     # node ids

    children: dict[str, list[str]] = field(default_factory=dict)   # node -> seg ids
    parent_seg: dict[str, str] = field(default_factory=dict)       # node -> seg id

    def __post_init__(self):
        self.children = {n: [] for n in self.nodes}
        self.parent_seg = {}
        for seg in self.segments.values():
            self.children[seg.parent].append(seg.id)
            if seg.child in self.parent_seg:
                raise PhantomError(
                    f"node {seg.child} has two incoming segments "
                    f"({self.parent_seg[seg.child]}, {seg.id}): not a tree")
            self.parent_seg[seg.child] = seg.id
        for n in self.children:
            self.children[n].sort(key=lambda sid: self.segments[sid].index)
        self._validate()

    # -- structure ---------------------------------------------------------
    def leaves(self) -> list[str]:
        return [n for n in self.nodes if not self.children[n] and n != self.root]

    def path_segments(self, node: str) -> list[str]:
        """Segment ids from the root down to `node`."""
        out = []
        cur = node
        while cur != self.root:
            sid = self.parent_seg.get(cur)
            if sid is None:
                raise PhantomError(f"node {cur} unreachable from root")
            out.append(sid)
            cur = self.segments[sid].parent
        return out[::-1]

    def node_zone(self, node: str) -> str:
        """Zone of a non-root node = zone of its incoming segment."""
        return self.segments[self.parent_seg[node]].zone

    def leaf_label(self, leaf: str) -> str:
        if leaf in self.goals.values():
            return "goal-candidate"
        if leaf in self.terminal_leaves:
            return "terminal-signal"
        return "plain-end"

    # -- validation ---------------------------------------------------------
    def _validate(self) -> None:
        for seg in self.segments.values():
            if seg.zone not in ZONES:
                raise PhantomError(f"segment {seg.id}: unknown zone {seg.zone!r}")
            for st in seg.stenoses:
                if not 0.0 < st.factor <= 1.0:
                    raise PhantomError(f"segment {seg.id}: stenosis factor outside (0,1]")
            for node, end in ((seg.parent, seg.raw_centerline[0]),
                              (seg.child, seg.raw_centerline[-1])):
                if node not in self.nodes:
                    raise PhantomError(f"segment {seg.id}: unknown node {node}")
                if np.hypot(*(self.nodes[node] - end)) > 0.5:
                    raise PhantomError(
                        f"segment {seg.id}: centerline endpoint does not meet node {node}")
        if self.root not in self.nodes:
            raise PhantomError(f"root node {self.root} undeclared")
        if self.root in self.parent_seg:
            raise PhantomError("root node has an incoming segment")

        # rooted tree: every node reachable, no cycles (incoming-degree<=1 is
        # checked above, so reachability of all nodes implies acyclicity)
        seen = {self.root}
        stack = [self.root]
        while stack:
            n = stack.pop()
            for sid in self.children[n]:
                c = self.segments[sid].child
                if c in seen:
                    raise PhantomError(f"cycle detected at node {c}")
                seen.add(c)
                stack.append(c)
        missing = set(self.nodes) - seen
        if missing:
            raise PhantomError(f"nodes unreachable from root: {sorted(missing)}")

        for leaf in self.leaves():
            labels = [leaf in self.goals.values(), leaf in self.terminal_leaves]
            if all(labels):
                raise PhantomError(f"leaf {leaf} labeled both goal and terminal")
        for t in self.terminal_leaves:
            if t not in self.leaves():
                raise PhantomError(f"terminal-signal node {t} is not a leaf")
        for name, node in self.goals.items():
            if node not in self.nodes:
                raise PhantomError(f"goal {name}: unknown node {node}")
            if node == self.root:
                raise PhantomError(f"goal {name} cannot sit on the root")

        w, h = self.field_size
        for seg in self.segments.values():
            margin = np.maximum(seg.radii, 1.0)
            if (np.any(seg.points[:, 0] - margin < 0) or np.any(seg.points[:, 1] - margin < 0)
                    or np.any(seg.points[:, 0] + margin > w) or np.any(seg.points[:, 1] + margin > h)):
                raise PhantomError(f"segment {seg.id}: lumen leaves the {w}x{h} field")

        self._check_no_crossings()

    def _check_no_crossings(self) -> None:
        """Non-adjacent centerlines must not intersect (keeps the wire body simple)."""
        segs = list(self.segments.values())
        for i, a in enumerate(segs):
            for b in segs[i + 1:]:
                if {a.parent, a.child} & {b.parent, b.child}:
                    continue
                if _polylines_intersect(a.points, b.points):
                    raise PhantomError(f"segments {a.id} and {b.id} cross")


def _polylines_intersect(p: np.ndarray, q: np.ndarray) -> bool:
    # coarse bbox pre-check
    if (p[:, 0].max() < q[:, 0].min() or q[:, 0].max() < p[:, 0].min()
            or p[:, 1].max() < q[:, 1].min() or q[:, 1].max() < p[:, 1].min()):
        return False
    d1 = q[1:] - q[:-1]
    for i in range(len(p) - 1):
        a, b = p[i], p[i + 1]
        ap = a - q[:-1]
        bp = b - q[:-1]
        cross_a = d1[:, 0] * ap[:, 1] - d1[:, 1] * ap[:, 0]
        cross_b = d1[:, 0] * bp[:, 1] - d1[:, 1] * bp[:, 0]
        ab = b - a
        qp1 = q[:-1] - a
        qp2 = q[1:] - a
        cross_q1 = ab[0] * qp1[:, 1] - ab[1] * qp1[:, 0]
        cross_q2 = ab[0] * qp2[:, 1] - ab[1] * qp2[:, 0]
        # <= catches exact-vertex touches; sub-segment bbox overlap filters
        # collinear-but-disjoint pairs
        straddle = (cross_a * cross_b <= 0) & (cross_q1 * cross_q2 <= 0)
        if np.any(straddle):
            lo_x, hi_x = min(a[0], b[0]), max(a[0], b[0])
            lo_y, hi_y = min(a[1], b[1]), max(a[1], b[1])
            overlap = ((np.minimum(q[:-1, 0], q[1:, 0]) <= hi_x)
                       & (np.maximum(q[:-1, 0], q[1:, 0]) >= lo_x)
                       & (np.minimum(q[:-1, 1], q[1:, 1]) <= hi_y)
                       & (np.maximum(q[:-1, 1], q[1:, 1]) >= lo_y))
            if np.any(straddle & overlap):
                return True
    return False
