"""Loader for the line-oriented `phantom/1` description format.

See docs/phantom_format.md for the grammar. Loading is deterministic and
validates every tree invariant before returning.
"""

from __future__ import annotations

import importlib.resources
from pathlib import Path

import numpy as np

from .tree import PhantomError, Segment, Stenosis, VesselTree

FORMAT_HEADER = "phantom/1"


def _parse_points(tokens: list[str], lineno: int) -> np.ndarray:
    pts = []
    for tok in tokens:
        try:
            x, y = tok.split(",")
            pts.append((float(x), float(y)))
        except ValueError:
            raise PhantomError(f"line {lineno}: bad point {tok!r} (expected x,y)")
    if len(pts) < 2:
        raise PhantomError(f"line {lineno}: centerline needs >= 2 points")
    return np.array(pts, dtype=float)


def parse_phantom(text: str, name_hint: str = "<string>") -> VesselTree:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise PhantomError(f"{name_hint}: missing '{FORMAT_HEADER}' header line")

    name = "unnamed"
    field_size = (480, 480)
    mm_per_px = 0.1
    root = None
    nodes: dict[str, np.ndarray] = {}
    seg_decl: dict[str, dict] = {}
    goals: dict[str, str] = {}
    terminals: list[str] = []

    def seg_of(sid: str, lineno: int) -> dict:
        if sid not in seg_decl:
            raise PhantomError(f"line {lineno}: attribute for undeclared segment {sid!r}")
        return seg_decl[sid]

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kw, args = tok[0], tok[1:]
        try:
            if kw == "name":
                name = args[0]
            elif kw == "field":
                field_size = (int(args[0]), int(args[1]))
            elif kw == "mm_per_px":
                mm_per_px = float(args[0])
            elif kw == "root":
                root = args[0]
            elif kw == "node":
                nid = args[0]
                if nid in nodes:
                    raise PhantomError(f"line {lineno}: duplicate node {nid!r}")
                nodes[nid] = np.array([float(args[1]), float(args[2])])
            elif kw == "segment":
                sid = args[0]
                if sid in seg_decl:
                    raise PhantomError(f"line {lineno}: duplicate segment {sid!r}")
                seg_decl[sid] = {"id": sid, "index": len(seg_decl),
                                 "parent": args[1], "child": args[2],
                                 "zone": None, "radius": None,
                                 "centerline": None, "stenoses": []}
            elif kw == "zone":
                seg_of(args[0], lineno)["zone"] = args[1]
            elif kw == "radius":
                seg_of(args[0], lineno)["radius"] = (float(args[1]), float(args[2]))
            elif kw == "centerline":
                seg_of(args[0], lineno)["centerline"] = _parse_points(args[1:], lineno)
            elif kw == "stenosis":
                seg_of(args[0], lineno)["stenoses"].append(
                    Stenosis(factor=float(args[1]), center_t=float(args[2]),
                             width_px=float(args[3])))
            elif kw == "goal":
                goals[args[1]] = args[0]
            elif kw == "terminal":
                terminals.append(args[0])
            else:
                raise PhantomError(f"line {lineno}: unknown directive {kw!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, PhantomError):
                raise
            raise PhantomError(f"line {lineno}: malformed {kw!r} directive: {raw.strip()!r}")

    if root is None:
        raise PhantomError(f"{name_hint}: missing 'root' directive")

    segments: dict[str, Segment] = {}
    for sid, d in seg_decl.items():
        for attr in ("zone", "radius", "centerline"):
            if d[attr] is None:
                raise PhantomError(f"segment {sid}: missing '{attr}' directive")
        seg = Segment(id=sid, index=d["index"], parent=d["parent"], child=d["child"],
                      zone=d["zone"], raw_centerline=d["centerline"],
                      radius_start=d["radius"][0], radius_end=d["radius"][1],
                      stenoses=tuple(d["stenoses"]))
        seg._finalize()
        segments[sid] = seg

    return VesselTree(name=name, field_size=field_size, mm_per_px=mm_per_px,
                      nodes=nodes, segments=segments, root=root,
                      goals=goals, terminal_leaves=tuple(terminals))


def load_phantom(path: str | Path) -> VesselTree:
    """Parse and validate a phantom description file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PhantomError(f"cannot read {path}: {exc}")
    return parse_phantom(text, name_hint=str(path))


def bundled_phantom_path(name: str = "lad_2d") -> Path:
    """Path of a phantom asset shipped with the package."""
    res = importlib.resources.files("gwnav") / "assets" / f"{name}.phantom"
    return Path(str(res))


def load_bundled(name: str = "lad_2d") -> VesselTree:
    return load_phantom(bundled_phantom_path(name))
