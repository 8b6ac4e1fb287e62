from .parser import bundled_phantom_path, load_bundled, load_phantom, parse_phantom
from .raster import Frame, PhantomRenderer, rasterize
from .targets import Marker, NavigationTargets, boundary_terminals, place_subgoals
from .tree import PhantomError, Segment, Stenosis, VesselTree, ZONES

__all__ = [
    "Frame", "Marker", "NavigationTargets", "PhantomError", "PhantomRenderer",
    "Segment", "Stenosis", "VesselTree", "ZONES", "boundary_terminals",
    "bundled_phantom_path", "load_bundled", "load_phantom", "parse_phantom",
    "place_subgoals", "rasterize",
]
