from .rendering import Camera, DepthMap, backproject, extract_surface_points, render_depth
from .sdf_grid import (
    GridSpec,
    SdfGrid,
    build_sdf_from_points,
    read_sdf,
    trilinear,
    trilinear_gradient,
    trilinear_stencil,
    write_sdf,
)
