"""
Truncated signed distance fields on a regular voxel lattice.

Values are stored flat in x-fastest order (then y, then z). The canonical
object frame has x lateral, y vertical (positive down) and z longitudinal.
Queries outside the interpolable interior are clamped onto it and the
Euclidean overshoot is added to the interpolated value.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from src.core.errors import (
    GridSpecError,
    InputError,
    InteriorUndeterminedError,
    OutOfGridError,
)
from src.utils.observability.logging_utils import log_event
from src.utils.validators import as_points

SDF_MAGIC = b"SDFG"
SDF_VERSION = 1
_HEADER = struct.Struct("<4sIIIIfffff")

# Corner c of a cell sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
CORNER_OFFSETS = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)], dtype=np.int64)


@dataclass(frozen=True)
class GridSpec:
    """Lattice geometry: voxel counts, voxel size, centre of voxel (0,0,0), truncation."""

    dims: Tuple[int, int, int]
    voxel_size: float
    origin: Tuple[float, float, float]
    truncation: float

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 2 for d in dims):
            raise GridSpecError(f"grid dims must be three integers >= 2, got {self.dims}")
        if not np.isfinite(self.voxel_size) or self.voxel_size <= 0:
            raise GridSpecError(f"voxel_size must be positive, got {self.voxel_size}")
        if not np.isfinite(self.truncation) or self.truncation < self.voxel_size:
            raise GridSpecError(
                f"truncation ({self.truncation}) must be at least voxel_size ({self.voxel_size})"
            )
        origin = tuple(float(o) for o in self.origin)
        if len(origin) != 3 or not np.all(np.isfinite(origin)):
            raise GridSpecError(f"origin must be a finite 3-vector, got {self.origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))
        object.__setattr__(self, "truncation", float(self.truncation))

    @classmethod
    def centered(
        cls,
        dims: Tuple[int, int, int],
        voxel_size: float,
        truncation: float,
        center: Tuple[float, float, float] = (0.0, 0.0, 0.0),
    ) -> "GridSpec":
        """Lattice whose voxel centres are symmetric about `center`."""
        half = (np.asarray(dims, dtype=np.float64) - 1.0) * 0.5 * voxel_size
        origin = np.asarray(center, dtype=np.float64) - half
        return cls(tuple(dims), voxel_size, tuple(origin.tolist()), truncation)

    @classmethod
    def from_settings(cls, settings) -> "GridSpec":
        return cls.centered(settings.dims, settings.voxel_size, settings.truncation, settings.center)

    @property
    def num_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + (np.asarray(self.dims, dtype=np.float64) - 1.0) * self.voxel_size

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lower, self.upper

    def flat_index(self, i, j, k):
        nx, ny, _ = self.dims
        return np.asarray(i) + nx * (np.asarray(j) + ny * np.asarray(k))

    def voxel_center(self, i: int, j: int, k: int) -> np.ndarray:
        return self.lower + np.array([i, j, k], dtype=np.float64) * self.voxel_size

    def centers(self) -> np.ndarray:
        """(M, 3) voxel centres in flat x-fastest order."""
        nx, ny, nz = self.dims
        k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
        ijk = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1).astype(np.float64)
        return self.lower + ijk * self.voxel_size


@dataclass
class TrilinearStencil:
    """The 8 corner indices and weights of each query, plus exterior overshoot terms."""

    indices: np.ndarray  # (N, 8) flat voxel indices
    weights: np.ndarray  # (N, 8)
    weight_grads: np.ndarray  # (N, 8, 3) d weight / d x, per metre
    overshoot: np.ndarray  # (N,) distance from the query to its clamped position
    overshoot_grads: np.ndarray  # (N, 3)
    outside: np.ndarray  # (N,) bool

    def interpolate(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("nc,nc->n", self.weights, values[self.indices]) + self.overshoot

    def gradient(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("ncd,nc->nd", self.weight_grads, values[self.indices]) + self.overshoot_grads


def trilinear_stencil(spec: GridSpec, points) -> TrilinearStencil:
    x = as_points(points)
    lower, upper = spec.bounds
    dims = np.asarray(spec.dims, dtype=np.int64)
    h = spec.voxel_size

    clamped = np.clip(x, lower, upper)
    delta = x - clamped
    overshoot = np.linalg.norm(delta, axis=1)
    outside = overshoot > 0.0
    safe = np.where(outside, overshoot, 1.0)
    overshoot_grads = np.where(outside[:, None], delta / safe[:, None], 0.0)

    g = (clamped - lower) / h
    base = np.clip(np.floor(g).astype(np.int64), 0, dims - 2)
    frac = g - base
    # Clamped axes do not move the interior sample.
    active = ((x >= lower) & (x <= upper)).astype(np.float64)

    offsets = CORNER_OFFSETS[None, :, :]
    axis_w = np.where(offsets == 1, frac[:, None, :], 1.0 - frac[:, None, :])
    axis_dw = np.where(offsets == 1, 1.0, -1.0) * (active[:, None, :] / h)

    weights = axis_w.prod(axis=2)
    weight_grads = np.empty(axis_w.shape, dtype=np.float64)
    weight_grads[..., 0] = axis_dw[..., 0] * axis_w[..., 1] * axis_w[..., 2]
    weight_grads[..., 1] = axis_w[..., 0] * axis_dw[..., 1] * axis_w[..., 2]
    weight_grads[..., 2] = axis_w[..., 0] * axis_w[..., 1] * axis_dw[..., 2]

    corner = base[:, None, :] + offsets
    indices = spec.flat_index(corner[..., 0], corner[..., 1], corner[..., 2])
    return TrilinearStencil(indices, weights, weight_grads, overshoot, overshoot_grads, outside)


def _check_policy(stencil: TrilinearStencil, policy: str):
    if policy == "raise" and np.any(stencil.outside):
        count = int(stencil.outside.sum())
        raise OutOfGridError(f"{count} query point(s) outside the grid interior")
    if policy not in ("clamp", "raise"):
        raise InputError(f"unknown out-of-grid policy '{policy}'")


@dataclass(frozen=True)
class SdfGrid:
    """Signed distances (metres) sampled at the voxel centres of `spec`."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).reshape(-1))
        if values.size != self.spec.num_voxels:
            raise GridSpecError(
                f"expected {self.spec.num_voxels} values for dims {self.spec.dims}, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise GridSpecError("grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.spec.bounds

    def volume(self) -> np.ndarray:
        """Values as an (nz, ny, nx) array."""
        nx, ny, nz = self.spec.dims
        return self.values.reshape(nz, ny, nx)

    def value_at(self, i: int, j: int, k: int) -> float:
        return float(self.values[int(self.spec.flat_index(i, j, k))])

    def is_truncated(self, atol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.values)) <= self.spec.truncation + atol)

    def check_truncation(self):
        if not self.is_truncated():
            raise GridSpecError(
                f"grid values exceed truncation {self.spec.truncation}: max |value| = "
                f"{np.max(np.abs(self.values))}"
            )

    def __call__(self, points) -> np.ndarray:
        return trilinear_stencil(self.spec, points).interpolate(self.values)


def _maybe_scalar(x, result):
    if np.ndim(x) == 1:
        return result[0]
    return result


def trilinear(grid: SdfGrid, x, policy: str = "clamp", return_outside: bool = False):
    """Trilinear blend of the 8 enclosing voxel values."""
    stencil = trilinear_stencil(grid.spec, x)
    _check_policy(stencil, policy)
    values = stencil.interpolate(grid.values)
    if np.ndim(x) == 1:
        values = float(values[0])
        outside = bool(stencil.outside[0])
    else:
        outside = stencil.outside
    if return_outside:
        return values, outside
    return values


def trilinear_gradient(grid: SdfGrid, x, policy: str = "clamp") -> np.ndarray:
    """Analytic spatial gradient of `trilinear` (per metre)."""
    stencil = trilinear_stencil(grid.spec, x)
    _check_policy(stencil, policy)
    return _maybe_scalar(x, stencil.gradient(grid.values))


def _axis_ray_votes(spec: GridSpec, points: np.ndarray) -> np.ndarray:
    """Inside flags per voxel: at least five of six axis rays hit an occupied voxel."""
    nx, ny, nz = spec.dims
    occupied = np.zeros((nz, ny, nx), dtype=bool)
    ijk = np.rint((points - spec.lower) / spec.voxel_size).astype(np.int64)
    ijk = np.clip(ijk, 0, np.asarray(spec.dims) - 1)
    occupied[ijk[:, 2], ijk[:, 1], ijk[:, 0]] = True

    votes = np.zeros(occupied.shape, dtype=np.int64)
    for axis in range(3):
        behind = np.logical_or.accumulate(occupied, axis=axis)
        ahead = np.flip(np.logical_or.accumulate(np.flip(occupied, axis=axis), axis=axis), axis=axis)
        votes += behind.astype(np.int64) + ahead.astype(np.int64)
    inside = (votes >= 5) & ~occupied
    return inside.reshape(-1)


def build_sdf_from_points(
    points,
    spec: GridSpec,
    normals=None,
    sign_oracle: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SdfGrid:
    """
    Truncated SDF from surface samples.

    Each voxel stores the distance to the closest sample, clamped to
    +-truncation. The sign comes from `sign_oracle` when given, otherwise
    from the nearest sample's outward normal, otherwise from axis-ray voting.
    """
    pts = as_points(points)
    if len(pts) == 0:
        raise InputError("empty point set")
    margin = spec.truncation
    if np.any(pts < spec.lower - margin - 1e-9) or np.any(pts > spec.upper + margin + 1e-9):
        raise InputError("surface samples extend beyond the grid bounds plus truncation margin")

    centers = spec.centers()
    tree = cKDTree(pts)
    distance, nearest = tree.query(centers)

    if sign_oracle is not None:
        signs = np.where(np.asarray(sign_oracle(centers)) < 0, -1.0, 1.0)
    elif normals is not None:
        n = as_points(normals, name="normals")
        if len(n) != len(pts):
            raise InputError(f"got {len(n)} normals for {len(pts)} points")
        if not np.any(np.linalg.norm(n, axis=1) > 0):
            raise InteriorUndeterminedError()
        dot = np.einsum("nd,nd->n", centers - pts[nearest], n[nearest])
        signs = np.where(dot < 0.0, -1.0, 1.0)
    else:
        signs = np.where(_axis_ray_votes(spec, pts), -1.0, 1.0)

    values = np.clip(signs * distance, -spec.truncation, spec.truncation)
    grid = SdfGrid(spec, values)
    grid.check_truncation()
    log_event(
        "SdfGrid",
        {"event": "built", "points": len(pts), "voxels": spec.num_voxels},
        level="debug",
        inside_fraction=float(np.mean(values < 0)),
    )
    return grid


def _header_bytes(spec: GridSpec, magic: bytes, version: int) -> bytes:
    nx, ny, nz = spec.dims
    ox, oy, oz = spec.origin
    return _HEADER.pack(magic, version, nx, ny, nz, spec.voxel_size, ox, oy, oz, spec.truncation)


def pack_grid_spec(spec: GridSpec) -> bytes:
    """GridSpec block shared by the SDF and manifold formats (without magic/version)."""
    return _header_bytes(spec, SDF_MAGIC, SDF_VERSION)[8:]


def unpack_grid_spec(buffer: bytes, offset: int) -> Tuple[GridSpec, int]:
    block = struct.Struct("<IIIfffff")
    nx, ny, nz, voxel, ox, oy, oz, trunc = block.unpack_from(buffer, offset)
    spec = GridSpec((nx, ny, nz), float(voxel), (float(ox), float(oy), float(oz)), float(trunc))
    return spec, offset + block.size


def write_sdf(path: Union[str, Path], grid: SdfGrid):
    payload = _header_bytes(grid.spec, SDF_MAGIC, SDF_VERSION)
    payload += grid.values.astype("<f4").tobytes()
    Path(path).write_bytes(payload)


def read_sdf(path: Union[str, Path]) -> SdfGrid:
    if not Path(path).exists():
        raise InputError(f"SDF file not found: {path}")
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != SDF_MAGIC:
        raise InputError(f"{path}: not an SDFG file")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != SDF_VERSION:
        raise InputError(f"{path}: unsupported SDFG version {version}")
    spec, offset = unpack_grid_spec(data, 8)
    expected = offset + 4 * spec.num_voxels
    if len(data) != expected:
        raise InputError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4", count=spec.num_voxels, offset=offset)
    return SdfGrid(spec, values.astype(np.float64))
