"""
PCA shape manifold over stacked grid SDF vectors.

A shape code z maps to the grid vector W z + mu. Point queries never
decode the full vector: each query touches only the 8 voxels of its
trilinear stencil, so phi(x, z) costs O(8 R).
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from src.core.errors import InputError, ManifoldError
from src.geometry.sdf_grid import (
    GridSpec,
    SdfGrid,
    pack_grid_spec,
    trilinear_stencil,
    unpack_grid_spec,
)
from src.utils.observability.logging_utils import log_event
from src.utils.validators import require_finite, require_length

SMAN_MAGIC = b"SMAN"
SMAN_VERSION = 1
# magic, version, grid spec block, dimension
SMAN_HEADER_SIZE = 8 + struct.calcsize("<IIIfffff") + 4


@dataclass
class PhiEvaluation:
    """phi and both of its gradients at a batch of query points."""

    values: np.ndarray  # (N,)
    grad_x: np.ndarray  # (N, 3)
    grad_z: np.ndarray  # (N, R)
    outside: np.ndarray  # (N,) bool


class ShapeEvaluator:
    """Callable SDF of one decoded shape, evaluated sparsely through the manifold."""

    def __init__(self, manifold: "ShapeManifold", z):
        self.manifold = manifold
        self.z = manifold.check_code(z)

    @property
    def bounds(self):
        return self.manifold.spec.bounds

    def __call__(self, points) -> np.ndarray:
        return self.manifold.phi(np.asarray(points).reshape(-1, 3), self.z)


@dataclass(frozen=True)
class ShapeManifold:
    spec: GridSpec
    mean: np.ndarray  # (M,)
    basis: np.ndarray  # (M, R), orthonormal columns
    eigenvalues: np.ndarray  # (R,), descending
    total_variance: Optional[float] = None

    def __post_init__(self):
        m = self.spec.num_voxels
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        basis = np.asarray(self.basis, dtype=np.float64)
        eig = np.asarray(self.eigenvalues, dtype=np.float64).reshape(-1)
        if mean.size != m:
            raise ManifoldError(f"mean has {mean.size} entries, grid has {m} voxels")
        if basis.ndim != 2 or basis.shape != (m, eig.size):
            raise ManifoldError(f"basis shape {basis.shape} does not match ({m}, {eig.size})")
        if np.any(eig < 0) or np.any(np.diff(eig) > 0):
            raise ManifoldError("eigenvalues must be non-negative and sorted descending")
        for name, value in (("mean", mean), ("basis", basis), ("eigenvalues", eig)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dimension(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    def check_code(self, z) -> np.ndarray:
        code = require_length(z, self.dimension, "shape code", InputError)
        return require_finite(code, "shape code", InputError)

    def encode(self, grid: Union[SdfGrid, np.ndarray]) -> np.ndarray:
        """z = W^T (phi - mu)."""
        if isinstance(grid, SdfGrid):
            if grid.spec != self.spec:
                raise ManifoldError("grid spec differs from the manifold's")
            vector = grid.values
        else:
            vector = require_length(grid, self.mean.size, "grid vector", ManifoldError)
        return self.basis.T @ (vector - self.mean)

    def decode(self, z) -> np.ndarray:
        """phi = W z + mu."""
        return self.basis @ self.check_code(z) + self.mean

    def decode_grid(self, z) -> SdfGrid:
        # Linear combinations of truncated fields are only approximate SDFs.
        return SdfGrid(self.spec, self.decode(z))

    def evaluator(self, z) -> ShapeEvaluator:
        return ShapeEvaluator(self, z)

    def evaluate(self, x, z) -> PhiEvaluation:
        stencil = trilinear_stencil(self.spec, x)
        basis_rows = self.basis[stencil.indices]  # (N, 8, R)
        corner_values = self.mean[stencil.indices] + basis_rows @ self.check_code(z)
        values = np.einsum("nc,nc->n", stencil.weights, corner_values) + stencil.overshoot
        grad_x = (
            np.einsum("ncd,nc->nd", stencil.weight_grads, corner_values) + stencil.overshoot_grads
        )
        grad_z = np.einsum("nc,ncr->nr", stencil.weights, basis_rows)
        return PhiEvaluation(values, grad_x, grad_z, stencil.outside)

    def phi(self, x, z):
        values = self.evaluate(x, z).values
        return float(values[0]) if np.ndim(x) == 1 else values

    def phi_grad_z(self, x) -> np.ndarray:
        stencil = trilinear_stencil(self.spec, x)
        grad = np.einsum("nc,ncr->nr", stencil.weights, self.basis[stencil.indices])
        return grad[0] if np.ndim(x) == 1 else grad

    def phi_grad_x(self, x, z) -> np.ndarray:
        grad = self.evaluate(x, z).grad_x
        return grad[0] if np.ndim(x) == 1 else grad

    def shape_prior(self, z, eigenvalue_floor: float = 1e-12) -> float:
        """kappa(z) = sum_i (z_i / sigma_i)^2."""
        code = self.check_code(z)
        return float(np.sum(code**2 / np.maximum(self.eigenvalues, eigenvalue_floor)))

    def explained_variance_ratio(self) -> np.ndarray:
        """Cumulative fraction of training variance captured by the first r components."""
        total = self.total_variance if self.total_variance else float(np.sum(self.eigenvalues))
        if total <= 0:
            return np.ones(self.dimension)
        return np.cumsum(self.eigenvalues) / total

    def save(self, path: Union[str, Path]):
        payload = SMAN_MAGIC + struct.pack("<I", SMAN_VERSION) + pack_grid_spec(self.spec)
        payload += struct.pack("<I", self.dimension)
        payload += self.mean.astype("<f4").tobytes()
        payload += self.eigenvalues.astype("<f4").tobytes()
        payload += self.basis.astype("<f4").tobytes(order="F")
        Path(path).write_bytes(payload)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ShapeManifold":
        path = Path(path)
        if not path.exists():
            raise ManifoldError(f"manifold file not found: {path}")
        data = path.read_bytes()
        if len(data) < SMAN_HEADER_SIZE:
            raise ManifoldError(f"{path}: truncated manifold header ({len(data)} bytes)")
        if data[:4] != SMAN_MAGIC:
            raise ManifoldError(f"{path}: not an SMAN file")
        (version,) = struct.unpack_from("<I", data, 4)
        if version != SMAN_VERSION:
            raise ManifoldError(f"{path}: unsupported SMAN version {version}")
        spec, offset = unpack_grid_spec(data, 8)
        (r,) = struct.unpack_from("<I", data, offset)
        offset += 4
        m = spec.num_voxels
        if len(data) != offset + 4 * (m + r + m * r):
            raise ManifoldError(f"{path}: truncated or oversized manifold file")
        mean = np.frombuffer(data, "<f4", m, offset)
        offset += 4 * m
        eig = np.frombuffer(data, "<f4", r, offset)
        offset += 4 * r
        basis = np.frombuffer(data, "<f4", m * r, offset).reshape((m, r), order="F")
        return cls(spec, mean.astype(np.float64), basis.astype(np.float64), eig.astype(np.float64))


def _stack(grids: Sequence[SdfGrid]) -> np.ndarray:
    if len(grids) < 2:
        raise ManifoldError(f"need at least 2 training grids, got {len(grids)}")
    spec = grids[0].spec
    if any(g.spec != spec for g in grids[1:]):
        raise ManifoldError("training grids must share one GridSpec")
    return np.stack([g.values for g in grids])


def train(grids: Sequence[SdfGrid], dimension: int) -> ShapeManifold:
    """Top-`dimension` principal directions of the training grids (thin SVD)."""
    data = _stack(grids)
    n, m = data.shape
    if dimension < 1 or dimension > min(n - 1, m):
        raise ManifoldError(f"dimension must be in [1, {min(n - 1, m)}], got {dimension}")

    mean = data.mean(axis=0)
    _, singular, vt = np.linalg.svd(data - mean, full_matrices=False)
    basis = vt[:dimension].T.copy()
    # Deterministic orientation: largest-magnitude entry of each column is positive.
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(dimension)])
    basis *= np.where(signs == 0, 1.0, signs)

    variances = singular**2 / (n - 1)
    manifold = ShapeManifold(
        grids[0].spec, mean, basis, variances[:dimension], total_variance=float(variances.sum())
    )
    log_event(
        "ShapeManifold",
        {"event": "trained", "samples": n, "dimension": dimension},
        explained=float(manifold.explained_variance_ratio()[-1]),
    )
    return manifold


def reconstruction_rms(grids: Sequence[SdfGrid], dimension: int) -> np.ndarray:
    """Per-grid RMS error (metres) of decode(encode(grid)) with a rank-`dimension` manifold."""
    manifold = train(grids, dimension)
    errors = [manifold.decode(manifold.encode(g)) - g.values for g in grids]
    return np.array([np.sqrt(np.mean(e**2)) for e in errors])
