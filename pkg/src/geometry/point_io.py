"""
ASCII point-cloud files: `x y z [nx ny nz]` lines or ASCII PLY.

Values are written with 17 significant digits so a save/load cycle
reproduces float64 coordinates exactly.
"""

from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from src.core.errors import PointCloudFormatError

PathLike = Union[str, Path]
_FMT = "%.17g"


def _rows_to_array(rows: List[List[str]], path: PathLike) -> np.ndarray:
    if not rows:
        return np.zeros((0, 3))
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (3, 6):
        raise PointCloudFormatError(f"{path}: every line needs 3 or 6 columns")
    try:
        return np.array(rows, dtype=np.float64)
    except ValueError as e:
        raise PointCloudFormatError(f"{path}: {e}") from e


def _read_ply(path: PathLike, lines: List[str]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if len(lines) < 2 or lines[1].strip() != "format ascii 1.0":
        raise PointCloudFormatError(f"{path}: only ASCII PLY is supported")
    count = None
    properties: List[str] = []
    end = None
    for i, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
        elif parts and parts[0] == "property" and count is not None:
            properties.append(parts[-1])
        elif line.strip() == "end_header":
            end = i + 1
            break
    if count is None or end is None:
        raise PointCloudFormatError(f"{path}: malformed PLY header")
    body = [line.split() for line in lines[end : end + count]]
    if len(body) != count or any(len(r) != len(properties) for r in body):
        raise PointCloudFormatError(f"{path}: expected {count} vertex rows")
    table = np.array(body, dtype=np.float64).reshape(count, len(properties))
    column = {name: i for i, name in enumerate(properties)}
    try:
        points = table[:, [column["x"], column["y"], column["z"]]]
    except KeyError:
        raise PointCloudFormatError(f"{path}: PLY vertices need x, y, z properties")
    normals = None
    if all(k in column for k in ("nx", "ny", "nz")):
        normals = table[:, [column["nx"], column["ny"], column["nz"]]]
    return points, normals


def read_points(path: PathLike) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Return (points, normals or None) from an ASCII xyz or PLY file."""
    path = Path(path)
    if not path.exists():
        raise PointCloudFormatError(f"point cloud not found: {path}")
    lines = path.read_text().splitlines()
    if lines and lines[0].strip() == "ply":
        return _read_ply(path, lines)
    rows = [line.split() for line in lines if line.strip() and not line.lstrip().startswith("#")]
    table = _rows_to_array(rows, path)
    if table.shape[1] == 6:
        return table[:, :3].copy(), table[:, 3:].copy()
    return table, None


def write_points(path: PathLike, points, normals=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    table = pts if normals is None else np.hstack([pts, np.asarray(normals, dtype=np.float64).reshape(-1, 3)])

    if path.suffix.lower() == ".ply":
        names = ["x", "y", "z"] + ([] if normals is None else ["nx", "ny", "nz"])
        header = ["ply", "format ascii 1.0", f"element vertex {len(pts)}"]
        header += [f"property double {n}" for n in names]
        header.append("end_header")
        with path.open("w") as fh:
            fh.write("\n".join(header) + "\n")
            np.savetxt(fh, table, fmt=_FMT)
        return
    with path.open("w") as fh:
        np.savetxt(fh, table, fmt=_FMT)
