"""File formats: raw float32 arrays with JSON sidecars, plus PNG slice export.

Arrays are written as little-endian IEEE-754 float32, slice-major (z, y, x
for volumes; frame, row, col for projection stacks). The sidecar records
shape, spacing, origin and a SHA-256 checksum of the payload, so round trips
are bit-exact and silent corruption is caught on load.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IntegrityError, ValidationError
from .geometry import ScanGeometry
from .projector import ProjectionStack
from .volume import Volume, VoxelGrid

__all__ = [
    "write_volume",
    "read_volume",
    "write_projection_stack",
    "read_projection_stack",
    "write_slice_png",
]

_FORMAT = "cbctmotion-raw"
_VERSION = 1


def _paths(base: str | Path) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix in (".raw", ".json"):
        base = base.with_suffix("")
    return base.with_suffix(".raw"), base.with_suffix(".json")


def _write(base: str | Path, values: np.ndarray, meta: dict) -> Path:
    raw_path, side_path = _paths(base)
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    meta = dict(meta)
    meta["format"] = _FORMAT
    meta["version"] = _VERSION
    meta["dtype"] = "float32"
    meta["byte_order"] = "little"
    meta["shape"] = [int(s) for s in values.shape]
    meta["sha256"] = hashlib.sha256(payload).hexdigest()
    raw_path.parent.mkdir(parents=True, exist_ok=True)
    raw_path.write_bytes(payload)
    side_path.write_text(json.dumps(meta, indent=1) + "\n")
    return raw_path


def _read(base: str | Path) -> tuple[np.ndarray, dict]:
    raw_path, side_path = _paths(base)
    if not side_path.exists():
        raise IntegrityError(f"missing sidecar {side_path}")
    if not raw_path.exists():
        raise IntegrityError(f"missing payload {raw_path}")
    meta = json.loads(side_path.read_text())
    if meta.get("format") != _FORMAT:
        raise ValidationError(f"{side_path} is not a {_FORMAT} sidecar")
    payload = raw_path.read_bytes()
    shape = tuple(meta["shape"])
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise IntegrityError(
            f"{raw_path}: payload is {len(payload)} bytes, sidecar shape {shape} "
            f"needs {expected}"
        )
    digest = hashlib.sha256(payload).hexdigest()
    if digest != meta["sha256"]:
        raise IntegrityError(f"{raw_path}: checksum mismatch")
    values = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return values, meta


def write_volume(volume: Volume, base: str | Path) -> Path:
    """Write volume.raw + volume.json next to the given base path."""
    grid = volume.grid
    return _write(
        base,
        volume.values,
        {
            "kind": "volume",
            "index_order": "z,y,x",
            "dims": list(grid.dims),
            "voxel_size": list(grid.voxel_size),
            "origin": list(grid.origin),
        },
    )


def read_volume(base: str | Path) -> Volume:
    values, meta = _read(base)
    if meta.get("kind") != "volume":
        raise ValidationError(f"{base}: expected a volume, found kind={meta.get('kind')!r}")
    grid = VoxelGrid(
        dims=tuple(meta["dims"]),
        voxel_size=tuple(meta["voxel_size"]),
        origin=tuple(meta["origin"]),
    )
    return Volume(grid=grid, values=values.copy())


def write_projection_stack(stack: ProjectionStack, base: str | Path) -> Path:
    g = stack.geometry
    return _write(
        base,
        stack.values,
        {
            "kind": "projection_stack",
            "index_order": "frame,row,col",
            "geometry": {
                "sdd": g.sdd,
                "sad": g.sad,
                "det_rows": g.det_rows,
                "det_cols": g.det_cols,
                "pixel_pitch": g.pixel_pitch,
                "fov_radius": g.fov_radius,
                "scan_arc_deg": g.scan_arc_deg,
                "scan_duration": g.scan_duration,
                "n_frames": g.n_frames,
            },
        },
    )


def read_projection_stack(base: str | Path) -> ProjectionStack:
    values, meta = _read(base)
    if meta.get("kind") != "projection_stack":
        raise ValidationError(
            f"{base}: expected a projection stack, found kind={meta.get('kind')!r}"
        )
    geom = ScanGeometry(**meta["geometry"])
    return ProjectionStack(geometry=geom, values=values.copy())


def write_slice_png(data: np.ndarray, path: str | Path) -> Path:
    """Export one slice as 8-bit grayscale PNG, scaling [0, max] to [0, 255]."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValidationError(f"slice must be 2D, got shape {data.shape}")
    top = data.max()
    scaled = data / top if top > 0 else data
    img = Image.fromarray((np.clip(scaled, 0.0, 1.0) * 255).astype(np.uint8), mode="L")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path)
    return path
