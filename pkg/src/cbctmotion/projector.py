"""Cone-beam forward projection: line integrals of a volume for a trajectory."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import TruncationWarning, ValidationError
from .geometry import ScanGeometry, Trajectory
from .volume import Volume

__all__ = [
    "ProjectionStack",
    "integrate_ray",
    "forward_project",
    "add_transmission_noise",
    "default_step",
]


@dataclass(frozen=True)
class ProjectionStack:
    """Line integrals, shape (n_frames, det_rows, det_cols), plus the geometry
    the stack was acquired with."""

    geometry: ScanGeometry
    values: np.ndarray

    def __post_init__(self) -> None:
        g = self.geometry
        expected = (g.n_frames, g.det_rows, g.det_cols)
        if self.values.shape != expected:
            raise ValidationError(
                f"stack shape {self.values.shape} does not match geometry {expected}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("projection stack contains non-finite values")
        if self.values.min() < 0:
            raise ValidationError("projection stack contains negative line integrals")


def default_step(volume: Volume) -> float:
    """Ray-marching step: half the smallest voxel pitch."""
    return 0.5 * min(volume.grid.voxel_size)


def integrate_ray(volume: Volume, source, direction, step: float | None = None) -> float:
    """Sampled line integral along source + t*direction (t >= 0), with
    trilinear interpolation and zero attenuation outside the grid."""
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if abs(norm - 1.0) > 1e-6:
        raise ValidationError(f"direction must be a unit vector, |d| = {norm:.6g}")
    if step is None:
        step = default_step(volume)
    padded = _kernels.pad_volume(volume.values)
    origin = volume.grid.origin
    voxel = volume.grid.voxel_size
    s = np.asarray(source, dtype=float)
    return float(
        _kernels._integrate_ray_padded(
            padded,
            origin[0], origin[1], origin[2],
            1.0 / voxel[0], 1.0 / voxel[1], 1.0 / voxel[2],
            s[0], s[1], s[2],
            direction[0], direction[1], direction[2],
            step,
        )
    )


def _check_fov(volume: Volume, geom: ScanGeometry, mode: str) -> None:
    """Warn or raise when nonzero attenuation lies outside the FOV cylinder."""
    if mode == "ignore":
        return
    grid = volume.grid
    xs = grid.axis_coords(0)
    ys = grid.axis_coords(1)
    r2 = ys[None, :, None] ** 2 + xs[None, None, :] ** 2
    outside = (volume.values != 0) & (r2 > geom.fov_radius**2)
    if np.any(outside):
        msg = (
            f"{int(outside.sum())} nonzero voxels lie outside the {geom.fov_radius} mm "
            "FOV cylinder; projections will be truncated"
        )
        if mode == "error":
            raise ValidationError(msg)
        warnings.warn(msg, TruncationWarning)


def forward_project(
    volume: Volume,
    traj: Trajectory,
    step: float | None = None,
    truncation: str = "warn",
) -> ProjectionStack:
    """Forward-project a volume for every frame of a trajectory.

    Pixel (u, v) of frame k holds the line integral from frame k's source
    through the pixel's ray, derived purely from the projection matrix, so
    motion-perturbed trajectories are handled identically to nominal ones.
    Output is bitwise independent of the worker count.
    """
    if truncation not in ("warn", "error", "ignore"):
        raise ValidationError(f"truncation mode must be warn/error/ignore, got {truncation!r}")
    geom = traj.geometry
    _check_fov(volume, geom, truncation)
    if step is None:
        step = default_step(volume)

    mats = traj.matrices
    n = len(traj)
    minvs = np.empty((n, 3, 3))
    sources = np.empty((n, 3))
    for k in range(n):
        M = mats[k, :, :3]
        minvs[k] = np.linalg.inv(M)
        sources[k] = -minvs[k] @ mats[k, :, 3]

    padded = _kernels.pad_volume(volume.values)
    inv_voxel = 1.0 / np.asarray(volume.grid.voxel_size, dtype=np.float64)
    out = np.empty((n, geom.det_rows, geom.det_cols), dtype=np.float64)
    _kernels.forward_project_frames(
        padded,
        np.asarray(volume.grid.origin, dtype=np.float64),
        inv_voxel,
        sources,
        minvs,
        geom.det_rows,
        geom.det_cols,
        float(step),
        out,
    )
    return ProjectionStack(geometry=geom, values=np.maximum(out, 0.0).astype(np.float32))


def add_transmission_noise(stack: ProjectionStack, i0: float, seed: int) -> ProjectionStack:
    """Poisson counting noise in the transmission domain.

    Line integrals p are converted to expected counts i0 * exp(-p), Poisson
    sampled, floored at one count, and log-converted back.
    """
    if i0 <= 0:
        raise ValidationError("i0 must be positive")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(i0 * np.exp(-stack.values.astype(np.float64)))
    noisy = np.log(i0) - np.log(np.maximum(counts, 1.0))
    return ProjectionStack(geometry=stack.geometry, values=np.maximum(noisy, 0.0).astype(np.float32))
