"""Voxel grids and reconstructed/rasterized volumes.

Array layout is slice-major: ``values[z, y, x]`` with shape (nz, ny, nx).
``origin`` is the world position (mm) of the center of voxel (0, 0, 0);
voxel (ix, iy, iz) is centered at ``origin + (ix, iy, iz) * voxel_size``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = ["VoxelGrid", "Volume"]


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned voxel lattice: dims (nx, ny, nz), isotropic spacing not required."""

    dims: tuple[int, int, int]
    voxel_size: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(d < 1 for d in self.dims):
            raise ValidationError(f"grid dims must be positive, got {self.dims}")
        if any(s <= 0 for s in self.voxel_size):
            raise ValidationError(f"voxel size must be positive, got {self.voxel_size}")

    @classmethod
    def centered(cls, dims: tuple[int, int, int], voxel_size: float | tuple[float, float, float]) -> "VoxelGrid":
        """Grid of the given shape centered on the isocenter."""
        if np.isscalar(voxel_size):
            voxel_size = (float(voxel_size),) * 3
        origin = tuple(-(n - 1) / 2.0 * s for n, s in zip(dims, voxel_size))
        return cls(dims=tuple(dims), voxel_size=tuple(voxel_size), origin=origin)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Voxel center coordinates along one axis (0=x, 1=y, 2=z)."""
        return self.origin[axis] + np.arange(self.dims[axis]) * self.voxel_size[axis]

    def voxel_centers(self) -> np.ndarray:
        """All voxel centers as an array of shape (nz, ny, nx, 3)."""
        xs, ys, zs = (self.axis_coords(a) for a in range(3))
        zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.stack([xx, yy, zz], axis=-1)


@dataclass(frozen=True)
class Volume:
    """Attenuation values (1/mm) on a voxel grid, stored values[z, y, x]."""

    grid: VoxelGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        nx, ny, nz = self.grid.dims
        if self.values.shape != (nz, ny, nx):
            raise ValidationError(
                f"values shape {self.values.shape} does not match grid dims (nz,ny,nx)="
                f"{(nz, ny, nx)}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("volume contains non-finite values")

    @classmethod
    def zeros(cls, grid: VoxelGrid) -> "Volume":
        nx, ny, nz = grid.dims
        return cls(grid=grid, values=np.zeros((nz, ny, nx), dtype=np.float32))
