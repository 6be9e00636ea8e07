"""Numba kernels for ray marching and voxel-driven backprojection.

All kernels are deterministic for any thread count: parallel loops write
disjoint output elements and every per-element reduction runs in a fixed
order. The ray-marching kernels use fastmath for throughput; each ray is
still evaluated by exactly one thread in a fixed sample order, so outputs
are bitwise reproducible for a given build and any worker count. The
backprojector keeps strict math to preserve its double-precision
accumulation semantics across platforms.

The ray marcher samples a zero-padded copy of the volume (one voxel border),
which removes all per-sample bounds checks: rays are clipped to the unpadded
grid, so padded indices stay in range by construction.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


def pad_volume(values: np.ndarray) -> np.ndarray:
    """Volume with a one-voxel zero border, as float32 C-contiguous."""
    nz, ny, nx = values.shape
    padded = np.zeros((nz + 2, ny + 2, nx + 2), dtype=np.float32)
    padded[1:-1, 1:-1, 1:-1] = values
    return padded


@njit(cache=True, fastmath=True)
def _slab_range(lo: float, hi: float, s: float, d: float, t0: float, t1: float):
    """Intersect the running [t0, t1] ray interval with one axis slab."""
    if d != 0.0:
        ta = (lo - s) / d
        tb = (hi - s) / d
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    elif s < lo or s > hi:
        t1 = t0 - 1.0
    return t0, t1


@njit(cache=True, fastmath=True)
def _integrate_ray_padded(
    padded,
    ox: float, oy: float, oz: float,
    ivx: float, ivy: float, ivz: float,
    sx: float, sy: float, sz: float,
    dx: float, dy: float, dz: float,
    step: float,
) -> float:
    """Line integral along source + t*dir (t >= 0) through the padded grid.

    origin/inverse-voxel describe the unpadded grid; rays are clipped to it
    with a small safety margin so trilinear corners stay inside the padding.
    """
    pz, py, px = padded.shape
    nx, ny, nz = px - 2, py - 2, pz - 2
    eps = 1e-9
    t0, t1 = 0.0, 1.0e300
    t0, t1 = _slab_range(ox - 0.5 / ivx + eps, ox + (nx - 0.5) / ivx - eps, sx, dx, t0, t1)
    t0, t1 = _slab_range(oy - 0.5 / ivy + eps, oy + (ny - 0.5) / ivy - eps, sy, dy, t0, t1)
    t0, t1 = _slab_range(oz - 0.5 / ivz + eps, oz + (nz - 0.5) / ivz - eps, sz, dz, t0, t1)
    if t1 <= t0:
        return 0.0
    n = int(np.ceil((t1 - t0) / step))
    # Start position and per-sample increment in padded index coordinates.
    gx0 = (sx + (t0 + 0.5 * step) * dx - ox) * ivx + 1.0
    gy0 = (sy + (t0 + 0.5 * step) * dy - oy) * ivy + 1.0
    gz0 = (sz + (t0 + 0.5 * step) * dz - oz) * ivz + 1.0
    dgx = step * dx * ivx
    dgy = step * dy * ivy
    dgz = step * dz * ivz
    acc = 0.0
    for i in range(n):
        gx = gx0 + i * dgx
        gy = gy0 + i * dgy
        gz = gz0 + i * dgz
        ix = int(gx)
        iy = int(gy)
        iz = int(gz)
        fx = gx - ix
        fy = gy - iy
        fz = gz - iz
        c00 = padded[iz, iy, ix] * (1.0 - fx) + padded[iz, iy, ix + 1] * fx
        c01 = padded[iz, iy + 1, ix] * (1.0 - fx) + padded[iz, iy + 1, ix + 1] * fx
        c10 = padded[iz + 1, iy, ix] * (1.0 - fx) + padded[iz + 1, iy, ix + 1] * fx
        c11 = padded[iz + 1, iy + 1, ix] * (1.0 - fx) + padded[iz + 1, iy + 1, ix + 1] * fx
        acc += (c00 * (1.0 - fy) + c01 * fy) * (1.0 - fz) + (c10 * (1.0 - fy) + c11 * fy) * fz
    return acc * step


@njit(cache=True, fastmath=True, parallel=True)
def forward_project_frames(padded, origin, inv_voxel, sources, minvs, n_rows, n_cols, step, out):
    """Cone-beam forward projection of every frame.

    sources: (nf, 3) camera centers; minvs: (nf, 3, 3) inverses of the left
    3x3 projection blocks, so the ray of pixel (u, v) runs along
    minv @ (u, v, 1). Parallel over (frame, row) jobs.
    """
    nf = sources.shape[0]
    jobs = nf * n_rows
    for job in prange(jobs):
        f = job // n_rows
        r = job - f * n_rows
        sx, sy, sz = sources[f, 0], sources[f, 1], sources[f, 2]
        m = minvs[f]
        bx = m[0, 1] * r + m[0, 2]
        by = m[1, 1] * r + m[1, 2]
        bz = m[2, 1] * r + m[2, 2]
        for c in range(n_cols):
            dx = m[0, 0] * c + bx
            dy = m[1, 0] * c + by
            dz = m[2, 0] * c + bz
            norm = np.sqrt(dx * dx + dy * dy + dz * dz)
            dx /= norm
            dy /= norm
            dz /= norm
            out[f, r, c] = _integrate_ray_padded(
                padded,
                origin[0], origin[1], origin[2],
                inv_voxel[0], inv_voxel[1], inv_voxel[2],
                sx, sy, sz,
                dx, dy, dz,
                step,
            )


@njit(cache=True, fastmath=False, parallel=True)
def backproject_frames(filtered, mats, origin, voxel, fov_radius_sq, out):
    """Voxel-driven backprojection with bilinear detector sampling.

    filtered: (nf, nr, nc) filtered projections; mats: (nf, 3, 4) projection
    matrices; out: (nz, ny, nx) accumulator, one value per voxel computed as
    sum_f q_f(u, v) / depth_f^2 with voxels outside the FOV cylinder zeroed.
    The caller applies the global FDK scale. Parallel over z slabs; the frame
    loop accumulates in a fixed order for every voxel.
    """
    nf, nr, nc = filtered.shape
    nz, ny, nx = out.shape
    for iz in prange(nz):
        z = origin[2] + iz * voxel[2]
        for f in range(nf):
            P = mats[f]
            proj = filtered[f]
            uz = P[0, 2] * z + P[0, 3]
            vz = P[1, 2] * z + P[1, 3]
            wz = P[2, 2] * z + P[2, 3]
            for iy in range(ny):
                y = origin[1] + iy * voxel[1]
                uy = P[0, 1] * y + uz
                vy = P[1, 1] * y + vz
                wy = P[2, 1] * y + wz
                for ix in range(nx):
                    x = origin[0] + ix * voxel[0]
                    if x * x + y * y > fov_radius_sq:
                        continue
                    depth = P[2, 0] * x + wy
                    if depth <= 0.0:
                        continue
                    u = (P[0, 0] * x + uy) / depth
                    v = (P[1, 0] * x + vy) / depth
                    if u < 0.0 or u > nc - 1.0 or v < 0.0 or v > nr - 1.0:
                        continue
                    iu = int(u)
                    iv = int(v)
                    if iu > nc - 2:
                        iu = nc - 2
                    if iv > nr - 2:
                        iv = nr - 2
                    fu = u - iu
                    fv = v - iv
                    q = (
                        (1.0 - fv) * ((1.0 - fu) * proj[iv, iu] + fu * proj[iv, iu + 1])
                        + fv * ((1.0 - fu) * proj[iv + 1, iu] + fu * proj[iv + 1, iu + 1])
                    )
                    out[iz, iy, ix] += q / (depth * depth)
