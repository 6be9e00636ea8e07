"""Analytic dental-head phantoms built from ellipsoids, cylinders and spheres.

A phantom is a list of primitives combined additively/subtractively; the
attenuation at a point is the clamped signed sum over primitives containing
it. Evaluation at arbitrary points and voxel-grid rasterization share one
code path, so the point evaluator is an exact oracle for the rasterizer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .volume import Volume, VoxelGrid

__all__ = [
    "SOFT_TISSUE_MU",
    "BONE_MU",
    "TOOTH_MU",
    "METAL_MU",
    "Primitive",
    "PhantomSpec",
    "AugmentSpec",
    "default_phantom",
    "augment",
    "rasterize",
    "sample_attenuation",
    "bounding_radius",
    "phantom_to_json",
    "phantom_from_json",
]

# Representative monochromatic attenuation values, 1/mm.
SOFT_TISSUE_MU = 0.02
BONE_MU = 0.05
TOOTH_MU = 0.08
METAL_MU = 1.0

_KIND_SCALES = {"small": 0.88, "medium": 1.0, "large": 1.1}


@dataclass(frozen=True)
class Primitive:
    """One solid: 'sphere' (size=(r,)), 'ellipsoid' (size=semi-axes), or
    'cylinder' (size=(radius, half_length), axis = local z of ``orientation``).

    ``orientation`` maps world offsets into the primitive frame (rows are the
    local axes expressed in world coordinates).
    """

    shape: str
    center: tuple[float, float, float]
    size: tuple[float, ...]
    attenuation: float
    additive: bool = True
    orientation: tuple[tuple[float, float, float], ...] = (
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 0.0, 1.0),
    )

    def __post_init__(self) -> None:
        if self.shape not in ("sphere", "ellipsoid", "cylinder"):
            raise ValidationError(f"unknown primitive shape {self.shape!r}")
        expected = {"sphere": 1, "ellipsoid": 3, "cylinder": 2}[self.shape]
        if len(self.size) != expected:
            raise ValidationError(f"{self.shape} needs {expected} size values, got {self.size}")
        if any(s <= 0 for s in self.size):
            raise ValidationError(f"primitive sizes must be positive, got {self.size}")
        if self.attenuation < 0:
            raise ValidationError("attenuation must be non-negative")

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership for an (N, 3) array of world points."""
        local = (np.asarray(points) - np.array(self.center)) @ np.array(self.orientation).T
        if self.shape == "sphere":
            return np.einsum("ij,ij->i", local, local) <= self.size[0] ** 2
        if self.shape == "ellipsoid":
            scaled = local / np.array(self.size)
            return np.einsum("ij,ij->i", scaled, scaled) <= 1.0
        radius, half_len = self.size
        radial = local[:, 0] ** 2 + local[:, 1] ** 2
        return (radial <= radius**2) & (np.abs(local[:, 2]) <= half_len)

    def extent(self) -> float:
        """Radius of the smallest origin-centered ball around this primitive's
        own bounding ball."""
        if self.shape == "sphere":
            reach = self.size[0]
        elif self.shape == "ellipsoid":
            reach = max(self.size)
        else:
            reach = math.hypot(self.size[0], self.size[1])
        return float(np.linalg.norm(self.center)) + reach


@dataclass(frozen=True)
class PhantomSpec:
    """A phantom: primitives plus the construction seed and metal flag."""

    primitives: tuple[Primitive, ...]
    seed: int = 0
    metal: bool = False

    def __post_init__(self) -> None:
        if self.metal:
            beads = [p for p in self.primitives if p.attenuation >= 10 * BONE_MU]
            if len(beads) < 2:
                raise ValidationError("metal phantom requires >= 2 high-attenuation inserts")


@dataclass(frozen=True)
class AugmentSpec:
    """Similarity + rigid augmentation: scale about the origin, then rotate
    (Rz @ Ry @ Rx of the three angles), then translate."""

    scale: float = 1.0
    rotation_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not 0.8 <= self.scale <= 1.2:
            raise ValidationError(f"scale {self.scale} outside [0.8, 1.2]")
        if any(abs(a) > 5.0 for a in self.rotation_deg):
            raise ValidationError(f"rotations {self.rotation_deg} exceed 5 degrees")
        if any(abs(t) > 5.0 for t in self.translation_mm):
            raise ValidationError(f"translations {self.translation_mm} exceed 5 mm")

    def rotation_matrix(self) -> np.ndarray:
        ax, ay, az = (math.radians(a) for a in self.rotation_deg)
        cx, sx = math.cos(ax), math.sin(ax)
        cy, sy = math.cos(ay), math.sin(ay)
        cz, sz = math.cos(az), math.sin(az)
        Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return Rz @ Ry @ Rx


def _arch_positions(n: int, radius: float, y_offset: float, half_angle_deg: float) -> list[tuple[float, float]]:
    """Points along a dental-arch curve (opening toward +y), in the xy-plane."""
    angles = np.linspace(-math.radians(half_angle_deg), math.radians(half_angle_deg), n)
    return [(radius * math.sin(a), y_offset + radius * math.cos(a)) for a in angles]


def default_phantom(kind: str, metal: bool = False, seed: int = 0) -> PhantomSpec:
    """Deterministic head phantom: skull shell, soft tissue, jaw arches,
    14 teeth along the dental arch, and optional metal bead inserts.

    ``kind`` in {'small', 'medium', 'large'} scales the whole anatomy; the
    seed jitters tooth sizes/positions and picks which teeth carry metal.
    """
    if kind not in _KIND_SCALES:
        raise ValidationError(f"kind must be one of {sorted(_KIND_SCALES)}, got {kind!r}")
    s = _KIND_SCALES[kind]
    rng = np.random.default_rng(seed)
    prims: list[Primitive] = []

    # Soft tissue envelope and the cranial shell (outer bone minus inner cavity).
    prims.append(Primitive("ellipsoid", (0.0, 0.0, 0.0), (38.0 * s, 34.0 * s, 36.0 * s), SOFT_TISSUE_MU))
    prims.append(Primitive("ellipsoid", (0.0, 0.0, 6.0 * s), (33.0 * s, 29.0 * s, 27.0 * s), BONE_MU))
    prims.append(
        Primitive("ellipsoid", (0.0, 0.0, 7.0 * s), (28.5 * s, 24.5 * s, 22.0 * s), BONE_MU, additive=False)
    )

    # Mandible (lower, wider) and maxilla (upper) arches from overlapping
    # vertical cylinders.
    for x, y in _arch_positions(7, 24.0 * s, -6.0 * s, 105.0):
        prims.append(Primitive("cylinder", (x, y, -12.0 * s), (4.5 * s, 6.0 * s), BONE_MU))
    for x, y in _arch_positions(7, 22.0 * s, -5.0 * s, 100.0):
        prims.append(Primitive("cylinder", (x, y, 4.0 * s), (4.0 * s, 4.5 * s), BONE_MU))

    # Teeth: 7 lower + 7 upper along slightly tighter arches, jittered by seed.
    tooth_centers: list[tuple[float, float, float]] = []
    for x, y in _arch_positions(7, 23.0 * s, -6.0 * s, 95.0):
        jx, jy = rng.uniform(-0.5, 0.5, size=2) * s
        tooth_centers.append((x + jx, y + jy, -5.0 * s))
    for x, y in _arch_positions(7, 21.5 * s, -5.0 * s, 92.0):
        jx, jy = rng.uniform(-0.5, 0.5, size=2) * s
        tooth_centers.append((x + jx, y + jy, -0.5 * s))
    for cx, cy, cz in tooth_centers:
        radius = float(rng.uniform(1.9, 2.4)) * s
        prims.append(Primitive("cylinder", (cx, cy, cz), (radius, 4.5 * s), TOOTH_MU))

    if metal:
        n_beads = int(rng.integers(2, 5))
        picks = rng.choice(len(tooth_centers), size=n_beads, replace=False)
        for i in sorted(picks):
            cx, cy, cz = tooth_centers[i]
            prims.append(Primitive("sphere", (cx, cy, cz + 1.0 * s), (1.4 * s,), METAL_MU))

    return PhantomSpec(primitives=tuple(prims), seed=seed, metal=metal)


def augment(spec: PhantomSpec, aug: AugmentSpec, invert: bool = False) -> PhantomSpec:
    """Scale about the origin, rotate, then translate every primitive.

    ``invert=True`` applies the exact inverse (negated translation first,
    transposed rotation, reciprocal scale), undoing a prior forward call.
    """
    R = aug.rotation_matrix()
    t = np.array(aug.translation_mm)
    out = []
    for p in spec.primitives:
        c = np.array(p.center)
        O = np.array(p.orientation)
        if not invert:
            c2 = R @ (aug.scale * c) + t
            O2 = O @ R.T
            size2 = tuple(v * aug.scale for v in p.size)
        else:
            c2 = (R.T @ (c - t)) / aug.scale
            O2 = O @ R
            size2 = tuple(v / aug.scale for v in p.size)
        out.append(
            Primitive(
                shape=p.shape,
                center=tuple(float(v) for v in c2),
                size=size2,
                attenuation=p.attenuation,
                additive=p.additive,
                orientation=tuple(tuple(float(v) for v in row) for row in O2),
            )
        )
    return PhantomSpec(primitives=tuple(out), seed=spec.seed, metal=spec.metal)


def _evaluate(spec: PhantomSpec, points: np.ndarray) -> np.ndarray:
    values = np.zeros(points.shape[0])
    for p in spec.primitives:
        inside = p.contains(points)
        if p.additive:
            values[inside] += p.attenuation
        else:
            values[inside] -= p.attenuation
    return np.maximum(values, 0.0)


def sample_attenuation(spec: PhantomSpec, x) -> float | np.ndarray:
    """Exact attenuation at one point (3,) or many points (N, 3)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    values = _evaluate(spec, pts)
    return float(values[0]) if np.ndim(x) == 1 else values


def _local_reach(p: Primitive) -> float:
    if p.shape == "sphere":
        return p.size[0]
    if p.shape == "ellipsoid":
        return max(p.size)
    return math.hypot(p.size[0], p.size[1])


def rasterize(spec: PhantomSpec, grid: VoxelGrid) -> Volume:
    """Point-sample the phantom at voxel centers (no anti-aliasing).

    Voxel values equal ``sample_attenuation`` at the voxel center exactly
    (after the float32 cast), which keeps the point evaluator a usable
    oracle. Each primitive touches only the voxels of its bounding box; the
    per-voxel accumulation order over primitives matches ``_evaluate``.
    """
    if any(d < 8 for d in grid.dims):
        raise ValidationError(f"grid dims must be >= 8 per axis, got {grid.dims}")
    nx, ny, nz = grid.dims
    values = np.zeros((nz, ny, nx))
    axes = [grid.axis_coords(a) for a in range(3)]
    for p in spec.primitives:
        reach = _local_reach(p)
        ranges = []
        for a in range(3):
            coords = axes[a]
            lo = np.searchsorted(coords, p.center[a] - reach, side="left")
            hi = np.searchsorted(coords, p.center[a] + reach, side="right")
            if lo >= hi:
                ranges = None
                break
            ranges.append((lo, hi))
        if ranges is None:
            continue
        (x0, x1), (y0, y1), (z0, z1) = ranges
        zz, yy, xx = np.meshgrid(axes[2][z0:z1], axes[1][y0:y1], axes[0][x0:x1], indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
        inside = p.contains(pts).reshape(zz.shape)
        sub = values[z0:z1, y0:y1, x0:x1]
        if p.additive:
            sub[inside] += p.attenuation
        else:
            sub[inside] -= p.attenuation
    values = np.maximum(values, 0.0)
    return Volume(grid=grid, values=values.astype(np.float32))


def bounding_radius(spec: PhantomSpec) -> float:
    """Radius of an origin-centered ball guaranteed to contain the phantom."""
    if not spec.primitives:
        return 0.0
    return max(p.extent() for p in spec.primitives)


def phantom_to_json(spec: PhantomSpec) -> str:
    doc = {
        "seed": spec.seed,
        "metal": spec.metal,
        "primitives": [
            {
                "shape": p.shape,
                "center": list(p.center),
                "size": list(p.size),
                "attenuation": p.attenuation,
                "additive": p.additive,
                "orientation": [list(row) for row in p.orientation],
            }
            for p in spec.primitives
        ],
    }
    return json.dumps(doc, indent=1)


def phantom_from_json(text: str) -> PhantomSpec:
    doc = json.loads(text)
    prims = tuple(
        Primitive(
            shape=p["shape"],
            center=tuple(p["center"]),
            size=tuple(p["size"]),
            attenuation=p["attenuation"],
            additive=p["additive"],
            orientation=tuple(tuple(row) for row in p["orientation"]),
        )
        for p in doc["primitives"]
    )
    return PhantomSpec(primitives=prims, seed=doc["seed"], metal=doc["metal"])
