"""Parametric rigid head motion applied to projection matrices.

A motion event is a type (which rotation axis moves), a pattern (how the
amplitude envelope behaves), an amplitude, and a time window. Envelopes use
smoothstep transitions so poses change continuously:

* sf   rises 0 -> A across the transition and holds A to the end of the scan
* ri   rises 0 -> A, holds, falls back to exactly 0 by the window end
* rd   like ri but settles at rd_fraction * A instead of 0
* trem A * sin(2 pi f t) gated by a smoothstep on/off envelope in the window

Frames whose envelope is exactly zero get an exact identity matrix, so
motion-free frames stay bit-identical through ``apply_motion``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import ScanGeometry, ShortScanView, Trajectory

__all__ = [
    "MOTION_TYPES",
    "MOTION_PATTERNS",
    "SCENARIO_NAMES",
    "MotionSpec",
    "RigidMotionFrame",
    "scenario_spec",
    "envelope",
    "sample_motion",
    "motion_matrices",
    "compose_motions",
    "apply_motion",
    "max_displacement",
    "displacement_per_frame",
    "pose_spread",
    "label_views",
]

MOTION_TYPES = ("Nod", "Tilt", "LR", "Trem")
MOTION_PATTERNS = ("sf", "ri", "rd")

# The ten scenario identifiers used in dataset manifests and reports.
SCENARIO_NAMES = (
    "Nod-sf", "Nod-ri", "Nod-rd",
    "Tilt-sf", "Tilt-ri", "Tilt-rd",
    "LR-sf", "LR-ri", "LR-rd",
    "Trem",
)

_AXES = {"Nod": (1.0, 0.0, 0.0), "Tilt": (0.0, 1.0, 0.0), "LR": (0.0, 0.0, 1.0), "Trem": (0.0, 0.0, 1.0)}

# Sphere sampling directions for displacement bounds: cube faces, edge
# midpoints and corners, normalized. Includes exact equator/axis points so
# single-axis rotations report their chord displacement exactly.
_DIRECTIONS = []
for _v in (
    [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    + [(1, 1, 0), (1, 0, 1), (0, 1, 1), (1, -1, 0), (1, 0, -1), (0, 1, -1)]
    + [(1, 1, 1), (1, 1, -1), (1, -1, 1), (-1, 1, 1)]
):
    _a = np.array(_v, dtype=float)
    _a /= np.linalg.norm(_a)
    _DIRECTIONS.append(_a)
    _DIRECTIONS.append(-_a)
_DIRECTIONS = np.array(_DIRECTIONS)


@dataclass(frozen=True)
class MotionSpec:
    """One rigid-motion event.

    ``amplitude_deg`` drives the rotation about the type's axis; a nonzero
    ``amplitude_mm`` adds a translation of the same envelope along that axis.
    ``strict=False`` lifts the 3-8 amplitude and 1-5 s duration ranges
    (amplitude 0 is always allowed as the motion-free baseline).
    """

    motion_type: str
    pattern: str = "sf"
    amplitude_deg: float = 5.0
    amplitude_mm: float = 0.0
    window: tuple[float, float] = (8.0, 10.0)
    tremor_frequency: float = 4.0
    rd_fraction: float = 0.5
    transition_time: float = 0.3
    pivot_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    strict: bool = True

    def __post_init__(self) -> None:
        if self.motion_type not in MOTION_TYPES:
            raise ValidationError(f"motion_type must be one of {MOTION_TYPES}, got {self.motion_type!r}")
        if self.pattern not in MOTION_PATTERNS:
            raise ValidationError(f"pattern must be one of {MOTION_PATTERNS}, got {self.pattern!r}")
        t0, t1 = self.window
        if t1 <= t0:
            raise ValidationError(f"window end must exceed start, got {self.window}")
        if not 0.0 < self.rd_fraction < 1.0:
            raise ValidationError("rd_fraction must lie in (0, 1)")
        if self.transition_time <= 0:
            raise ValidationError("transition_time must be positive")
        if self.tremor_frequency <= 0:
            raise ValidationError("tremor_frequency must be positive")
        if self.strict:
            duration = t1 - t0
            if not 1.0 <= duration <= 5.0:
                raise ValidationError(
                    f"window duration {duration:.2f} s outside [1, 5]; pass strict=False to override"
                )
            for label, amp in (("amplitude_deg", self.amplitude_deg), ("amplitude_mm", self.amplitude_mm)):
                if amp != 0.0 and not 3.0 <= abs(amp) <= 8.0:
                    raise ValidationError(
                        f"{label} {amp} outside [3, 8]; pass strict=False to override"
                    )

    @property
    def axis(self) -> np.ndarray:
        return np.array(_AXES[self.motion_type])


@dataclass(frozen=True)
class RigidMotionFrame:
    """Sampled pose of one frame: per-axis rotation angles (degrees), a world
    translation (mm), and the 4x4 homogeneous matrix combining them."""

    index: int
    rotation_deg: tuple[float, float, float]
    translation_mm: tuple[float, float, float]
    matrix: np.ndarray


def scenario_spec(name: str, amplitude_deg: float, window: tuple[float, float], **kwargs) -> MotionSpec:
    """Build a MotionSpec from one of the ten scenario identifiers."""
    if name not in SCENARIO_NAMES:
        raise ValidationError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    if name == "Trem":
        return MotionSpec(motion_type="Trem", pattern="sf", amplitude_deg=amplitude_deg, window=window, **kwargs)
    motion_type, pattern = name.split("-")
    return MotionSpec(motion_type=motion_type, pattern=pattern, amplitude_deg=amplitude_deg, window=window, **kwargs)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def envelope(spec: MotionSpec, t: np.ndarray) -> np.ndarray:
    """Signed amplitude multiplier in [-1, 1] at the given times.

    Exactly zero outside the window for ri and trem patterns and before the
    window for every pattern.
    """
    t = np.asarray(t, dtype=float)
    t0, t1 = spec.window
    T = spec.transition_time
    rise = _smoothstep((t - t0) / T)
    if spec.motion_type == "Trem":
        gate = np.minimum(rise, _smoothstep((t1 - t) / T))
        return gate * np.sin(2.0 * math.pi * spec.tremor_frequency * (t - t0))
    if spec.pattern == "sf":
        return rise
    fall = _smoothstep((t1 - t) / T)
    if spec.pattern == "ri":
        return np.minimum(rise, fall)
    # rd: fall stops at rd_fraction instead of zero.
    return np.minimum(rise, spec.rd_fraction + (1.0 - spec.rd_fraction) * fall)


def _rotation_about_axis(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    x, y, z = axis
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def sample_motion(spec: MotionSpec, traj: Trajectory) -> list[RigidMotionFrame]:
    """Sample the motion event at every frame time of the trajectory."""
    duration = traj.geometry.scan_duration
    t0, t1 = spec.window
    if t0 < 0.0 or t1 > duration:
        raise ValidationError(f"window {spec.window} outside scan [0, {duration}]")
    times = traj.times
    alphas = envelope(spec, times)
    axis = spec.axis
    pivot = np.asarray(spec.pivot_mm, dtype=float)
    frames = []
    for k, alpha in enumerate(alphas):
        angle_deg = alpha * spec.amplitude_deg
        shift = alpha * spec.amplitude_mm
        if angle_deg == 0.0 and shift == 0.0:
            M = np.eye(4)
            rot = (0.0, 0.0, 0.0)
            trans = (0.0, 0.0, 0.0)
        else:
            R = _rotation_about_axis(axis, math.radians(angle_deg))
            t_vec = pivot - R @ pivot + shift * axis
            M = np.eye(4)
            M[:3, :3] = R
            M[:3, 3] = t_vec
            rot = tuple(float(angle_deg * a) for a in axis)
            trans = tuple(float(v) for v in t_vec)
        frames.append(RigidMotionFrame(index=k, rotation_deg=rot, translation_mm=trans, matrix=M))
    return frames


def motion_matrices(motions: list[RigidMotionFrame]) -> np.ndarray:
    return np.stack([m.matrix for m in motions])


def compose_motions(
    motion_lists: list[list[RigidMotionFrame]], traj: Trajectory
) -> list[RigidMotionFrame]:
    """Compose several motion events frame by frame (matrix products).

    An empty list yields identity poses for every frame. Identity factors are
    skipped so motion-free frames keep exact identity matrices.
    """
    n = len(traj)
    for motions in motion_lists:
        if len(motions) != n:
            raise ValidationError(f"{len(motions)} motion entries for {n} frames")
    if len(motion_lists) == 1:
        return motion_lists[0]
    from scipy.spatial.transform import Rotation

    out = []
    for k in range(n):
        M = np.eye(4)
        for motions in motion_lists:
            Mk = motions[k].matrix
            if not np.array_equal(Mk, _IDENTITY4):
                M = M @ Mk
        if np.array_equal(M, _IDENTITY4):
            out.append(
                RigidMotionFrame(index=k, rotation_deg=(0.0, 0.0, 0.0), translation_mm=(0.0, 0.0, 0.0), matrix=np.eye(4))
            )
        else:
            angles = Rotation.from_matrix(M[:3, :3]).as_euler("xyz", degrees=True)
            out.append(
                RigidMotionFrame(
                    index=k,
                    rotation_deg=tuple(float(a) for a in angles),
                    translation_mm=tuple(float(v) for v in M[:3, 3]),
                    matrix=M,
                )
            )
    return out


_IDENTITY4 = np.eye(4)


def apply_motion(traj: Trajectory, motions: list[RigidMotionFrame]) -> Trajectory:
    """Perturbed trajectory with P'_k = P_k @ M_k (object motion in world
    coordinates). Frames with an exact identity pose keep their matrix
    bit-identical; the input trajectory is left untouched."""
    if len(motions) != len(traj):
        raise ValidationError(f"{len(motions)} motion entries for {len(traj)} frames")
    from dataclasses import replace

    new_frames = []
    for frame, motion in zip(traj.frames, motions):
        if np.array_equal(motion.matrix, _IDENTITY4):
            new_frames.append(frame)
        else:
            new_frames.append(replace(frame, P=frame.P @ motion.matrix))
    return Trajectory(geometry=traj.geometry, frames=tuple(new_frames))


def _transformed_points(motions: list[RigidMotionFrame], radius: float) -> np.ndarray:
    """Apply each pose to the sphere sample points: shape (n_frames, n_pts, 3)."""
    pts = _DIRECTIONS * radius
    mats = motion_matrices(motions)
    return np.einsum("fij,pj->fpi", mats[:, :3, :3], pts) + mats[:, None, :3, 3]


def displacement_per_frame(motions: list[RigidMotionFrame], radius: float) -> np.ndarray:
    """Per frame: max displacement of sphere sample points relative to the
    identity pose."""
    pts = _DIRECTIONS * radius
    moved = _transformed_points(motions, radius)
    return np.linalg.norm(moved - pts[None], axis=2).max(axis=1)


def max_displacement(motions: list[RigidMotionFrame], radius: float) -> float:
    """Max over frames and sphere sample points of |M_k x - x|."""
    if not motions:
        return 0.0
    return float(displacement_per_frame(motions, radius).max())


def pose_spread(motions: list[RigidMotionFrame], frame_indices: np.ndarray, radius: float) -> float:
    """Largest displacement between any two poses within the given frames.

    Measures how inconsistent the object pose is across a view: zero for a
    constant pose (moved or not), positive when frames disagree.
    """
    idx = np.asarray(frame_indices, dtype=int)
    if idx.size < 2:
        return 0.0
    moved = _transformed_points([motions[i] for i in idx], radius)
    n = moved.shape[0]
    best = 0.0
    for i in range(n - 1):
        d = np.linalg.norm(moved[i + 1 :] - moved[i], axis=2).max()
        if d > best:
            best = float(d)
    return best


def _pose_spread_exceeds(moved: np.ndarray, threshold: float) -> bool:
    """Exact test diam > threshold with a cheap reference-frame shortcut."""
    ref = np.linalg.norm(moved - moved[0], axis=2).max()
    if ref > threshold:
        return True
    if 2.0 * ref <= threshold:
        return False
    n = moved.shape[0]
    best = ref
    for i in range(1, n - 1):
        d = np.linalg.norm(moved[i + 1 :] - moved[i], axis=2).max()
        if d > best:
            best = d
            if best > threshold:
                return True
    return best > threshold


def label_views(
    views: list[ShortScanView],
    motions: list[RigidMotionFrame],
    traj: Trajectory,
    threshold: float = 0.5,
    radius: float | None = None,
) -> list[str]:
    """Ground-truth motion labels for short-scan views.

    A view is positive when the object pose varies across its frames: the
    largest displacement between any two of its per-frame poses, evaluated on
    a sphere of the FOV radius, exceeds ``threshold`` mm. Views whose frames
    all share one pose reconstruct consistently (whether or not that pose is
    the initial one) and are negative.
    """
    if len(motions) != len(traj):
        raise ValidationError(f"{len(motions)} motion entries for {len(traj)} frames")
    if radius is None:
        radius = traj.geometry.fov_radius
    moved_all = _transformed_points(motions, radius)
    labels = []
    for view in views:
        moved = moved_all[view.frame_indices]
        positive = moved.shape[0] >= 2 and _pose_spread_exceeds(moved, threshold)
        labels.append("positive" if positive else "negative")
    return labels
