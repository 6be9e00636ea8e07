"""Circular cone-beam acquisition geometry as per-frame projection matrices.

Conventions used throughout the package:

* World coordinates in mm, z vertical (axial axis). The source orbits the
  isocenter counter-clockwise in the xy-plane: ``S(beta) = sad * (cos b, sin b, 0)``.
* The flat detector is perpendicular to the source-isocenter line at distance
  ``sdd`` from the source. Detector columns run along
  ``u_vec = (-sin b, cos b, 0)``, rows along ``v_vec = (0, 0, -1)`` (rows
  grow downward, the usual image convention).
* A 3x4 matrix ``P`` maps homogeneous world points to homogeneous pixel
  coordinates ``(u, v)`` = (column, row), pixel centers on integer grid, the
  principal point at the detector center.
* The ray fan coordinate of detector column ``c`` is
  ``gamma = atan((c - (cols-1)/2) * pixel_pitch / sdd)``; with the axis
  conventions above, the ray ``(beta, gamma)`` is measured a second time at
  ``(beta + pi - 2*gamma, -gamma)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import rq

from .errors import BehindSourceError, ConfigurationError, ValidationError

__all__ = [
    "ScanGeometry",
    "FrameGeometry",
    "Trajectory",
    "ShortScanView",
    "build_circular_trajectory",
    "project_point",
    "decompose_projection",
    "fan_angle",
    "short_scan_span",
    "select_short_scan_views",
    "parker_weights",
    "trajectory_to_json",
    "trajectory_from_json",
]


@dataclass(frozen=True)
class ScanGeometry:
    """Static description of one circular cone-beam acquisition.

    Defaults describe a dental head scanner: source-detector distance 741 mm,
    0.24 mm detector pixels, a 105 mm diameter field of view and a 24 s full
    rotation. The source-axis distance of 430 mm makes the half fan angle
    asin(52.5/430) = 7.01 degrees, i.e. a 194 degree short-scan span.
    """

    sdd: float = 741.0
    sad: float = 430.0
    det_rows: int = 944
    det_cols: int = 896
    pixel_pitch: float = 0.24
    fov_radius: float = 52.5
    scan_arc_deg: float = 360.0
    scan_duration: float = 24.0
    n_frames: int = 360

    def __post_init__(self) -> None:
        if not (self.sdd > self.sad > self.fov_radius > 0):
            raise ConfigurationError(
                f"need sdd > sad > fov_radius > 0, got {self.sdd}, {self.sad}, {self.fov_radius}"
            )
        if self.pixel_pitch <= 0:
            raise ConfigurationError("pixel_pitch must be positive")
        if self.n_frames < 2:
            raise ConfigurationError("n_frames must be at least 2")
        if self.det_rows < 1 or self.det_cols < 1:
            raise ConfigurationError("detector must have at least one row and column")
        needed = 2.0 * self.fov_radius * self.sdd / self.sad
        if self.det_cols * self.pixel_pitch < needed:
            raise ConfigurationError(
                f"detector width {self.det_cols * self.pixel_pitch:.1f} mm does not cover "
                f"the magnified FOV ({needed:.1f} mm)"
            )

    @property
    def scan_arc(self) -> float:
        """Scan arc in radians."""
        return math.radians(self.scan_arc_deg)

    @property
    def principal_point(self) -> tuple[float, float]:
        """(u, v) pixel coordinates of the detector center."""
        return ((self.det_cols - 1) / 2.0, (self.det_rows - 1) / 2.0)


@dataclass(frozen=True)
class FrameGeometry:
    """One acquisition frame: gantry angle, acquisition time and 3x4 matrix."""

    index: int
    beta: float
    time: float
    P: np.ndarray

    def source_position(self) -> np.ndarray:
        """Camera center: the world point mapped to zero by ``P``."""
        M = self.P[:, :3]
        return -np.linalg.solve(M, self.P[:, 3])


@dataclass(frozen=True)
class Trajectory:
    """Ordered frames of one scan plus the geometry they were built from."""

    geometry: ScanGeometry
    frames: tuple[FrameGeometry, ...]

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def betas(self) -> np.ndarray:
        return np.array([f.beta for f in self.frames])

    @property
    def times(self) -> np.ndarray:
        return np.array([f.time for f in self.frames])

    @property
    def matrices(self) -> np.ndarray:
        """All projection matrices stacked to shape (n_frames, 3, 4)."""
        return np.stack([f.P for f in self.frames])


@dataclass(frozen=True)
class ShortScanView:
    """One angular window of span pi + 2*delta, possibly wrapping the seam.

    ``frame_indices`` are ordered by angle relative to ``beta_start`` so a
    wrapped view lists its post-seam frames last. ``label`` is filled in by
    motion labeling ("positive" / "negative") and stays None for raw views.
    """

    view_index: int
    beta_start: float
    span: float
    frame_indices: np.ndarray
    label: str | None = None

    def with_label(self, label: str) -> "ShortScanView":
        if label not in ("positive", "negative"):
            raise ValidationError(f"label must be 'positive' or 'negative', got {label!r}")
        return replace(self, label=label)


def fan_angle(geom: ScanGeometry) -> float:
    """Half fan angle delta = asin(fov_radius / sad), in radians.

    The full fan is 2*delta and the minimal complete arc is pi + 2*delta.
    """
    if geom.fov_radius >= geom.sad:
        raise ConfigurationError("fov_radius must be smaller than sad")
    return math.asin(geom.fov_radius / geom.sad)


def short_scan_span(geom: ScanGeometry) -> float:
    """Short-scan arc pi + 2*delta in radians."""
    return math.pi + 2.0 * fan_angle(geom)


def _frame_matrix(geom: ScanGeometry, beta: float) -> np.ndarray:
    cb, sb = math.cos(beta), math.sin(beta)
    source = np.array([geom.sad * cb, geom.sad * sb, 0.0])
    # Camera rows: column axis, row axis, principal ray direction. Rows run
    # along -z (image convention, v grows downward) so the triad stays
    # right-handed and the decomposition yields a proper rotation.
    R = np.array(
        [
            [-sb, cb, 0.0],
            [0.0, 0.0, -1.0],
            [-cb, -sb, 0.0],
        ]
    )
    cu, cv = geom.principal_point
    f = geom.sdd / geom.pixel_pitch
    K = np.array([[f, 0.0, cu], [0.0, f, cv], [0.0, 0.0, 1.0]])
    Rt = np.hstack([R, (-R @ source)[:, None]])
    return K @ Rt


def build_circular_trajectory(geom: ScanGeometry) -> Trajectory:
    """Uniformly sampled circular trajectory over the scan arc.

    Frame k sits at beta_k = k * arc / n_frames (endpoint excluded, so a 360
    degree scan has no duplicated seam frame) and time_k = k * duration / n.
    """
    frames = []
    for k in range(geom.n_frames):
        beta = geom.scan_arc * k / geom.n_frames
        time = geom.scan_duration * k / geom.n_frames
        frames.append(FrameGeometry(index=k, beta=beta, time=time, P=_frame_matrix(geom, beta)))
    return Trajectory(geometry=geom, frames=tuple(frames))


def project_point(frame: FrameGeometry | np.ndarray, x: Sequence[float]) -> tuple[float, float]:
    """Project a world point to (u, v) pixel coordinates.

    No clamping is applied; the result may lie outside the detector. Raises
    BehindSourceError when the point is at or behind the source plane.
    """
    P = frame.P if isinstance(frame, FrameGeometry) else np.asarray(frame)
    h = P @ np.array([x[0], x[1], x[2], 1.0])
    if h[2] <= 0.0:
        raise BehindSourceError(f"point {tuple(x)} has non-positive depth {h[2]:.3g}")
    return (h[0] / h[2], h[1] / h[2])


def decompose_projection(P: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split P into K (upper triangular, positive diagonal), R (proper rotation)
    and t such that P = K @ [R | t]."""
    P = np.asarray(P, dtype=float)
    if P.shape != (3, 4):
        raise ValidationError(f"projection matrix must be 3x4, got {P.shape}")
    M = P[:, :3]
    if abs(np.linalg.det(M)) < 1e-12:
        raise ValidationError("projection matrix is rank deficient")
    K, R = rq(M)
    signs = np.sign(np.diag(K))
    signs[signs == 0] = 1.0
    K = K * signs[None, :]
    R = R * signs[:, None]
    if np.linalg.det(R) < 0:
        # Proper camera matrices built here always give det(R) > 0; a negated
        # input P is the only way to land in this branch.
        K, R = -K, -R
        signs = np.sign(np.diag(K))
        K = K * signs[None, :]
        R = R * signs[:, None]
    t = np.linalg.solve(K, P[:, 3])
    return K, R, t


def select_short_scan_views(traj: Trajectory, n_views: int = 4) -> list[ShortScanView]:
    """Partition a full rotation into ``n_views`` short-scan windows.

    View i starts at i * 2*pi / n_views and spans pi + 2*delta; windows wrap
    across the 0/360 seam, so together they cover every frame.
    """
    geom = traj.geometry
    if geom.scan_arc_deg < 360.0:
        raise ValidationError("short-scan view selection requires a full 360 degree scan")
    span = short_scan_span(geom)
    if span > 2.0 * math.pi:
        raise ValidationError("short-scan span exceeds a full rotation")
    betas = traj.betas
    views = []
    for i in range(n_views):
        start = 2.0 * math.pi * i / n_views
        rel = np.mod(betas - start, 2.0 * math.pi)
        inside = rel < span
        order = np.argsort(rel[inside], kind="stable")
        idx = np.flatnonzero(inside)[order]
        views.append(
            ShortScanView(view_index=i, beta_start=start, span=span, frame_indices=idx)
        )
    return views


def detector_fan_coordinates(geom: ScanGeometry) -> np.ndarray:
    """Fan coordinate gamma per detector column, clamped to [-delta, delta].

    Columns outside the FOV fan only see rays that miss the reconstructable
    cylinder; clamping keeps the weight formula defined there.
    """
    delta = fan_angle(geom)
    cu = (geom.det_cols - 1) / 2.0
    offsets = (np.arange(geom.det_cols) - cu) * geom.pixel_pitch
    gamma = np.arctan(offsets / geom.sdd)
    return np.clip(gamma, -delta, delta)


def parker_weights(geom: ScanGeometry, view: ShortScanView) -> np.ndarray:
    """Redundancy weights for a short-scan view, shape (n_view_frames, det_cols).

    With beta measured from the view start and gamma the column fan coordinate,
    a ray is measured twice exactly when its conjugate (beta + pi - 2*gamma,
    -gamma) also falls inside the span, and the two weights sum to one:

    * ramp-up   0 <= beta <= 2*(delta+gamma):  sin^2(pi/4 * beta / (delta+gamma))
    * plateau   2*(delta+gamma) <= beta <= pi + 2*gamma: 1
    * ramp-down pi + 2*gamma <= beta <= pi + 2*delta:
                sin^2(pi/4 * (pi + 2*delta - beta) / (delta-gamma))
    """
    delta = fan_angle(geom)
    span = math.pi + 2.0 * delta
    if abs(view.span - span) > 1e-9:
        raise ValidationError(
            f"view span {view.span:.6f} does not match pi + 2*delta = {span:.6f}"
        )
    gamma = detector_fan_coordinates(geom)[None, :]
    beta = np.asarray(view_local_angles(geom, view))[:, None]

    up_end = 2.0 * (delta + gamma)
    down_start = math.pi + 2.0 * gamma

    w = np.ones((beta.shape[0], gamma.shape[1]))
    up = beta < up_end
    down = beta > down_start
    with np.errstate(divide="ignore", invalid="ignore"):
        up_arg = np.where(delta + gamma > 0, beta / np.maximum(delta + gamma, 1e-300), 0.0)
        down_arg = np.where(
            delta - gamma > 0, (span - beta) / np.maximum(delta - gamma, 1e-300), 0.0
        )
    w = np.where(up, np.sin(0.25 * math.pi * up_arg) ** 2, w)
    w = np.where(down, np.sin(0.25 * math.pi * down_arg) ** 2, w)
    return np.clip(w, 0.0, 1.0)


def view_local_angles(geom: ScanGeometry, view: ShortScanView) -> np.ndarray:
    """Angle of each view frame measured from the view start, in [0, span]."""
    step = geom.scan_arc / geom.n_frames
    betas = view.frame_indices * step
    return np.mod(betas - view.beta_start, 2.0 * math.pi)


def trajectory_to_json(traj: Trajectory) -> str:
    """Serialize a trajectory to a JSON document with full float precision."""
    geom = traj.geometry
    doc = {
        "geometry": {
            "sdd": geom.sdd,
            "sad": geom.sad,
            "det_rows": geom.det_rows,
            "det_cols": geom.det_cols,
            "pixel_pitch": geom.pixel_pitch,
            "fov_radius": geom.fov_radius,
            "scan_arc_deg": geom.scan_arc_deg,
            "scan_duration": geom.scan_duration,
            "n_frames": geom.n_frames,
        },
        "frames": [
            {
                "index": f.index,
                "beta": f.beta,
                "time": f.time,
                "P": [float(v) for v in f.P.ravel()],
            }
            for f in traj.frames
        ],
    }
    return json.dumps(doc, indent=1)


def trajectory_from_json(text: str) -> Trajectory:
    doc = json.loads(text)
    geom = ScanGeometry(**doc["geometry"])
    frames = []
    for fr in doc["frames"]:
        P = np.array(fr["P"], dtype=float).reshape(3, 4)
        frames.append(FrameGeometry(index=fr["index"], beta=fr["beta"], time=fr["time"], P=P))
    if len(frames) != geom.n_frames:
        raise ValidationError(
            f"frame count {len(frames)} does not match geometry n_frames {geom.n_frames}"
        )
    return Trajectory(geometry=geom, frames=tuple(frames))
