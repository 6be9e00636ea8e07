"""Scenario configuration and scale presets.

A scenario fully determines one simulated scan: geometry preset, phantom,
optional augmentation, motion events, and optional projection noise. The
"desk" preset keeps end-to-end runs laptop-sized; "full" mirrors the
production scanner dimensions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ValidationError
from .geometry import ScanGeometry
from .motion import MotionSpec
from .phantom import AugmentSpec
from .volume import VoxelGrid

__all__ = ["Preset", "PRESETS", "Scenario", "scenario_to_json", "scenario_from_json"]


@dataclass(frozen=True)
class Preset:
    """Array sizes for one scale: acquisition geometry, reconstruction grid,
    and the slice pipeline dimensions."""

    name: str
    geometry: ScanGeometry
    grid_dims: tuple[int, int, int]
    grid_voxel: float
    slices_per_volume: int
    slice_size: tuple[int, int]

    def grid(self) -> VoxelGrid:
        return VoxelGrid.centered(self.grid_dims, self.grid_voxel)


PRESETS = {
    # 256x256 detector at 0.84 mm pitch spans the same 215 mm as the full
    # 896-column detector at 0.24 mm.
    "desk": Preset(
        name="desk",
        geometry=ScanGeometry(det_rows=256, det_cols=256, pixel_pitch=0.84, n_frames=360),
        grid_dims=(128, 128, 128),
        grid_voxel=0.8,
        slices_per_volume=96,
        slice_size=(256, 256),
    ),
    "full": Preset(
        name="full",
        geometry=ScanGeometry(),
        grid_dims=(438, 438, 458),
        grid_voxel=0.24,
        slices_per_volume=300,
        slice_size=(256, 256),
    ),
}


@dataclass(frozen=True)
class Scenario:
    """One simulated scan: phantom + optional augmentation + motion events."""

    preset: str = "desk"
    phantom_kind: str = "medium"
    phantom_seed: int = 0
    metal: bool = False
    augment: AugmentSpec | None = None
    motions: tuple[MotionSpec, ...] = ()
    noise_i0: float | None = None
    noise_seed: int = 0
    n_views: int = 4

    def __post_init__(self) -> None:
        if self.preset not in PRESETS:
            raise ValidationError(f"unknown preset {self.preset!r}; have {sorted(PRESETS)}")

    def resolved_preset(self) -> Preset:
        return PRESETS[self.preset]


def _motion_to_dict(m: MotionSpec) -> dict:
    return {
        "motion_type": m.motion_type,
        "pattern": m.pattern,
        "amplitude_deg": m.amplitude_deg,
        "amplitude_mm": m.amplitude_mm,
        "window": list(m.window),
        "tremor_frequency": m.tremor_frequency,
        "rd_fraction": m.rd_fraction,
        "transition_time": m.transition_time,
        "pivot_mm": list(m.pivot_mm),
        "strict": m.strict,
    }


def _motion_from_dict(d: dict) -> MotionSpec:
    d = dict(d)
    d["window"] = tuple(d["window"])
    d["pivot_mm"] = tuple(d.get("pivot_mm", (0.0, 0.0, 0.0)))
    return MotionSpec(**d)


def scenario_to_json(sc: Scenario) -> str:
    doc = {
        "preset": sc.preset,
        "phantom": {"kind": sc.phantom_kind, "seed": sc.phantom_seed, "metal": sc.metal},
        "augment": None
        if sc.augment is None
        else {
            "scale": sc.augment.scale,
            "rotation_deg": list(sc.augment.rotation_deg),
            "translation_mm": list(sc.augment.translation_mm),
        },
        "motions": [_motion_to_dict(m) for m in sc.motions],
        "noise_i0": sc.noise_i0,
        "noise_seed": sc.noise_seed,
        "n_views": sc.n_views,
    }
    return json.dumps(doc, indent=1)


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    aug = doc.get("augment")
    return Scenario(
        preset=doc.get("preset", "desk"),
        phantom_kind=doc["phantom"]["kind"],
        phantom_seed=doc["phantom"]["seed"],
        metal=doc["phantom"].get("metal", False),
        augment=None
        if aug is None
        else AugmentSpec(
            scale=aug["scale"],
            rotation_deg=tuple(aug["rotation_deg"]),
            translation_mm=tuple(aug["translation_mm"]),
        ),
        motions=tuple(_motion_from_dict(m) for m in doc.get("motions", [])),
        noise_i0=doc.get("noise_i0"),
        noise_seed=doc.get("noise_seed", 0),
        n_views=doc.get("n_views", 4),
    )
