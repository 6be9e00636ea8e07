"""End-to-end orchestration: simulate, reconstruct, score, and build datasets.

The simulation chain per scan: rasterize the phantom, build the nominal
trajectory, perturb it with the sampled motion (the scanner still believes
the nominal geometry), forward-project, then reconstruct the four Parker
weighted short-scan views with the nominal matrices. Ground-truth view
labels come from the pose spread across each view's frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detector import (
    MOTION,
    MotionSliceScorer,
    VolumeVerdict,
    classify_volume,
    compute_features,
    extract_axial_slices,
    normalize_slice,
    volume_average,
)
from .errors import ValidationError
from .evaluation import EvalReport, LabeledScore, evaluate_run, render_report, report_to_json
from .geometry import Trajectory, build_circular_trajectory, select_short_scan_views, trajectory_to_json
from .io import _read, _write, write_slice_png, write_volume
from .motion import MotionSpec, compose_motions, label_views, sample_motion, apply_motion
from .phantom import AugmentSpec, augment, bounding_radius, default_phantom, rasterize
from .projector import add_transmission_noise, forward_project
from .recon import fdk_reconstruct
from .scenario import PRESETS, Scenario, scenario_to_json
from .volume import Volume

__all__ = [
    "ScanResult",
    "simulate_scan",
    "run_pipeline",
    "make_dataset",
    "train_from_dataset",
    "evaluate_dataset",
]


@dataclass(frozen=True)
class ScanResult:
    """Everything produced by one simulated scan."""

    scenario: Scenario
    trajectory: Trajectory
    views: tuple
    labels: tuple[str, ...]
    reconstructions: tuple[Volume, ...]


def simulate_scan(scenario: Scenario) -> ScanResult:
    """Simulate one scan and reconstruct its short-scan views."""
    preset = scenario.resolved_preset()
    geom = preset.geometry
    spec = default_phantom(scenario.phantom_kind, metal=scenario.metal, seed=scenario.phantom_seed)
    if scenario.augment is not None:
        spec = augment(spec, scenario.augment)
    if bounding_radius(spec) > geom.fov_radius:
        raise ValidationError(
            f"phantom bounding radius {bounding_radius(spec):.1f} mm exceeds the "
            f"{geom.fov_radius} mm FOV"
        )
    grid = preset.grid()
    volume = rasterize(spec, grid)

    traj = build_circular_trajectory(geom)
    motions = compose_motions([sample_motion(m, traj) for m in scenario.motions], traj)
    moved = apply_motion(traj, motions)

    stack = forward_project(volume, moved)
    if scenario.noise_i0 is not None:
        stack = add_transmission_noise(stack, scenario.noise_i0, scenario.noise_seed)

    views = select_short_scan_views(traj, scenario.n_views)
    labels = tuple(label_views(views, motions, traj))
    recons = tuple(fdk_reconstruct(stack, traj, grid, v) for v in views)
    return ScanResult(
        scenario=scenario,
        trajectory=traj,
        views=tuple(views),
        labels=labels,
        reconstructions=recons,
    )


def _verdict_dict(v: VolumeVerdict) -> dict:
    return {
        "volume_id": v.volume_id,
        "y_pred": v.y_pred,
        "y_final": v.y_final,
        "n_slices": v.n_slices,
        "slice_scores": list(v.slice_scores),
    }


def run_pipeline(
    scenario: Scenario,
    out_dir: str | Path,
    scorer: MotionSliceScorer | None = None,
    save_volumes: bool = False,
) -> dict:
    """Run one scenario end to end and write its artifacts.

    Writes the scenario, the nominal trajectory, per-view ground-truth
    labels, mid-slice previews, and (with a scorer) per-view verdicts plus a
    green/red summary. Deterministic given the scenario seeds.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    preset = scenario.resolved_preset()
    result = simulate_scan(scenario)

    (out / "scenario.json").write_text(scenario_to_json(scenario) + "\n")
    (out / "trajectory.json").write_text(trajectory_to_json(result.trajectory) + "\n")

    verdicts: list[VolumeVerdict | None] = []
    for view, label, recon in zip(result.views, result.labels, result.reconstructions):
        vid = f"view{view.view_index}"
        if save_volumes:
            write_volume(recon, out / "views" / vid)
        mid = recon.values[recon.values.shape[0] // 2]
        write_slice_png(mid, out / "previews" / f"{vid}.png")
        if scorer is not None:
            slices = [
                normalize_slice(s, preset.slice_size)
                for s in extract_axial_slices(recon, preset.slices_per_volume, vid)
            ]
            feats = np.stack([compute_features(s) for s in slices])
            scores = scorer.predict_proba(feats)[:, 1]
            y_pred = volume_average(scores)
            verdicts.append(
                VolumeVerdict(
                    volume_id=vid,
                    slice_scores=tuple(float(x) for x in scores),
                    y_pred=y_pred,
                    y_final=classify_volume(y_pred),
                )
            )
        else:
            verdicts.append(None)

    labels_doc = {f"view{v.view_index}": lab for v, lab in zip(result.views, result.labels)}
    (out / "labels.json").write_text(json.dumps(labels_doc, indent=1) + "\n")

    summary_lines = []
    for view, label, verdict in zip(result.views, result.labels, verdicts):
        if verdict is not None:
            color = "red" if verdict.y_final == MOTION else "green"
            summary_lines.append(
                f"View-{view.view_index + 1}: {color:<5} verdict={verdict.y_final:<11} "
                f"y_pred={verdict.y_pred:.4f} truth={label}"
            )
        else:
            color = "red" if label == "positive" else "green"
            summary_lines.append(f"View-{view.view_index + 1}: {color:<5} truth={label}")
    (out / "summary.txt").write_text("\n".join(summary_lines) + "\n")

    if scorer is not None:
        doc = [_verdict_dict(v) for v in verdicts if v is not None]
        (out / "verdicts.json").write_text(json.dumps(doc, indent=1) + "\n")
    return {
        "labels": labels_doc,
        "verdicts": [None if v is None else _verdict_dict(v) for v in verdicts],
        "out_dir": str(out),
    }


# Window placements per scenario, chosen so the ground-truth view labels of
# the default 4-view split come out balanced across the training split.
_TRAIN_PLAN = [
    ("Nod-sf", (8.0, 10.0)),
    ("Nod-ri", (5.0, 8.0)),
    ("Nod-rd", (0.5, 3.5)),
    ("Tilt-sf", (16.0, 18.0)),
    ("Tilt-ri", (10.0, 12.0)),
    ("Tilt-rd", (13.5, 15.5)),
    ("LR-sf", (12.0, 14.0)),
    ("LR-ri", (4.0, 7.0)),
    ("LR-rd", (6.5, 9.0)),
    ("Trem", (11.0, 13.0)),
]

_TEST_PLAN = [
    ("Nod-sf", (16.0, 18.0)),
    ("Nod-ri", (10.0, 12.0)),
    ("Nod-rd", (0.5, 3.5)),
    ("Tilt-sf", (15.5, 17.5)),
    ("Tilt-ri", (4.5, 7.5)),
    ("Tilt-rd", (13.5, 15.5)),
    ("LR-sf", (17.0, 19.0)),
    ("LR-ri", (9.5, 11.5)),
    ("LR-rd", (1.0, 4.5)),
    ("Trem", (10.5, 12.5)),
]


def _motion_from_name(name: str, window: tuple[float, float], amplitude: float) -> MotionSpec:
    from .motion import scenario_spec

    return scenario_spec(name, amplitude_deg=amplitude, window=window)


def _scan_volumes(scan_id: str, scenario: Scenario, motion_type: str):
    """Simulate one scan and yield (volume_id, motion_type, label, features)."""
    preset = scenario.resolved_preset()
    result = simulate_scan(scenario)
    out = []
    for view, label, recon in zip(result.views, result.labels, result.reconstructions):
        vid = f"{scan_id}-v{view.view_index}"
        slices = [
            normalize_slice(s, preset.slice_size)
            for s in extract_axial_slices(recon, preset.slices_per_volume, vid)
        ]
        feats = np.stack([compute_features(s) for s in slices]).astype(np.float32)
        out.append((vid, motion_type, label, feats, recon))
    return out


def _write_split(
    out_dir: Path,
    split: str,
    entries: list,
    preset_name: str,
    save_volumes: bool,
    preview_scans: int = 2,
) -> None:
    split_dir = out_dir / split
    split_dir.mkdir(parents=True, exist_ok=True)
    features = np.stack([e[3] for e in entries])
    _write(
        split_dir / "features",
        features,
        {"kind": "features", "index_order": "volume,slice,feature", "preset": preset_name},
    )
    manifest = {
        "preset": preset_name,
        "split": split,
        "volumes": [
            {"id": vid, "motion_type": mtype, "label": label}
            for vid, mtype, label, _, _ in entries
        ],
    }
    (split_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    seen_scans: set[str] = set()
    for vid, _, label, _, recon in entries:
        scan = vid.rsplit("-v", 1)[0]
        if save_volumes:
            write_volume(recon, split_dir / "volumes" / vid)
        if len(seen_scans) < preview_scans or scan in seen_scans:
            seen_scans.add(scan)
            mid = recon.values[recon.values.shape[0] // 2]
            write_slice_png(mid, split_dir / "previews" / f"{vid}-{label}.png")


def make_dataset(
    out_dir: str | Path,
    preset: str = "desk",
    train_seed: int = 1000,
    test_seed: int = 2000,
    save_volumes: bool = False,
    progress=None,
) -> dict:
    """Generate the training and test splits.

    Training: the ten motion scenarios on the small and medium phantoms plus
    six augmented clean scans, balanced to equal positive/negative view
    counts (64 volumes). Test: the ten scenarios on the large phantom with
    metal inserts (40 volumes), so motion detection is evaluated in the
    presence of metal.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng_train = np.random.default_rng(train_seed)
    rng_test = np.random.default_rng(test_seed)

    def note(msg: str) -> None:
        if progress is not None:
            progress(msg)

    train_entries = []
    for i, (name, window) in enumerate(_TRAIN_PLAN):
        kind = "small" if i % 2 == 0 else "medium"
        amplitude = float(np.round(rng_train.uniform(3.0, 8.0), 2))
        sc = Scenario(
            preset=preset,
            phantom_kind=kind,
            phantom_seed=int(rng_train.integers(0, 10_000)),
            motions=(_motion_from_name(name, window, amplitude),),
        )
        note(f"train scan {i + 1}/16: {name} A={amplitude} window={window} [{kind}]")
        train_entries.extend(_scan_volumes(f"train-{name}-{i:02d}", sc, name))
    for j in range(6):
        kind = "small" if j % 2 == 0 else "medium"
        aug = AugmentSpec(
            scale=float(np.round(rng_train.uniform(0.95, 1.05), 3)),
            rotation_deg=tuple(np.round(rng_train.uniform(-3.0, 3.0, 3), 2)),
            translation_mm=tuple(np.round(rng_train.uniform(-2.0, 2.0, 3), 2)),
        )
        sc = Scenario(
            preset=preset,
            phantom_kind=kind,
            phantom_seed=int(rng_train.integers(0, 10_000)),
            augment=aug,
        )
        note(f"train scan {11 + j}/16: clean [{kind}]")
        train_entries.extend(_scan_volumes(f"train-clean-{j:02d}", sc, "none"))

    n_pos = sum(1 for e in train_entries if e[2] == "positive")
    n_neg = len(train_entries) - n_pos
    if n_pos != n_neg:
        raise ValidationError(
            f"training split is unbalanced: {n_pos} positive vs {n_neg} negative views"
        )

    test_entries = []
    for i, (name, window) in enumerate(_TEST_PLAN):
        amplitude = float(np.round(rng_test.uniform(3.0, 8.0), 2))
        sc = Scenario(
            preset=preset,
            phantom_kind="large",
            phantom_seed=int(rng_test.integers(0, 10_000)),
            metal=True,
            motions=(_motion_from_name(name, window, amplitude),),
        )
        note(f"test scan {i + 1}/10: {name} A={amplitude} window={window} [large+metal]")
        test_entries.extend(_scan_volumes(f"test-{name}-{i:02d}", sc, name))

    _write_split(out, "train", train_entries, preset, save_volumes)
    _write_split(out, "test", test_entries, preset, save_volumes)
    return {
        "train_volumes": len(train_entries),
        "test_volumes": len(test_entries),
        "train_positives": n_pos,
        "test_positives": sum(1 for e in test_entries if e[2] == "positive"),
    }


def _load_split(split_dir: str | Path):
    split_dir = Path(split_dir)
    manifest = json.loads((split_dir / "manifest.json").read_text())
    features, meta = _read(split_dir / "features")
    if meta.get("kind") != "features":
        raise ValidationError(f"{split_dir}/features is not a feature file")
    if features.shape[0] != len(manifest["volumes"]):
        raise ValidationError("feature file and manifest disagree on volume count")
    return manifest, features


def train_from_dataset(
    dataset_dir: str | Path,
    learning_rate: float = 1e-3,
    momentum: float = 0.9,
    epochs: int = 500,
    batch_size: int | None = None,
    seed: int = 0,
) -> MotionSliceScorer:
    """Fit the slice scorer on a generated split; slices inherit the label of
    their volume."""
    manifest, features = _load_split(dataset_dir)
    n_vol, n_slices, n_feat = features.shape
    X = features.reshape(-1, n_feat).astype(np.float64)
    y = np.repeat(
        [1 if v["label"] == "positive" else 0 for v in manifest["volumes"]], n_slices
    )
    scorer = MotionSliceScorer(
        learning_rate=learning_rate,
        momentum=momentum,
        epochs=epochs,
        batch_size=batch_size,
        seed=seed,
    )
    return scorer.fit(X, y)


def evaluate_dataset(
    dataset_dir: str | Path,
    scorer: MotionSliceScorer,
    out_dir: str | Path | None = None,
) -> EvalReport:
    """Score a split, write verdicts and the per-motion-type report."""
    manifest, features = _load_split(dataset_dir)
    n_vol, n_slices, n_feat = features.shape
    probs = scorer.predict_proba(features.reshape(-1, n_feat).astype(np.float64))[:, 1]
    probs = probs.reshape(n_vol, n_slices)

    slice_items = []
    volume_items = []
    verdicts = []
    for row, vol in zip(probs, manifest["volumes"]):
        label = 1 if vol["label"] == "positive" else 0
        y_pred = volume_average(row)
        verdicts.append(
            {
                "volume_id": vol["id"],
                "motion_type": vol["motion_type"],
                "label": vol["label"],
                "y_pred": float(y_pred),
                "y_final": classify_volume(y_pred),
            }
        )
        volume_items.append(
            LabeledScore(score=float(y_pred), label=label, unit_id=vol["id"], motion_type=vol["motion_type"])
        )
        for k, p in enumerate(row):
            slice_items.append(
                LabeledScore(
                    score=float(p),
                    label=label,
                    unit_id=f"{vol['id']}-s{k}",
                    motion_type=vol["motion_type"],
                )
            )

    report = evaluate_run(slice_items, volume_items)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verdicts.json").write_text(json.dumps(verdicts, indent=1) + "\n")
        (out / "report.json").write_text(report_to_json(report) + "\n")
        (out / "report.txt").write_text(render_report(report) + "\n")
    return report
