"""Command-line interface.

Subcommands cover the full pipeline: phantom, simulate, inject-motion,
reconstruct, make-dataset, train, detect, evaluate, report, and run (one
scenario end to end). Exit codes: 0 success, 2 validation/configuration
error, 3 I/O or integrity error, 4 numeric failure.

The CBCTMOTION_WORKERS environment variable overrides the kernel thread
count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .detector import scorer_from_json, scorer_to_json, score_volume
from .errors import BehindSourceError, ConfigurationError, IntegrityError, ValidationError
from .evaluation import render_report
from .geometry import build_circular_trajectory, select_short_scan_views, trajectory_from_json, trajectory_to_json
from .io import read_projection_stack, read_volume, write_projection_stack, write_slice_png, write_volume
from .motion import SCENARIO_NAMES, apply_motion, label_views, sample_motion, scenario_spec
from .phantom import AugmentSpec, augment, bounding_radius, default_phantom, phantom_from_json, phantom_to_json, rasterize
from .pipeline import evaluate_dataset, make_dataset, run_pipeline, train_from_dataset
from .projector import add_transmission_noise, forward_project
from .recon import fdk_reconstruct
from .scenario import PRESETS, scenario_from_json

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _add_phantom(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("phantom", help="generate an analytic head phantom spec")
    p.add_argument("--kind", choices=("small", "medium", "large"), default="medium")
    p.add_argument("--metal", action="store_true", help="add metal bead inserts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=None, help="augmentation scale factor (0.8-1.2)")
    p.add_argument("--rotate", type=float, nargs=3, metavar=("RX", "RY", "RZ"), default=None,
                   help="augmentation rotations in degrees (max 5)")
    p.add_argument("--translate", type=float, nargs=3, metavar=("TX", "TY", "TZ"), default=None,
                   help="augmentation translations in mm (max 5)")
    p.add_argument("--out", required=True, help="output phantom JSON path")


def _cmd_phantom(args: argparse.Namespace) -> int:
    spec = default_phantom(args.kind, metal=args.metal, seed=args.seed)
    if args.scale is not None or args.rotate is not None or args.translate is not None:
        aug = AugmentSpec(
            scale=1.0 if args.scale is None else args.scale,
            rotation_deg=(0.0, 0.0, 0.0) if args.rotate is None else tuple(args.rotate),
            translation_mm=(0.0, 0.0, 0.0) if args.translate is None else tuple(args.translate),
        )
        spec = augment(spec, aug)
    Path(args.out).write_text(phantom_to_json(spec) + "\n")
    print(f"wrote {args.out} ({len(spec.primitives)} primitives, "
          f"bounding radius {bounding_radius(spec):.1f} mm)")
    return 0


def _add_simulate(sub) -> None:
    p = sub.add_parser("simulate", help="forward-project a phantom into a projection stack")
    p.add_argument("--phantom", required=True, help="phantom JSON from the phantom command")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--trajectory", default=None,
                   help="trajectory JSON (e.g. motion-perturbed); default: nominal circular")
    p.add_argument("--noise-i0", type=float, default=None, help="transmission counts for Poisson noise")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output stack base path (.raw/.json)")
    p.add_argument("--save-trajectory", default=None, help="also write the trajectory JSON here")


def _cmd_simulate(args) -> int:
    preset = PRESETS[args.preset]
    spec = phantom_from_json(Path(args.phantom).read_text())
    if args.trajectory is not None:
        traj = trajectory_from_json(Path(args.trajectory).read_text())
    else:
        traj = build_circular_trajectory(preset.geometry)
    volume = rasterize(spec, preset.grid())
    stack = forward_project(volume, traj)
    if args.noise_i0 is not None:
        stack = add_transmission_noise(stack, args.noise_i0, args.noise_seed)
    write_projection_stack(stack, args.out)
    if args.save_trajectory:
        Path(args.save_trajectory).write_text(trajectory_to_json(traj) + "\n")
    print(f"wrote {args.out}.raw ({stack.values.shape[0]} frames)")
    return 0


def _add_inject_motion(sub) -> None:
    p = sub.add_parser("inject-motion", help="perturb a trajectory with a motion scenario")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--trajectory", default=None, help="input trajectory JSON; default: nominal circular")
    p.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    p.add_argument("--amplitude", type=float, default=5.0, help="degrees (3-8)")
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"), required=True)
    p.add_argument("--out", required=True, help="output perturbed trajectory JSON")
    p.add_argument("--labels-out", default=None, help="write ground-truth view labels JSON here")


def _cmd_inject_motion(args) -> int:
    if args.trajectory is not None:
        traj = trajectory_from_json(Path(args.trajectory).read_text())
    else:
        traj = build_circular_trajectory(PRESETS[args.preset].geometry)
    spec = scenario_spec(args.scenario, amplitude_deg=args.amplitude, window=tuple(args.window))
    motions = sample_motion(spec, traj)
    moved = apply_motion(traj, motions)
    Path(args.out).write_text(trajectory_to_json(moved) + "\n")
    if args.labels_out:
        views = select_short_scan_views(traj)
        labels = label_views(views, motions, traj)
        doc = {f"view{v.view_index}": lab for v, lab in zip(views, labels)}
        Path(args.labels_out).write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {args.out}")
    return 0


def _add_reconstruct(sub) -> None:
    p = sub.add_parser("reconstruct", help="FDK reconstruction of a view or the full scan")
    p.add_argument("--projections", required=True, help="projection stack base path")
    p.add_argument("--trajectory", default=None,
                   help="reconstruction trajectory JSON; default: nominal circular for the preset")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--view", default="full",
                   help="short-scan view index (0..n-1) or 'full' (default)")
    p.add_argument("--out", required=True, help="output volume base path")
    p.add_argument("--png", default=None, help="optional mid-slice PNG path")


def _cmd_reconstruct(args) -> int:
    stack = read_projection_stack(args.projections)
    preset = PRESETS[args.preset]
    if args.trajectory is not None:
        traj = trajectory_from_json(Path(args.trajectory).read_text())
    else:
        traj = build_circular_trajectory(stack.geometry)
    view = None
    if args.view != "full":
        views = select_short_scan_views(traj)
        idx = int(args.view)
        if not 0 <= idx < len(views):
            raise ValidationError(f"view index {idx} out of range 0..{len(views) - 1}")
        view = views[idx]
    volume = fdk_reconstruct(stack, traj, preset.grid(), view)
    write_volume(volume, args.out)
    if args.png:
        write_slice_png(volume.values[volume.values.shape[0] // 2], args.png)
    print(f"wrote {args.out}.raw")
    return 0


def _add_make_dataset(sub) -> None:
    p = sub.add_parser("make-dataset", help="generate balanced train and metal-phantom test splits")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--train-seed", type=int, default=1000)
    p.add_argument("--test-seed", type=int, default=2000)
    p.add_argument("--save-volumes", action="store_true", help="also write every view volume")


def _cmd_make_dataset(args) -> int:
    stats = make_dataset(
        args.out,
        preset=args.preset,
        train_seed=args.train_seed,
        test_seed=args.test_seed,
        save_volumes=args.save_volumes,
        progress=lambda msg: print(msg, flush=True),
    )
    print(json.dumps(stats))
    return 0


def _add_train(sub) -> None:
    p = sub.add_parser("train", help="train the slice scorer on a generated split")
    p.add_argument("--dataset", required=True, help="split directory (e.g. out/train)")
    p.add_argument("--out", required=True, help="output scorer JSON")
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)


def _cmd_train(args) -> int:
    scorer = train_from_dataset(
        args.dataset,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    Path(args.out).write_text(scorer_to_json(scorer) + "\n")
    print(f"wrote {args.out} (final loss {scorer.loss_trace_[-1]:.4f})")
    return 0


def _add_detect(sub) -> int:
    p = sub.add_parser("detect", help="classify one reconstructed volume")
    p.add_argument("--scorer", required=True)
    p.add_argument("--volume", required=True, help="volume base path")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--out", default=None, help="verdict JSON path (default: stdout only)")
    p.add_argument("--png-dir", default=None, help="export normalized slices as PNGs here")


def _cmd_detect(args) -> int:
    scorer = scorer_from_json(Path(args.scorer).read_text())
    volume = read_volume(args.volume)
    preset = PRESETS[args.preset]
    verdict = score_volume(
        scorer,
        volume,
        n_slices=preset.slices_per_volume,
        out_size=preset.slice_size,
        volume_id=Path(args.volume).stem,
    )
    doc = {
        "volume_id": verdict.volume_id,
        "y_pred": verdict.y_pred,
        "y_final": verdict.y_final,
        "n_slices": verdict.n_slices,
        "slice_scores": list(verdict.slice_scores),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    if args.png_dir:
        from .detector import extract_axial_slices, normalize_slice

        for s in extract_axial_slices(volume, preset.slices_per_volume, verdict.volume_id):
            norm = normalize_slice(s, preset.slice_size)
            write_slice_png(norm.data, Path(args.png_dir) / f"slice{s.index:04d}.png")
    print(f"{verdict.volume_id}: {verdict.y_final} (y_pred={verdict.y_pred:.4f})")
    return 0


def _add_evaluate(sub) -> None:
    p = sub.add_parser("evaluate", help="score a split and write the per-motion-type report")
    p.add_argument("--dataset", required=True, help="split directory (e.g. out/test)")
    p.add_argument("--scorer", required=True)
    p.add_argument("--out-dir", default=None, help="where to write verdicts/report (default: dataset dir)")


def _cmd_evaluate(args) -> int:
    scorer = scorer_from_json(Path(args.scorer).read_text())
    out_dir = args.out_dir if args.out_dir is not None else args.dataset
    report = evaluate_dataset(args.dataset, scorer, out_dir)
    print(render_report(report))
    return 0


def _add_report(sub) -> None:
    p = sub.add_parser("report", help="render a report JSON as a table, optionally plot PR summary")
    p.add_argument("--report", required=True, help="report.json from evaluate")
    p.add_argument("--plot", default=None, help="write a bar chart PNG of per-type AUC-PR")


def _cmd_report(args) -> int:
    doc = json.loads(Path(args.report).read_text())
    header = f"{'Motion Type':<12} {'Slices':>8} {'Volume':>8}"
    print(header)
    print("-" * len(header))
    for tag, row in doc["per_type"].items():
        print(f"{tag:<12} {row['slices']:>8.3f} {row['volume']:>8.3f}")
    print("-" * len(header))
    print(f"{'Average':<12} {doc['average']['slices']:>8.3f} {doc['average']['volume']:>8.3f}")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        tags = list(doc["per_type"])
        vols = [doc["per_type"][t]["volume"] for t in tags]
        sls = [doc["per_type"][t]["slices"] for t in tags]
        x = np.arange(len(tags))
        fig, ax = plt.subplots(figsize=(9, 4))
        ax.bar(x - 0.2, sls, width=0.4, label="slices")
        ax.bar(x + 0.2, vols, width=0.4, label="volume")
        ax.set_xticks(x, tags, rotation=45, ha="right")
        ax.set_ylabel("AUC-PR")
        ax.set_ylim(0, 1.05)
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"wrote {args.plot}")
    return 0


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="run one scenario end to end (simulate, reconstruct, score)")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scorer", default=None, help="scorer JSON for verdicts")
    p.add_argument("--save-volumes", action="store_true")


def _cmd_run(args) -> int:
    scenario = scenario_from_json(Path(args.scenario).read_text())
    scorer = scorer_from_json(Path(args.scorer).read_text()) if args.scorer else None
    result = run_pipeline(scenario, args.out, scorer=scorer, save_volumes=args.save_volumes)
    print((Path(args.out) / "summary.txt").read_text().rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbctmotion",
        description="Simulate rigid-motion-corrupted dental CBCT scans and detect "
        "motion artifacts in Parker-weighted short-scan reconstructions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_phantom(sub)
    _add_simulate(sub)
    _add_inject_motion(sub)
    _add_reconstruct(sub)
    _add_make_dataset(sub)
    _add_train(sub)
    _add_detect(sub)
    _add_evaluate(sub)
    _add_report(sub)
    _add_run(sub)
    return parser


_COMMANDS = {
    "phantom": _cmd_phantom,
    "simulate": _cmd_simulate,
    "inject-motion": _cmd_inject_motion,
    "reconstruct": _cmd_reconstruct,
    "make-dataset": _cmd_make_dataset,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    workers = os.environ.get("CBCTMOTION_WORKERS")
    if workers:
        try:
            import numba

            numba.set_num_threads(max(1, int(workers)))
        except ValueError as exc:
            print(f"error: bad CBCTMOTION_WORKERS value {workers!r}: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, ConfigurationError, BehindSourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except IntegrityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, np.linalg.LinAlgError, ZeroDivisionError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
