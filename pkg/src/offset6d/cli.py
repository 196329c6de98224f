"""Command-line surface: dataset generation, encoding, verification, solving,
evaluation, and the distribution experiment.

Dataset layout (one directory per dataset)::

    manifest.txt                 # dataset/v1 key-value: spec echo + count
    model.ply                    # sampled object model (meters)
    scene_00000/
        depth.pgm                # 16-bit, millimeters, 0 = invalid
        mask.pgm                 # 8-bit, 255 = foreground
        pose.txt                 # ground truth, object -> camera
        intrinsics.txt

Encodings mirror the scene directories (encoding.txt + targets.txt each).
All commands are deterministic for fixed inputs and seed; CSV outputs are
byte-identical across reruns unless ``--stamp`` adds a timestamp comment.
Commands exit nonzero with a diagnostic on any error.
"""

from __future__ import annotations

import dataclasses
import datetime
import sys
from pathlib import Path

import click
import numpy as np

from . import formats, synth
from .encoding import (
    ConstraintForm,
    InputMode,
    TargetMode,
    constraint_residual,
    encode_input,
    encode_targets,
)
from .errors import DegenerateConfigurationError, Offset6DError
from .geometry import RigidPose
from .metrics import (
    MetricConfig,
    add,
    add_s,
    add_selective,
    accuracy_at_threshold,
    auc,
    decompose_add_loss,
    weighted_add_loss,
)
from .refpoint import RefStrategy, make_reference
from .solver import rotation_geodesic_error, solve_from_constraints
from .synth import perturbation_rng

_STRATEGIES = {s.value: s for s in RefStrategy}
_INPUT_MODES = {m.value: m for m in InputMode}
_TARGET_MODES = {m.value: m for m in TargetMode}
_FORMS = {f.value: f for f in ConstraintForm}

SOLVES_VERSION = "solves/v1"
RESULTS_VERSION = "results/v1"
DIST_VERSION = "dist/v1"
LOSS_VERSION = "loss/v1"

SOLVES_HEADER = [
    "scene", "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22",
    "tx", "ty", "tz", "residual_rms", "point_count", "flag",
]
RESULTS_HEADER = [
    "scene", "add", "add_s", "add_selective", "rotation_error_rad",
    "translation_error_m", "solver_residual_rms", "flag",
]
DIST_HEADER = ["quantity", "component", "variance", "min", "max", "variance_ratio"]
LOSS_HEADER = ["scene", "total", "rotation_part", "cross_term", "translation_part", "weighted_total"]


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _stamp_value(enabled: bool) -> str | None:
    return datetime.datetime.now(datetime.timezone.utc).isoformat() if enabled else None


def _scene_dirs(dataset: Path, count: int) -> list[Path]:
    dirs = [dataset / formats.scene_name(i) for i in range(count)]
    missing = [d.name for d in dirs if not d.is_dir()]
    if missing:
        raise _fail(f"dataset {dataset} is missing scene directories: {missing[:5]}")
    return dirs


def _load_dataset(dataset: str) -> tuple[Path, synth.SceneSpec, int]:
    root = Path(dataset)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise _fail(f"{manifest} not found; is {dataset} a dataset directory?")
    spec, count = formats.read_manifest(manifest)
    return root, spec, count


@click.group()
def main() -> None:
    """Relative-offset 6D pose toolkit."""


@main.command("synth-gen")
@click.option("--config", "-c", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Overrides output_dir from the config.")
@click.option("--count", type=int, default=None, help="Overrides scene_count from the config.")
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
def synth_gen(config_path: str, out: str | None, count: int | None, seed: int | None) -> None:
    """Generate a synthetic dataset directory."""
    try:
        kv = formats.read_experiment_config(config_path)
        spec = formats.pairs_to_spec(kv, config_path)
        if seed is not None:
            spec = dataclasses.replace(spec, seed=seed)
        n = count if count is not None else int(kv.get("scene_count", "0"))
        if n <= 0:
            raise _fail("scene count must be positive (set scene_count or --count)")
        out_dir = Path(out or kv.get("output_dir", ""))
        if not str(out_dir):
            raise _fail("no output directory (set output_dir or --out)")

        model = synth.model_for_spec(spec)
        out_dir.mkdir(parents=True, exist_ok=True)
        formats.write_manifest(out_dir / "manifest.txt", spec, n)
        formats.write_model(out_dir / "model.ply", model)
        for index in range(n):
            scene = synth.render_scene(spec, index, model=model)
            formats.write_scene_dir(out_dir / formats.scene_name(index), scene.observation)
        click.echo(f"wrote {n} scenes to {out_dir}")
    except Offset6DError as exc:
        raise _fail(str(exc)) from exc


@main.command("encode")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--strategy", type=click.Choice(sorted(_STRATEGIES)), default=RefStrategy.MEAN_VISIBLE.value)
@click.option("--input-mode", type=click.Choice(sorted(_INPUT_MODES)), default=InputMode.GEOMETRIC.value)
@click.option("--target-mode", type=click.Choice(sorted(_TARGET_MODES)), default=TargetMode.RELATIVE_OFFSET.value)
@click.option("--form", type=click.Choice(sorted(_FORMS)), default=ConstraintForm.CORRECTED.value,
              help="Constraint form recorded in the encoding header.")
@click.option("--include-uv-offsets", is_flag=True, default=False)
def encode_cmd(dataset: str, out: str, strategy: str, input_mode: str, target_mode: str,
               form: str, include_uv_offsets: bool) -> None:
    """Encode every scene of a dataset into input channels and targets."""
    try:
        root, _, count = _load_dataset(dataset)
        out_dir = Path(out)
        for scene_dir in _scene_dirs(root, count):
            obs = formats.read_scene_dir(scene_dir)
            ref = make_reference(obs.depth, obs.mask, obs.intrinsics, _STRATEGIES[strategy])
            enc = encode_input(obs, ref, _INPUT_MODES[input_mode], include_uv_offsets=include_uv_offsets)
            enc_dir = out_dir / scene_dir.name
            formats.write_encoding(enc_dir / "encoding.txt", enc, _FORMS[form])
            if obs.gt_pose is not None:
                tgt = encode_targets(obs, ref, _TARGET_MODES[target_mode])
                formats.write_targets(enc_dir / "targets.txt", tgt)
        click.echo(f"encoded {count} scenes to {out_dir}")
    except Offset6DError as exc:
        raise _fail(str(exc)) from exc


def _encoding_dirs(encodings: Path) -> list[Path]:
    dirs = sorted(p for p in encodings.iterdir() if p.is_dir() and p.name.startswith("scene_"))
    if not dirs:
        raise _fail(f"no scene encodings under {encodings}")
    return dirs


@main.command("verify")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--encodings", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--form", type=click.Choice(sorted(_FORMS) + ["both"]), default="both")
@click.option("--tolerance", type=float, default=1e-9, show_default=True,
              help="Exit nonzero when the corrected-form max residual exceeds this.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def verify_cmd(dataset: str, encodings: str, form: str, tolerance: float, out: str | None) -> None:
    """Check constraint residuals of encodings against ground-truth poses."""
    try:
        root, _, count = _load_dataset(dataset)
        requested = list(_FORMS.values()) if form == "both" else [_FORMS[form]]
        gate_form = ConstraintForm.CORRECTED
        forms = set(requested) | {gate_form}
        stats = {f: {"max": 0.0, "sq_sum": 0.0, "n": 0} for f in forms}
        for scene_dir, enc_dir in zip(_scene_dirs(root, count), _encoding_dirs(Path(encodings))):
            obs = formats.read_scene_dir(scene_dir)
            if obs.gt_pose is None:
                raise _fail(f"{scene_dir} has no ground-truth pose")
            enc, _ = formats.read_encoding(enc_dir / "encoding.txt")
            tgt = formats.read_targets(enc_dir / "targets.txt")
            for f in forms:
                residual = constraint_residual(enc, tgt, obs.gt_pose, f)
                norms = np.linalg.norm(residual, axis=1)
                stats[f]["max"] = max(stats[f]["max"], float(norms.max()))
                stats[f]["sq_sum"] += float(np.sum(norms**2))
                stats[f]["n"] += norms.size
        pairs: list[tuple[str, str]] = [("format", "verify/v1")]
        for f in requested:
            rms = (stats[f]["sq_sum"] / stats[f]["n"]) ** 0.5
            click.echo(f"{f.value}: max residual {stats[f]['max']:.3e}, rms {rms:.3e}")
            pairs.append((f"{f.value.replace('-', '_')}_max", formats.format_float(stats[f]["max"])))
            pairs.append((f"{f.value.replace('-', '_')}_rms", formats.format_float(rms)))
        if out:
            formats.write_keyvalue(out, pairs)
        if stats[gate_form]["max"] > tolerance:
            click.echo(
                f"corrected-form max residual {stats[gate_form]['max']:.3e} exceeds tolerance {tolerance:.3e}",
                err=True,
            )
            sys.exit(1)
    except Offset6DError as exc:
        raise _fail(str(exc)) from exc


@main.command("solve")
@click.option("--encodings", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--perturb-sigma", type=float, default=0.0, show_default=True,
              help="Gaussian noise added to the object-frame targets before solving.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the perturbation stream.")
@click.option("--refine", type=int, default=0, show_default=True, help="Refinement iterations.")
@click.option("--stamp", is_flag=True, default=False, help="Add a timestamp comment (breaks byte-identity).")
def solve_cmd(encodings: str, out: str, perturb_sigma: float, seed: int, refine: int, stamp: bool) -> None:
    """Recover poses from encodings (optionally with perturbed targets)."""
    try:
        rows = []
        for index, enc_dir in enumerate(_encoding_dirs(Path(encodings))):
            enc, _ = formats.read_encoding(enc_dir / "encoding.txt")
            tgt = formats.read_targets(enc_dir / "targets.txt")
            delta_abc = tgt.delta_abc
            if perturb_sigma > 0:
                rng = perturbation_rng(seed, index)
                delta_abc = delta_abc + rng.normal(0.0, perturb_sigma, delta_abc.shape)
            try:
                report = solve_from_constraints(enc, delta_abc, enc.ref, refine_iterations=refine)
            except DegenerateConfigurationError:
                rows.append([enc_dir.name] + [None] * 14 + ["degenerate"])
                continue
            pose = report.pose
            rows.append(
                [enc_dir.name]
                + [float(v) for v in pose.rotation.ravel()]
                + [float(v) for v in pose.translation]
                + [report.residual_rms, report.point_count, report.condition_flag.value]
            )
        formats.write_csv(out, SOLVES_VERSION, SOLVES_HEADER, rows, stamp=_stamp_value(stamp))
        click.echo(f"solved {len(rows)} scenes -> {out}")
    except Offset6DError as exc:
        raise _fail(str(exc)) from exc


def _read_solves(path) -> dict[str, tuple[RigidPose | None, float | None]]:
    header, rows = formats.read_csv(path, SOLVES_VERSION)
    if header != SOLVES_HEADER:
        raise _fail(f"{path}: unexpected solves header {header}")
    out: dict[str, tuple[RigidPose | None, float | None]] = {}
    for row in rows:
        name = row[0]
        if row[-1] == "degenerate":
            out[name] = (None, None)
            continue
        rotation = np.array([float(v) for v in row[1:10]]).reshape(3, 3)
        translation = np.array([float(v) for v in row[10:13]])
        out[name] = (RigidPose(rotation, translation), float(row[13]))
    return out


@main.command("eval")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--auc-max", type=float, default=0.1, show_default=True)
@click.option("--threshold-fraction", type=float, default=0.1, show_default=True)
@click.option("--summary-out", type=click.Path(dir_okay=False), default=None)
@click.option("--stamp", is_flag=True, default=False)
def eval_cmd(dataset: str, pred: str, out: str, auc_max: float, threshold_fraction: float,
             summary_out: str | None, stamp: bool) -> None:
    """Score predicted poses against ground truth."""
    try:
        root, _, count = _load_dataset(dataset)
        model = formats.read_model(root / "model.ply")
        cfg = MetricConfig(auc_max_threshold=auc_max, threshold_fraction=threshold_fraction)
        predictions = _read_solves(pred)
        rows = []
        selective_errors = []
        for scene_dir in _scene_dirs(root, count):
            obs = formats.read_scene_dir(scene_dir)
            if obs.gt_pose is None:
                raise _fail(f"{scene_dir} has no ground-truth pose")
            if scene_dir.name not in predictions:
                raise _fail(f"{pred} has no row for {scene_dir.name}")
            pose, residual = predictions[scene_dir.name]
            if pose is None:
                rows.append([scene_dir.name] + [None] * 6 + ["degenerate"])
                continue
            gt = obs.gt_pose
            err_add = add(pose, gt, model)
            err_add_s = add_s(pose, gt, model)
            err_sel = add_selective(pose, gt, model)
            selective_errors.append(err_sel)
            rows.append(
                [
                    scene_dir.name,
                    err_add,
                    err_add_s,
                    err_sel,
                    rotation_geodesic_error(pose, gt),
                    float(np.linalg.norm(pose.translation - gt.translation)),
                    residual,
                    "ok",
                ]
            )
        formats.write_csv(out, RESULTS_VERSION, RESULTS_HEADER, rows, stamp=_stamp_value(stamp))
        if not selective_errors:
            raise _fail("no non-degenerate predictions to summarize")
        summary = [
            ("format", "summary/v1"),
            ("scene_count", str(len(rows))),
            ("mean_add_selective", formats.format_float(float(np.mean(selective_errors)))),
            ("accuracy_at_threshold", formats.format_float(accuracy_at_threshold(selective_errors, model, cfg))),
            ("auc", formats.format_float(auc(selective_errors, cfg))),
        ]
        for key, value in summary[1:]:
            click.echo(f"{key} = {value}")
        if summary_out:
            formats.write_keyvalue(summary_out, summary)
    except Offset6DError as exc:
        raise _fail(str(exc)) from exc


@main.command("dist-report")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--strategy", type=click.Choice(sorted(_STRATEGIES)), default=RefStrategy.MEAN_VISIBLE.value)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--stamp", is_flag=True, default=False)
def dist_report_cmd(dataset: str, strategy: str, out: str, stamp: bool) -> None:
    """Translation-spread table: raw ground truth vs anchored offsets."""
    try:
        root, _, count = _load_dataset(dataset)
        observations = [formats.read_scene_dir(d) for d in _scene_dirs(root, count)]
        report = synth.distribution_report(observations, _STRATEGIES[strategy])
        rows = [
            [r["quantity"], r["component"], r["variance"], r["min"], r["max"], r["variance_ratio"]]
            for r in report.rows()
        ]
        formats.write_csv(out, DIST_VERSION, DIST_HEADER, rows, stamp=_stamp_value(stamp))
        for r in report.rows():
            ratio = "" if r["variance_ratio"] is None else f"  ratio {r['variance_ratio']:.1f}"
            click.echo(
                f"{r['quantity']:8s} {r['component']}: var {r['variance']:.3e} "
                f"range ({r['min']:.4f}, {r['max']:.4f}){ratio}"
            )
    except Offset6DError as exc:
        raise _fail(str(exc)) from exc


@main.command("loss-decompose")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--w-rot", type=float, default=1.0, show_default=True)
@click.option("--w-trans", type=float, default=1.0, show_default=True)
@click.option("--stamp", is_flag=True, default=False)
def loss_decompose_cmd(dataset: str, pred: str, out: str, w_rot: float, w_trans: float, stamp: bool) -> None:
    """Split the squared pose loss into rotation/cross/translation parts."""
    try:
        root, _, count = _load_dataset(dataset)
        model = formats.read_model(root / "model.ply")
        predictions = _read_solves(pred)
        rows = []
        for scene_dir in _scene_dirs(root, count):
            obs = formats.read_scene_dir(scene_dir)
            if obs.gt_pose is None:
                raise _fail(f"{scene_dir} has no ground-truth pose")
            pose, _ = predictions.get(scene_dir.name, (None, None))
            if pose is None:
                rows.append([scene_dir.name] + [None] * 5)
                continue
            parts = decompose_add_loss(pose, obs.gt_pose, model)
            rows.append(
                [
                    scene_dir.name,
                    parts.total,
                    parts.rotation_part,
                    parts.cross_term,
                    parts.translation_part,
                    weighted_add_loss(pose, obs.gt_pose, model, w_rot, w_trans),
                ]
            )
        formats.write_csv(out, LOSS_VERSION, LOSS_HEADER, rows, stamp=_stamp_value(stamp))
        click.echo(f"decomposed {len(rows)} scenes -> {out}")
    except Offset6DError as exc:
        raise _fail(str(exc)) from exc


if __name__ == "__main__":
    main()
