"""File formats: PLY point sets, PGM images, key/value text, versioned CSV.

Conventions:

  - Model points: ASCII PLY, ``property double`` coordinates in meters,
    written with shortest round-trip decimals so read-back is exact.  A
    ``comment symmetric true|false`` line carries the symmetry flag.
  - Depth: 16-bit binary PGM (P5, maxval 65535, big-endian), value = depth
    in millimeters rounded half-even, 0 = invalid.
  - Mask: 8-bit binary PGM, 255 = foreground, anything else but 0 rejected.
  - Poses, intrinsics, reference points, encodings: line-oriented
    ``key = value`` text with repr-precision numbers (exact round trip).
  - Results: CSV with a ``# name/vN`` version line; readers reject unknown
    versions.

All writers go through a temp file plus atomic rename, so an interrupted
run never leaves a truncated artifact behind.  Parse errors name the byte
offset of the offending data where it is meaningful.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .encoding import ConstraintForm, GeoEncoding, GeoTargets, InputMode, SceneObservation, TargetMode
from .errors import ConfigError, FormatError
from .geometry import CameraIntrinsics, RigidPose
from .metrics import ObjectModel
from .refpoint import DepthMap, InstanceMask, ReferencePoint, RefStrategy

DEPTH_UNIT = 0.001  # PGM depth LSB in meters
MAX_DEPTH_MM = 65535


# ---------------------------------------------------------------------------
# atomic writing


def _atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(path, text.encode())


# ---------------------------------------------------------------------------
# PLY


def write_ply(path, points: np.ndarray, symmetric: bool | None = None) -> None:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got {pts.shape}")
    lines = ["ply", "format ascii 1.0"]
    if symmetric is not None:
        lines.append(f"comment symmetric {'true' if symmetric else 'false'}")
    lines += [
        f"element vertex {pts.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    for p in pts:
        lines.append(f"{format_float(p[0])} {format_float(p[1])} {format_float(p[2])}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_ply(path) -> tuple[np.ndarray, bool | None]:
    """Returns (points, symmetric-flag-or-None)."""
    raw = Path(path).read_bytes()
    offset = 0
    lines = []
    for chunk in raw.split(b"\n"):
        lines.append((offset, chunk.decode("ascii", errors="replace")))
        offset += len(chunk) + 1

    it = iter(lines)
    off, magic = next(it, (0, ""))
    if magic.strip() != "ply":
        raise FormatError(f"not a PLY file: first line {magic!r}", offset=off)
    vertex_count = None
    symmetric = None
    properties = []
    data_start = None
    for off, line in it:
        words = line.split()
        if not words:
            continue
        if words[0] == "comment":
            if len(words) == 3 and words[1] == "symmetric":
                symmetric = words[2] == "true"
            continue
        if words[0] == "format":
            if words[1:] != ["ascii", "1.0"]:
                raise FormatError(f"unsupported PLY format {line!r}", offset=off)
        elif words[0] == "element":
            if words[1] != "vertex":
                raise FormatError(f"unsupported PLY element {words[1]!r}", offset=off)
            try:
                vertex_count = int(words[2])
            except (IndexError, ValueError):
                raise FormatError(f"bad element line {line!r}", offset=off) from None
        elif words[0] == "property":
            properties.append(words[-1])
        elif words[0] == "end_header":
            data_start = it
            break
        else:
            raise FormatError(f"unexpected header line {line!r}", offset=off)
    if data_start is None or vertex_count is None:
        raise FormatError("PLY header ended without end_header/element vertex", offset=len(raw))
    if properties[:3] != ["x", "y", "z"]:
        raise FormatError(f"expected x y z properties, got {properties}", offset=0)

    points = np.empty((vertex_count, 3))
    filled = 0
    for off, line in data_start:
        if not line.strip():
            continue
        if filled >= vertex_count:
            raise FormatError("more vertex rows than declared", offset=off)
        words = line.split()
        if len(words) < 3:
            raise FormatError(f"vertex row needs 3 values, got {line!r}", offset=off)
        try:
            points[filled] = [float(words[0]), float(words[1]), float(words[2])]
        except ValueError:
            raise FormatError(f"bad vertex row {line!r}", offset=off) from None
        filled += 1
    if filled != vertex_count:
        raise FormatError(
            f"declared {vertex_count} vertices but found {filled}", offset=len(raw)
        )
    return points, symmetric


def write_model(path, model: ObjectModel) -> None:
    write_ply(path, model.points, symmetric=model.symmetric)


def read_model(path) -> ObjectModel:
    points, symmetric = read_ply(path)
    return ObjectModel.from_points(points, bool(symmetric))


# ---------------------------------------------------------------------------
# PGM


def _parse_pgm_header(raw: bytes, path) -> tuple[int, int, int, int]:
    """Returns (width, height, maxval, data_offset)."""
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {raw[:2]!r})", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(raw):
            raise FormatError(f"{path}: truncated PGM header", offset=pos)
        ch = raw[pos : pos + 1]
        if ch == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(raw) and raw[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(raw[start:pos]))
        else:
            raise FormatError(f"{path}: unexpected header byte {ch!r}", offset=pos)
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise FormatError(f"{path}: missing whitespace after maxval", offset=pos)
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: bad dimensions {width}x{height}", offset=2)
    return width, height, maxval, pos


def write_depth_pgm(path, depth_m: np.ndarray) -> None:
    """Quantize meters to whole millimeters (round half-even) and store as
    16-bit PGM.  0 stays 0 (invalid)."""
    depth = np.asarray(depth_m, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError("depth must be 2-D")
    mm = np.rint(depth / DEPTH_UNIT)
    if np.any(mm < 0) or np.any(mm > MAX_DEPTH_MM):
        raise ValueError(f"depth out of the PGM range [0, {MAX_DEPTH_MM}] mm")
    header = f"P5\n{depth.shape[1]} {depth.shape[0]}\n{MAX_DEPTH_MM}\n".encode()
    _atomic_write_bytes(path, header + mm.astype(">u2").tobytes())


def read_depth_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    width, height, maxval, pos = _parse_pgm_header(raw, path)
    if maxval != MAX_DEPTH_MM:
        raise FormatError(f"{path}: depth PGM must have maxval {MAX_DEPTH_MM}, got {maxval}", offset=2)
    expected = width * height * 2
    if len(raw) - pos < expected:
        raise FormatError(
            f"{path}: expected {expected} data bytes, found {len(raw) - pos}",
            offset=len(raw),
        )
    if len(raw) - pos > expected:
        raise FormatError(f"{path}: trailing bytes after pixel data", offset=pos + expected)
    mm = np.frombuffer(raw, dtype=">u2", count=width * height, offset=pos)
    return mm.reshape(height, width).astype(np.float64) * DEPTH_UNIT


def write_mask_pgm(path, mask: np.ndarray) -> None:
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    header = f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode()
    _atomic_write_bytes(path, header + np.where(m, 255, 0).astype(np.uint8).tobytes())


def read_mask_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    width, height, maxval, pos = _parse_pgm_header(raw, path)
    if maxval != 255:
        raise FormatError(f"{path}: mask PGM must have maxval 255, got {maxval}", offset=2)
    expected = width * height
    if len(raw) - pos < expected:
        raise FormatError(
            f"{path}: expected {expected} data bytes, found {len(raw) - pos}",
            offset=len(raw),
        )
    if len(raw) - pos > expected:
        raise FormatError(f"{path}: trailing bytes after pixel data", offset=pos + expected)
    values = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=pos)
    bad = np.nonzero((values != 0) & (values != 255))[0]
    if bad.size:
        raise FormatError(
            f"{path}: mask value {values[bad[0]]} is neither 0 nor 255",
            offset=pos + int(bad[0]),
        )
    return (values == 255).reshape(height, width)


# ---------------------------------------------------------------------------
# key/value text


def format_float(x: float) -> str:
    return repr(float(x))


def format_floats(values) -> str:
    return " ".join(format_float(v) for v in np.asarray(values, dtype=np.float64).ravel())


def write_keyvalue(path, pairs: list[tuple[str, str]]) -> None:
    _atomic_write_text(path, "".join(f"{k} = {v}\n" for k, v in pairs))


def read_keyvalue(path) -> dict[str, str]:
    out: dict[str, str] = {}
    text = Path(path).read_text()
    offset = 0
    for line in text.split("\n"):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            if "=" not in stripped:
                raise FormatError(f"{path}: expected 'key = value', got {line!r}", offset=offset)
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key in out:
                raise FormatError(f"{path}: duplicate key {key!r}", offset=offset)
            out[key] = value.strip()
        offset += len(line.encode()) + 1
    return out


def _require(kv: dict[str, str], key: str, path) -> str:
    if key not in kv:
        raise FormatError(f"{path}: missing key {key!r}")
    return kv[key]


def _check_format(kv: dict[str, str], expected: str, path) -> None:
    found = _require(kv, "format", path)
    if found != expected:
        raise FormatError(f"{path}: expected format {expected!r}, found {found!r}")


def _check_no_extra(kv: dict[str, str], allowed: set[str], path) -> None:
    extra = set(kv) - allowed
    if extra:
        raise FormatError(f"{path}: unknown keys {sorted(extra)}")


def _floats(text: str, n: int, key: str, path) -> np.ndarray:
    parts = text.split()
    if len(parts) != n:
        raise FormatError(f"{path}: key {key!r} needs {n} values, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise FormatError(f"{path}: non-numeric value under key {key!r}") from None


def write_pose(path, pose: RigidPose) -> None:
    write_keyvalue(
        path,
        [
            ("format", "pose/v1"),
            ("rotation", format_floats(pose.rotation)),
            ("translation", format_floats(pose.translation)),
        ],
    )


def read_pose(path) -> RigidPose:
    kv = read_keyvalue(path)
    _check_format(kv, "pose/v1", path)
    _check_no_extra(kv, {"format", "rotation", "translation"}, path)
    rotation = _floats(_require(kv, "rotation", path), 9, "rotation", path).reshape(3, 3)
    translation = _floats(_require(kv, "translation", path), 3, "translation", path)
    return RigidPose(rotation, translation)


def write_intrinsics(path, k: CameraIntrinsics) -> None:
    write_keyvalue(
        path,
        [
            ("format", "intrinsics/v1"),
            ("fx", format_float(k.fx)),
            ("fy", format_float(k.fy)),
            ("cx", format_float(k.cx)),
            ("cy", format_float(k.cy)),
        ],
    )


def read_intrinsics(path) -> CameraIntrinsics:
    kv = read_keyvalue(path)
    _check_format(kv, "intrinsics/v1", path)
    _check_no_extra(kv, {"format", "fx", "fy", "cx", "cy"}, path)
    return CameraIntrinsics(
        fx=float(_require(kv, "fx", path)),
        fy=float(_require(kv, "fy", path)),
        cx=float(_require(kv, "cx", path)),
        cy=float(_require(kv, "cy", path)),
    )


def write_refpoint(path, ref: ReferencePoint) -> None:
    write_keyvalue(
        path,
        [
            ("format", "refpoint/v1"),
            ("x0", format_float(ref.x0)),
            ("y0", format_float(ref.y0)),
            ("d0", format_float(ref.d0)),
            ("strategy", ref.strategy.value),
        ],
    )


def read_refpoint(path) -> ReferencePoint:
    kv = read_keyvalue(path)
    _check_format(kv, "refpoint/v1", path)
    _check_no_extra(kv, {"format", "x0", "y0", "d0", "strategy"}, path)
    return ReferencePoint(
        x0=float(_require(kv, "x0", path)),
        y0=float(_require(kv, "y0", path)),
        d0=float(_require(kv, "d0", path)),
        strategy=RefStrategy(_require(kv, "strategy", path)),
    )


# ---------------------------------------------------------------------------
# encodings and targets (key/value header + one row per pixel)


def _ref_pairs(ref: ReferencePoint) -> list[tuple[str, str]]:
    return [
        ("x0", format_float(ref.x0)),
        ("y0", format_float(ref.y0)),
        ("d0", format_float(ref.d0)),
        ("strategy", ref.strategy.value),
    ]


def _ref_from(kv: dict[str, str], path) -> ReferencePoint:
    return ReferencePoint(
        x0=float(_require(kv, "x0", path)),
        y0=float(_require(kv, "y0", path)),
        d0=float(_require(kv, "d0", path)),
        strategy=RefStrategy(_require(kv, "strategy", path)),
    )


def _write_table(path, header_pairs: list[tuple[str, str]], columns: list[str], rows: np.ndarray) -> None:
    buf = io.StringIO()
    for k, v in header_pairs:
        buf.write(f"{k} = {v}\n")
    buf.write(f"count = {rows.shape[0]}\n")
    buf.write(f"columns = {' '.join(columns)}\n")
    buf.write("data:\n")
    for row in rows:
        fields = [
            str(int(value)) if name in ("u", "v") else format_float(value)
            for name, value in zip(columns, row)
        ]
        buf.write(" ".join(fields) + "\n")
    _atomic_write_text(path, buf.getvalue())


def _read_table(path) -> tuple[dict[str, str], list[str], np.ndarray]:
    text = Path(path).read_text()
    lines = text.split("\n")
    kv: dict[str, str] = {}
    data_rows: list[list[float]] = []
    offset = 0
    in_data = False
    columns: list[str] = []
    for line in lines:
        stripped = line.strip()
        if in_data:
            if stripped:
                try:
                    data_rows.append([float(w) for w in stripped.split()])
                except ValueError:
                    raise FormatError(f"{path}: bad data row {line!r}", offset=offset) from None
        elif stripped == "data:":
            in_data = True
        elif stripped and not stripped.startswith("#"):
            if "=" not in stripped:
                raise FormatError(f"{path}: expected 'key = value', got {line!r}", offset=offset)
            key, _, value = stripped.partition("=")
            kv[key.strip()] = value.strip()
        offset += len(line.encode()) + 1
    if not in_data:
        raise FormatError(f"{path}: missing 'data:' section", offset=offset)
    columns = _require(kv, "columns", path).split()
    count = int(_require(kv, "count", path))
    if len(data_rows) != count:
        raise FormatError(f"{path}: declared {count} rows, found {len(data_rows)}")
    for row in data_rows:
        if len(row) != len(columns):
            raise FormatError(f"{path}: row with {len(row)} fields, expected {len(columns)}")
    data = np.array(data_rows, dtype=np.float64).reshape(len(data_rows), len(columns))
    return kv, columns, data


_ENCODING_KEYS = {
    "format", "mode", "constraint_form", "x0", "y0", "d0", "strategy", "count", "columns",
}


def write_encoding(path, enc: GeoEncoding, constraint_form: ConstraintForm = ConstraintForm.CORRECTED) -> None:
    columns = ["u", "v", "delta_x", "delta_y", "delta_d"]
    parts = [
        enc.us.astype(np.float64),
        enc.vs.astype(np.float64),
        enc.delta_x,
        enc.delta_y,
        enc.delta_d,
    ]
    if enc.mode is InputMode.GEOMETRIC:
        columns += ["dd0", "t0dd0_x", "t0dd0_y", "t0dd0_z"]
        parts += [enc.dd0, enc.t0_over_dd0[:, 0], enc.t0_over_dd0[:, 1], enc.t0_over_dd0[:, 2]]
    if enc.delta_u is not None:
        columns += ["delta_u", "delta_v"]
        parts += [enc.delta_u, enc.delta_v]
    rows = np.stack(parts, axis=1)
    header = [
        ("format", "encoding/v1"),
        ("mode", enc.mode.value),
        ("constraint_form", constraint_form.value),
        *_ref_pairs(enc.ref),
    ]
    _write_table(path, header, columns, rows)


def read_encoding(path) -> tuple[GeoEncoding, ConstraintForm]:
    kv, columns, data = _read_table(path)
    _check_format(kv, "encoding/v1", path)
    _check_no_extra(kv, _ENCODING_KEYS, path)
    mode = InputMode(_require(kv, "mode", path))
    form = ConstraintForm(_require(kv, "constraint_form", path))
    ref = _ref_from(kv, path)
    col = {name: data[:, i] for i, name in enumerate(columns)}
    for needed in ("u", "v", "delta_x", "delta_y", "delta_d"):
        if needed not in col:
            raise FormatError(f"{path}: missing column {needed!r}")
    dd0 = t0_over_dd0 = None
    if mode is InputMode.GEOMETRIC:
        for needed in ("dd0", "t0dd0_x", "t0dd0_y", "t0dd0_z"):
            if needed not in col:
                raise FormatError(f"{path}: geometric encoding missing column {needed!r}")
        dd0 = col["dd0"]
        t0_over_dd0 = np.stack([col["t0dd0_x"], col["t0dd0_y"], col["t0dd0_z"]], axis=1)
    delta_u = col.get("delta_u")
    delta_v = col.get("delta_v")
    enc = GeoEncoding(
        us=col["u"].astype(np.int64),
        vs=col["v"].astype(np.int64),
        delta_x=col["delta_x"],
        delta_y=col["delta_y"],
        delta_d=col["delta_d"],
        dd0=dd0,
        t0_over_dd0=t0_over_dd0,
        ref=ref,
        mode=mode,
        delta_u=delta_u,
        delta_v=delta_v,
    )
    return enc, form


_TARGET_KEYS = {"format", "mode", "delta_t", "x0", "y0", "d0", "strategy", "count", "columns"}


def write_targets(path, tgt: GeoTargets) -> None:
    columns = ["u", "v", "da", "db", "dc"]
    rows = np.stack(
        [tgt.us.astype(np.float64), tgt.vs.astype(np.float64), tgt.delta_abc[:, 0], tgt.delta_abc[:, 1], tgt.delta_abc[:, 2]],
        axis=1,
    )
    header = [
        ("format", "targets/v1"),
        ("mode", tgt.mode.value),
        ("delta_t", format_floats(tgt.delta_t)),
        *_ref_pairs(tgt.ref),
    ]
    _write_table(path, header, columns, rows)


def read_targets(path) -> GeoTargets:
    kv, columns, data = _read_table(path)
    _check_format(kv, "targets/v1", path)
    _check_no_extra(kv, _TARGET_KEYS, path)
    mode = TargetMode(_require(kv, "mode", path))
    ref = _ref_from(kv, path)
    delta_t = _floats(_require(kv, "delta_t", path), 3, "delta_t", path)
    col = {name: data[:, i] for i, name in enumerate(columns)}
    for needed in ("u", "v", "da", "db", "dc"):
        if needed not in col:
            raise FormatError(f"{path}: missing column {needed!r}")
    return GeoTargets(
        delta_t=delta_t,
        delta_abc=np.stack([col["da"], col["db"], col["dc"]], axis=1),
        mode=mode,
        ref=ref,
        us=col["u"].astype(np.int64),
        vs=col["v"].astype(np.int64),
    )


# ---------------------------------------------------------------------------
# versioned CSV


def write_csv(path, version: str, header: list[str], rows: list[list], stamp: str | None = None) -> None:
    buf = io.StringIO()
    buf.write(f"# {version}\n")
    if stamp:
        buf.write(f"# generated {stamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (format_float(v) if isinstance(v, float) else v) for v in row])
    _atomic_write_text(path, buf.getvalue())


def read_csv(path, version: str) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text()
    lines = text.split("\n")
    if not lines or not lines[0].startswith("# "):
        raise FormatError(f"{path}: missing version line", offset=0)
    found = lines[0][2:].strip()
    if found != version:
        raise FormatError(f"{path}: expected version {version!r}, found {found!r}", offset=0)
    body = [ln for ln in lines[1:] if ln and not ln.startswith("#")]
    rows = list(csv.reader(body))
    if not rows:
        raise FormatError(f"{path}: missing CSV header row")
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# scene directories


def write_scene_dir(scene_dir, obs: SceneObservation) -> None:
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    write_depth_pgm(scene_dir / "depth.pgm", obs.depth.values)
    write_mask_pgm(scene_dir / "mask.pgm", obs.mask.values)
    write_intrinsics(scene_dir / "intrinsics.txt", obs.intrinsics)
    if obs.gt_pose is not None:
        write_pose(scene_dir / "pose.txt", obs.gt_pose)


def read_scene_dir(scene_dir) -> SceneObservation:
    scene_dir = Path(scene_dir)
    depth = DepthMap(read_depth_pgm(scene_dir / "depth.pgm"))
    mask = InstanceMask(read_mask_pgm(scene_dir / "mask.pgm"))
    intrinsics = read_intrinsics(scene_dir / "intrinsics.txt")
    pose_path = scene_dir / "pose.txt"
    gt_pose = read_pose(pose_path) if pose_path.exists() else None
    return SceneObservation(depth=depth, mask=mask, intrinsics=intrinsics, gt_pose=gt_pose)


def scene_name(index: int) -> str:
    return f"scene_{index:05d}"


# ---------------------------------------------------------------------------
# experiment configuration / dataset manifest

_SPEC_KEYS = {
    "seed", "image_width", "image_height", "fx", "fy", "cx", "cy",
    "model_kind", "model_params", "model_path", "model_symmetric",
    "surface_sample_count", "rotation_dist",
    "translation_dist", "translation_center", "translation_half_widths",
    "translation_mean", "translation_sigma",
    "depth_noise_sigma", "pixel_dropout", "occlusion_fraction",
}

_EXPERIMENT_KEYS = _SPEC_KEYS | {
    "format", "scene_count", "reference_strategy", "input_mode", "target_mode",
    "constraint_form", "auc_max_threshold", "threshold_fraction", "output_dir",
    "include_uv_offsets",
}

_MANIFEST_KEYS = _SPEC_KEYS | {"format", "scene_count", "rng_algorithm"}


def spec_to_pairs(spec) -> list[tuple[str, str]]:
    from .synth import BoxModel, BoxVolume, CylinderModel, FileModel, GaussianVolume, SphereModel

    kind = spec.model_kind
    pairs: list[tuple[str, str]] = [
        ("seed", str(spec.seed)),
        ("image_width", str(spec.image_size[0])),
        ("image_height", str(spec.image_size[1])),
        ("fx", format_float(spec.intrinsics.fx)),
        ("fy", format_float(spec.intrinsics.fy)),
        ("cx", format_float(spec.intrinsics.cx)),
        ("cy", format_float(spec.intrinsics.cy)),
        ("surface_sample_count", str(spec.surface_sample_count)),
        ("rotation_dist", spec.rotation_dist),
    ]
    if isinstance(kind, BoxModel):
        pairs += [("model_kind", "box"), ("model_params", format_floats([kind.width, kind.height, kind.length]))]
    elif isinstance(kind, CylinderModel):
        pairs += [("model_kind", "cylinder"), ("model_params", format_floats([kind.radius, kind.height]))]
    elif isinstance(kind, SphereModel):
        pairs += [("model_kind", "sphere"), ("model_params", format_floats([kind.radius]))]
    elif isinstance(kind, FileModel):
        pairs += [
            ("model_kind", "file"),
            ("model_path", kind.path),
            ("model_symmetric", "true" if kind.symmetric else "false"),
        ]
    else:
        raise ConfigError(f"unknown model kind {type(kind).__name__}")
    dist = spec.translation_dist
    if isinstance(dist, BoxVolume):
        pairs += [
            ("translation_dist", "box"),
            ("translation_center", format_floats(dist.center)),
            ("translation_half_widths", format_floats(dist.half_widths)),
        ]
    elif isinstance(dist, GaussianVolume):
        pairs += [
            ("translation_dist", "gaussian"),
            ("translation_mean", format_floats(dist.mean)),
            ("translation_sigma", format_floats(dist.sigma)),
        ]
    else:
        raise ConfigError(f"unknown translation distribution {type(dist).__name__}")
    pairs += [
        ("depth_noise_sigma", format_float(spec.depth_noise_sigma)),
        ("pixel_dropout", format_float(spec.pixel_dropout)),
    ]
    if spec.occlusion_fraction is not None:
        pairs.append(("occlusion_fraction", format_float(spec.occlusion_fraction)))
    return pairs


def _config_floats(kv: dict[str, str], key: str, n: int, path) -> tuple:
    if key not in kv:
        raise ConfigError(f"{path}: missing key {key!r}")
    parts = kv[key].split()
    if len(parts) != n:
        raise ConfigError(f"{path}: key {key!r} needs {n} values, got {len(parts)}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{path}: non-numeric value under {key!r}") from None


def pairs_to_spec(kv: dict[str, str], path="<config>"):
    from .synth import BoxModel, BoxVolume, CylinderModel, FileModel, GaussianVolume, SceneSpec, SphereModel

    def need(key: str) -> str:
        if key not in kv:
            raise ConfigError(f"{path}: missing key {key!r}")
        return kv[key]

    model_kind_name = need("model_kind")
    if model_kind_name == "box":
        w, h, l = _config_floats(kv, "model_params", 3, path)
        kind = BoxModel(w, h, l)
    elif model_kind_name == "cylinder":
        r, h = _config_floats(kv, "model_params", 2, path)
        kind = CylinderModel(r, h)
    elif model_kind_name == "sphere":
        (r,) = _config_floats(kv, "model_params", 1, path)
        kind = SphereModel(r)
    elif model_kind_name == "file":
        kind = FileModel(need("model_path"), kv.get("model_symmetric", "false") == "true")
    else:
        raise ConfigError(f"{path}: unknown model_kind {model_kind_name!r}")

    dist_name = need("translation_dist")
    if dist_name == "box":
        dist = BoxVolume(
            center=_config_floats(kv, "translation_center", 3, path),
            half_widths=_config_floats(kv, "translation_half_widths", 3, path),
        )
    elif dist_name == "gaussian":
        dist = GaussianVolume(
            mean=_config_floats(kv, "translation_mean", 3, path),
            sigma=_config_floats(kv, "translation_sigma", 3, path),
        )
    else:
        raise ConfigError(f"{path}: unknown translation_dist {dist_name!r}")

    try:
        return SceneSpec(
            model_kind=kind,
            surface_sample_count=int(need("surface_sample_count")),
            image_size=(int(need("image_width")), int(need("image_height"))),
            intrinsics=CameraIntrinsics(
                fx=float(need("fx")), fy=float(need("fy")), cx=float(need("cx")), cy=float(need("cy"))
            ),
            translation_dist=dist,
            seed=int(need("seed")),
            rotation_dist=kv.get("rotation_dist", "uniform-so3"),
            depth_noise_sigma=float(kv.get("depth_noise_sigma", "0")),
            pixel_dropout=float(kv.get("pixel_dropout", "0")),
            occlusion_fraction=float(kv["occlusion_fraction"]) if "occlusion_fraction" in kv else None,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_manifest(path, spec, scene_count: int) -> None:
    from .synth import RNG_ALGORITHM

    pairs = [("format", "dataset/v1"), ("scene_count", str(scene_count)), ("rng_algorithm", RNG_ALGORITHM)]
    pairs += spec_to_pairs(spec)
    write_keyvalue(path, pairs)


def read_manifest(path):
    """Returns (spec, scene_count)."""
    kv = read_keyvalue(path)
    _check_format(kv, "dataset/v1", path)
    extra = set(kv) - _MANIFEST_KEYS
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    spec = pairs_to_spec(kv, path)
    return spec, int(_require(kv, "scene_count", path))


def read_experiment_config(path) -> dict[str, str]:
    """Schema-checked raw experiment configuration (unknown keys rejected)."""
    kv = read_keyvalue(path)
    _check_format(kv, "experiment/v1", path)
    extra = set(kv) - _EXPERIMENT_KEYS
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    return kv
