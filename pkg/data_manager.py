"""
Data management module for the shape instantiation toolkit
Reads and writes mesh frames (OBJ subset), contour frames (CSV), sequence
manifests, fitted models and study reports
"""

import os
import re
import json
import time
import logging
import tempfile
import concurrent.futures
from pathlib import Path

import numpy as np
import pandas as pd

from tools.errors import ParseError, ShapeError
from tools.regress import model_from_dict, model_to_dict
from tools.ssm import ContourSequence2D, ShapeSequence3D

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MESH_SEQUENCE = "mesh-sequence"
CONTOUR_SEQUENCE = "contour-sequence"

# OBJ statements outside the v/f subset that are skipped without complaint
IGNORED_OBJ_KEYWORDS = {"vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l"}


def atomic_write_text(path, text):
    """Write text to a temporary file next to path, then move it into place"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def read_obj(file_path):
    """
    Read the v/f subset of a Wavefront OBJ file

    Parameters:
    -----------
    file_path : str or Path

    Returns:
    --------
    tuple : (vertices ndarray (n, 3), faces ndarray of int (F, 3), colors ndarray (n, 3) or None)
    """
    vertices, colors, faces = [], [], []
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8 text ({e.reason} at byte {e.start})", path=file_path)
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, *fields = line.split()
        if keyword == "v":
            if len(fields) not in (3, 6):
                raise ParseError(f"vertex needs 3 coordinates (optionally + rgb), got {len(fields)}",
                                 path=file_path, line=line_no)
            try:
                values = [float(v) for v in fields]
            except ValueError:
                raise ParseError(f"non-numeric vertex '{line}'", path=file_path, line=line_no)
            vertices.append(values[:3])
            colors.append(values[3:] if len(values) == 6 else None)
        elif keyword == "f":
            if len(fields) != 3:
                raise ParseError(f"only triangles are supported, got a {len(fields)}-gon",
                                 path=file_path, line=line_no)
            try:
                face = [int(v.split("/")[0]) for v in fields]
            except ValueError:
                raise ParseError(f"non-integer face index in '{line}'", path=file_path, line=line_no)
            if min(face) < 1:
                raise ParseError("face indices are 1-based and positive", path=file_path, line=line_no)
            faces.append([i - 1 for i in face])
        elif keyword not in IGNORED_OBJ_KEYWORDS:
            raise ParseError(f"unsupported OBJ statement '{keyword}'", path=file_path, line=line_no)

    if not vertices:
        raise ParseError("no vertices found", path=file_path)
    vertices = np.array(vertices, dtype=float)
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and faces.max() >= len(vertices):
        raise ParseError(f"face index {faces.max() + 1} exceeds vertex count {len(vertices)}", path=file_path)
    has_colors = all(c is not None for c in colors)
    return vertices, faces, np.array(colors, dtype=float) if has_colors else None


def format_obj(vertices, faces, colors=None):
    """OBJ text with full-precision coordinates and 1-based faces"""
    vertices = np.asarray(vertices, dtype=float)
    lines = []
    for i, v in enumerate(vertices):
        entry = "v " + " ".join(repr(float(c)) for c in v)
        if colors is not None:
            entry += " " + " ".join(f"{float(c):.6f}" for c in colors[i])
        lines.append(entry)
    for face in np.asarray(faces, dtype=np.int64).reshape(-1, 3):
        lines.append("f " + " ".join(str(int(i) + 1) for i in face))
    return "\n".join(lines) + "\n"


def write_obj(file_path, vertices, faces, colors=None):
    return atomic_write_text(file_path, format_obj(vertices, faces, colors))


_FIELD_COUNT = re.compile(r"line (\d+)")


def read_contour_csv(file_path):
    """
    Read one contour frame: one 'x,y' row per vertex, optional 'x,y' header

    Returns:
    --------
    ndarray (m, 2)
    """
    try:
        table = pd.read_csv(file_path, header=None, dtype=str, skip_blank_lines=True, encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8 text ({e.reason} at byte {e.start})", path=file_path)
    except pd.errors.EmptyDataError:
        raise ParseError("contour file is empty", path=file_path)
    except pd.errors.ParserError as e:
        match = _FIELD_COUNT.search(str(e))
        raise ParseError(f"malformed contour row: {e}", path=file_path,
                         line=int(match.group(1)) if match else None)

    offset = 1
    if table.shape[0] and [str(v).strip().lower() for v in table.iloc[0]] == ["x", "y"]:
        table = table.iloc[1:]
        offset = 2
    if table.shape[1] != 2:
        raise ParseError(f"contour rows need exactly 2 columns, got {table.shape[1]}", path=file_path, line=offset)

    values = table.apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError("non-numeric or missing coordinate", path=file_path, line=row + offset)
    if values.shape[0] == 0:
        raise ParseError("contour file has no vertices", path=file_path)
    return values.to_numpy(dtype=float)


def write_contour_csv(file_path, vertices):
    table = pd.DataFrame(np.asarray(vertices, dtype=float), columns=["x", "y"])
    return atomic_write_text(file_path, table.to_csv(index=False))


def load_frame(file_path, reader):
    """
    Load a single frame file

    Returns:
    --------
    tuple : (file_path, data or None, error_message or None, elapsed_time)
    """
    try:
        start_time = time.time()
        data = reader(file_path)
        return (file_path, data, None, time.time() - start_time)
    except (OSError, ParseError) as e:
        return (file_path, None, str(e), 0)


def load_frames(file_paths, reader, max_workers=None):
    """
    Read frame files in parallel, keeping their order

    Parameters:
    -----------
    file_paths : list of str
    reader : callable
        read_obj or read_contour_csv
    max_workers : int, optional
        Maximum number of worker threads

    Returns:
    --------
    tuple : (list of data in input order, list of (path, error) failures, dict of load times)
    """
    results = [None] * len(file_paths)
    failed = []
    times = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {executor.submit(load_frame, path, reader): i for i, path in enumerate(file_paths)}
        for future in concurrent.futures.as_completed(future_to_index):
            index = future_to_index[future]
            file_path, data, error, elapsed = future.result()
            if error is None:
                results[index] = data
                times[str(file_path)] = elapsed
            else:
                failed.append((str(file_path), error))
    failed.sort()
    return results, failed, times


def _json_safe(value):
    """Plain JSON types with NaN and infinities as null"""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, (np.integer, np.bool_)):
        return value.item()
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


def save_json(file_path, document):
    text = json.dumps(_json_safe(document), indent=2, sort_keys=True, allow_nan=False)
    return atomic_write_text(file_path, text + "\n")


def load_json(file_path):
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8 text ({e.reason} at byte {e.start})", path=file_path)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=file_path, line=e.lineno)


def write_manifest(file_path, kind, frames, **extra):
    """Manifest listing frame files (relative to the manifest) in time order"""
    document = {"version": MANIFEST_VERSION, "kind": kind, "frames": [str(f) for f in frames]}
    document.update(extra)
    return save_json(file_path, document)


def read_manifest(file_path, kind):
    document = load_json(file_path)
    if not isinstance(document, dict):
        raise ParseError("manifest must be a JSON object", path=file_path)
    if document.get("version") != MANIFEST_VERSION:
        raise ParseError(f"unsupported manifest version {document.get('version')!r}", path=file_path)
    if document.get("kind") != kind:
        raise ParseError(f"expected a {kind} manifest, got {document.get('kind')!r}", path=file_path)
    frames = document.get("frames")
    if not isinstance(frames, list) or not frames:
        raise ParseError("manifest lists no frames", path=file_path)
    base = Path(file_path).parent
    document["paths"] = [base / f for f in frames]
    return document


def _raise_failures(failed):
    if failed:
        _, error = failed[0]
        more = f" (and {len(failed) - 1} more)" if len(failed) > 1 else ""
        raise ParseError(f"{error}{more}")


def load_mesh_sequence(manifest_path, max_workers=None):
    """Load a ShapeSequence3D from a mesh-sequence manifest"""
    manifest = read_manifest(manifest_path, MESH_SEQUENCE)
    meshes, failed, times = load_frames(manifest["paths"], read_obj, max_workers)
    _raise_failures(failed)
    faces = meshes[0][1]
    for t, (_, frame_faces, _) in enumerate(meshes):
        if not np.array_equal(frame_faces, faces):
            raise ShapeError(f"frame {t} connectivity differs from frame 0")
    logger.info("Loaded %d mesh frames in %.3f s", len(meshes), sum(times.values()))
    return ShapeSequence3D([m[0] for m in meshes], faces, {"manifest": str(manifest_path)})


def load_contour_sequence(manifest_path, max_workers=None):
    """Load a ContourSequence2D from a contour-sequence manifest"""
    manifest = read_manifest(manifest_path, CONTOUR_SEQUENCE)
    contours, failed, _ = load_frames(manifest["paths"], read_contour_csv, max_workers)
    _raise_failures(failed)
    return ContourSequence2D(contours, closed=bool(manifest.get("closed", True)),
                             info={"manifest": str(manifest_path)})


def save_mesh_sequence(seq, out_dir, prefix="frame"):
    """Write one OBJ per frame plus manifest.json; returns the manifest path"""
    out_dir = Path(out_dir)
    names = [f"{prefix}_{t:03d}.obj" for t in range(seq.n_frames)]
    for name, frame in zip(names, seq.frames):
        write_obj(out_dir / name, frame, seq.connectivity)
    extra = {"phantom": seq.info["phantom"]} if "phantom" in seq.info else {}
    return write_manifest(out_dir / "manifest.json", MESH_SEQUENCE, names, **extra)


def save_contour_sequence(seq, out_dir, prefix="contour"):
    """Write one CSV per frame plus manifest.json; returns the manifest path"""
    out_dir = Path(out_dir)
    names = [f"{prefix}_{t:03d}.csv" for t in range(seq.n_frames)]
    for name, frame in zip(names, seq.frames):
        write_contour_csv(out_dir / name, frame)
    return write_manifest(out_dir / "manifest.json", CONTOUR_SEQUENCE, names, closed=seq.closed)


def save_model(file_path, model, extra=None):
    return save_json(file_path, model_to_dict(model, extra))


def load_model(file_path):
    document = load_json(file_path)
    return model_from_dict(document), document.get("extra", {})


def save_table(file_path, table):
    return atomic_write_text(file_path, table.to_csv(index=False))
