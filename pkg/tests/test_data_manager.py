"""
Tests for the data manager file formats
"""

import json

import numpy as np
import pytest

from data_manager import (
    CONTOUR_SEQUENCE, MESH_SEQUENCE, load_contour_sequence, load_frames, load_json, load_mesh_sequence,
    load_model, read_contour_csv, read_manifest, read_obj, save_contour_sequence, save_json,
    save_mesh_sequence, save_model, write_contour_csv, write_manifest, write_obj,
)
from tools.errors import ParseError, ShapeError
from tools.regress import simpls_fit
from tools.ssm import ContourSequence2D


def _write(path, text):
    path.write_text(text)
    return path


class TestObj:
    def test_round_trip_is_exact(self, tmp_path, unit_cube):
        vertices, faces = unit_cube
        vertices = vertices + np.array([0.1, 1e-9, 1.0 / 3.0])
        write_obj(tmp_path / "cube.obj", vertices, faces)
        loaded, loaded_faces, colors = read_obj(tmp_path / "cube.obj")
        np.testing.assert_array_equal(loaded, vertices)
        np.testing.assert_array_equal(loaded_faces, faces)
        assert colors is None

    def test_vertex_colors(self, tmp_path, unit_cube):
        vertices, faces = unit_cube
        colors = np.linspace(0.0, 1.0, 24).reshape(8, 3)
        write_obj(tmp_path / "cube.obj", vertices, faces, colors)
        _, _, loaded = read_obj(tmp_path / "cube.obj")
        np.testing.assert_allclose(loaded, colors, atol=1e-6)

    def test_ignored_statements_and_slash_faces(self, tmp_path):
        path = _write(tmp_path / "tri.obj", "\n".join([
            "# exported mesh",
            "o triangle",
            "v 0 0 0",
            "v 1 0 0",
            "v 0 1 0",
            "vn 0 0 1",
            "s off",
            "f 1/1/1 2/2/1 3/3/1",
        ]))
        vertices, faces, _ = read_obj(path)
        assert vertices.shape == (3, 3)
        np.testing.assert_array_equal(faces, [[0, 1, 2]])

    def test_bad_vertex_line_number(self, tmp_path):
        path = _write(tmp_path / "bad.obj", "v 0 0 0\nv 1 0\nv 0 1 0\n")
        with pytest.raises(ParseError, match=r"bad\.obj:2") as excinfo:
            read_obj(path)
        assert excinfo.value.line == 2

    def test_quad_rejected(self, tmp_path):
        path = _write(tmp_path / "quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(ParseError, match="triangles") as excinfo:
            read_obj(path)
        assert excinfo.value.line == 5

    def test_face_index_out_of_range(self, tmp_path):
        path = _write(tmp_path / "range.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n")
        with pytest.raises(ParseError, match="exceeds vertex count"):
            read_obj(path)


class TestContourCsv:
    def test_round_trip(self, tmp_path):
        contour = np.array([[1.5, -2.0], [0.25, 3.0], [-1.0, 0.0]])
        write_contour_csv(tmp_path / "c.csv", contour)
        assert (tmp_path / "c.csv").read_text().splitlines()[0] == "x,y"
        np.testing.assert_array_equal(read_contour_csv(tmp_path / "c.csv"), contour)

    def test_headerless(self, tmp_path):
        path = _write(tmp_path / "c.csv", "0,0\n1,0\n1,1\n")
        assert read_contour_csv(path).shape == (3, 2)

    def test_non_numeric_line_after_header(self, tmp_path):
        path = _write(tmp_path / "c.csv", "x,y\n0,0\n1,abc\n")
        with pytest.raises(ParseError) as excinfo:
            read_contour_csv(path)
        assert excinfo.value.line == 3

    def test_non_numeric_line_without_header(self, tmp_path):
        path = _write(tmp_path / "c.csv", "0,0\nfoo,1\n")
        with pytest.raises(ParseError) as excinfo:
            read_contour_csv(path)
        assert excinfo.value.line == 2

    def test_extra_field(self, tmp_path):
        path = _write(tmp_path / "c.csv", "x,y\n0,0\n1,2,3\n")
        with pytest.raises(ParseError) as excinfo:
            read_contour_csv(path)
        assert excinfo.value.line == 3

    def test_empty(self, tmp_path):
        with pytest.raises(ParseError, match="empty"):
            read_contour_csv(_write(tmp_path / "c.csv", ""))


class TestManifests:
    def test_mesh_sequence_round_trip(self, tmp_path, small_phantom):
        manifest = save_mesh_sequence(small_phantom, tmp_path / "meshes")
        loaded = load_mesh_sequence(manifest, max_workers=2)
        np.testing.assert_array_equal(loaded.frames, small_phantom.frames)
        np.testing.assert_array_equal(loaded.connectivity, small_phantom.connectivity)
        assert json.loads(manifest.read_text())["phantom"]["n_frames"] == small_phantom.n_frames

    def test_contour_sequence_round_trip(self, tmp_path):
        frames = np.random.default_rng(0).normal(size=(4, 6, 2))
        manifest = save_contour_sequence(ContourSequence2D(frames, closed=False), tmp_path)
        loaded = load_contour_sequence(manifest)
        np.testing.assert_array_equal(loaded.frames, frames)
        assert not loaded.closed

    def test_wrong_kind(self, tmp_path):
        path = write_manifest(tmp_path / "manifest.json", MESH_SEQUENCE, ["a.obj"])
        with pytest.raises(ParseError, match="expected a contour-sequence manifest"):
            read_manifest(path, CONTOUR_SEQUENCE)

    def test_connectivity_must_match(self, tmp_path, unit_cube):
        vertices, faces = unit_cube
        write_obj(tmp_path / "a.obj", vertices, faces)
        write_obj(tmp_path / "b.obj", vertices, faces[::-1])
        path = write_manifest(tmp_path / "manifest.json", MESH_SEQUENCE, ["a.obj", "b.obj"])
        with pytest.raises(ShapeError, match="frame 1 connectivity"):
            load_mesh_sequence(path)

    def test_missing_frame(self, tmp_path, unit_cube):
        vertices, faces = unit_cube
        write_obj(tmp_path / "a.obj", vertices, faces)
        path = write_manifest(tmp_path / "manifest.json", MESH_SEQUENCE, ["a.obj", "gone.obj"])
        with pytest.raises(ParseError, match="gone.obj"):
            load_mesh_sequence(path)


def test_load_frames_keeps_order_and_failures(tmp_path):
    paths = []
    for i in range(5):
        paths.append(_write(tmp_path / f"c{i}.csv", f"{i},0\n0,{i}\n"))
    paths.insert(2, tmp_path / "missing.csv")
    results, failed, times = load_frames(paths, read_contour_csv, max_workers=3)
    assert [r[0, 0] if r is not None else None for r in results] == [0, 1, None, 2, 3, 4]
    assert len(failed) == 1 and failed[0][0].endswith("missing.csv")
    assert len(times) == 5


def test_json_nan_is_null(tmp_path):
    save_json(tmp_path / "r.json", {"errors": np.array([1.0, np.nan]), "count": np.int64(3)})
    assert json.loads((tmp_path / "r.json").read_text()) == {"count": 3, "errors": [1.0, None]}


def test_bad_json_line(tmp_path):
    path = _write(tmp_path / "bad.json", '{\n  "a": ,\n}\n')
    with pytest.raises(ParseError) as excinfo:
        load_json(path)
    assert excinfo.value.line == 2


def test_model_file(tmp_path):
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(8, 4)), rng.normal(size=(8, 9))
    model = simpls_fit(x, y, 2)
    save_model(tmp_path / "model.json", model, extra={"numx": 2})
    restored, extra = load_model(tmp_path / "model.json")
    assert extra == {"numx": 2}
    np.testing.assert_allclose(restored.coefficients, model.coefficients)


@pytest.mark.parametrize("reader, name, payload", [
    (read_obj, "mesh.obj", b"v 0 0 0\nv 1 0 \xe9\n"),
    (read_contour_csv, "contour.csv", b"0,0\n1,\xe9\n"),
    (load_json, "doc.json", b'{"a": "\xe9"}\n'),
])
def test_non_utf8_input_is_a_parse_error(tmp_path, reader, name, payload):
    path = tmp_path / name
    path.write_bytes(payload)
    with pytest.raises(ParseError) as excinfo:
        reader(path)
    assert excinfo.value.path == path
