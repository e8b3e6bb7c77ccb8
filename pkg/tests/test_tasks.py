import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sinelowrank.errors import BadPGM
from sinelowrank.tasks import (
    TaskDataset,
    decode_pgm,
    encode_pgm,
    gen_image_task,
    gen_occupancy_task,
    grid_coords,
    image_task_from_array,
    read_pgm,
    to_uint8_minmax,
    to_uint8_unit,
    write_pgm,
    write_voxels,
)


def test_grid_coords_corners():
    g = grid_coords(3, 2)
    assert g.shape == (6, 2)
    np.testing.assert_array_equal(g[0], [-1, -1])
    np.testing.assert_array_equal(g[-1], [1, 1])


def test_sphere_volume_fraction():
    ds = gen_occupancy_task("sphere", 64)
    # 4/3 pi r^3 over the [-1, 1]^3 cube
    assert ds.targets.mean() == pytest.approx(4 / 3 * np.pi * 0.6**3 / 8, rel=0.05)


def test_torus_volume_fraction():
    ds = gen_occupancy_task("torus", 48)
    assert ds.targets.mean() == pytest.approx(2 * np.pi**2 * 0.5 * 0.2**2 / 8, rel=0.08)


def test_occupancy_targets_are_bits():
    ds = gen_occupancy_task("sphere", 8)
    assert set(np.unique(ds.targets)) <= {0.0, 1.0}
    assert ds.grid_shape == (8, 8, 8)


def test_occupancy_grid_too_small():
    with pytest.raises(ValueError):
        gen_occupancy_task("sphere", 4)


def test_unknown_shape():
    with pytest.raises(ValueError):
        gen_occupancy_task("cube", 16)


@pytest.mark.parametrize("pattern", ["gradient", "checker", "radial"])
def test_image_targets_in_unit_interval(pattern):
    ds = gen_image_task(pattern, (16, 24))
    assert len(ds) == 16 * 24
    assert ds.targets.min() >= 0 and ds.targets.max() <= 1


def test_gradient_runs_left_to_right():
    img = gen_image_task("gradient", (8, 8)).target_grid()
    np.testing.assert_allclose(img[:, 0], 0.0)
    np.testing.assert_allclose(img[:, -1], 1.0)


def test_checker_cells():
    img = gen_image_task("checker", (16, 16), cells=8).target_grid()
    assert img[0, 0] == 0 and img[0, 2] == 1 and img[2, 0] == 1 and img[2, 2] == 0
    assert img.mean() == 0.5


def test_dataset_validation():
    with pytest.raises(ValueError):
        TaskDataset(np.zeros((4, 2)), np.array([0.0, 0.5, 1.0, 1.0]), (2, 2), "occupancy")
    with pytest.raises(ValueError):
        TaskDataset(np.zeros((4, 2)), np.zeros(4), (3, 2), "image_fit")


def test_pgm_roundtrip(tmp_path):
    img = np.arange(12 * 9, dtype=np.uint8).reshape(9, 12)
    write_pgm(tmp_path / "a.pgm", img)
    back, maxval = read_pgm(tmp_path / "a.pgm")
    assert maxval == 255
    np.testing.assert_array_equal(back, img)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n12 9\n255\n")


def test_pgm_sixteen_bit():
    img = np.array([[0, 1000], [65535, 7]], dtype=np.uint16)
    back, maxval = decode_pgm(encode_pgm(img, 65535))
    assert maxval == 65535
    np.testing.assert_array_equal(back, img)


def test_pgm_header_with_comment():
    data = b"P5\n# made by hand\n2 1\n255\n" + bytes([3, 250])
    img, _ = decode_pgm(data)
    np.testing.assert_array_equal(img, [[3, 250]])


@pytest.mark.parametrize("data", [b"P2\n2 2\n255\n1 2 3 4", b"P5\n2 2\n255\n\x00", b"garbage"])
def test_bad_pgm(data):
    with pytest.raises(BadPGM):
        decode_pgm(data)


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_pgm_roundtrip_property(img):
    back, _ = decode_pgm(encode_pgm(img))
    np.testing.assert_array_equal(back, img)


def test_image_from_pgm(tmp_path):
    img = (np.arange(64, dtype=np.uint8).reshape(8, 8) * 4)
    write_pgm(tmp_path / "t.pgm", img)
    ds = gen_image_task(pgm_path=str(tmp_path / "t.pgm"))
    np.testing.assert_allclose(ds.target_grid(), img / 255.0)


def test_image_task_from_array_shape():
    ds = image_task_from_array(np.full((10, 12), 0.25))
    assert ds.grid_shape == (10, 12) and ds.inputs.shape == (120, 2)


def test_minmax_scaling():
    np.testing.assert_array_equal(to_uint8_minmax([[1.0, 3.0, 2.0]]), [[0, 255, 128]])
    np.testing.assert_array_equal(to_uint8_minmax(np.full((2, 2), 7.0)), np.zeros((2, 2)))


def test_unit_scaling_clips():
    np.testing.assert_array_equal(to_uint8_unit([-1.0, 0.5, 2.0]), [0, 128, 255])


def test_voxels(tmp_path):
    vals = np.arange(8.0)
    side = write_voxels(tmp_path / "v.f64", vals, (2, 2, 2))
    np.testing.assert_array_equal(np.fromfile(tmp_path / "v.f64", dtype="<f8"), vals)
    assert json.loads(side.read_text())["grid_shape"] == [2, 2, 2]
