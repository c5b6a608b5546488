import numpy as np
import pytest

from voxmae.exceptions import FormatError
from voxmae.formats import (
    load_depth_image,
    read_pfm,
    read_pgm,
    read_ply,
    read_ppm,
    write_pfm,
    write_pgm,
    write_ply,
    write_ppm,
)

from conftest import random_cloud


class TestPpm:
    def test_roundtrip(self, tmp_path, rng):
        rgb = rng.uniform(size=(4, 6, 3))
        path = tmp_path / "img.ppm"
        write_ppm(path, rgb)
        back = read_ppm(path)
        assert back.shape == (4, 6, 3)
        assert np.abs(back - rgb).max() <= 0.5 / 255.0 + 1e-12

    def test_handles_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "img.ppm"
        path.write_bytes(b"P6\n# a comment\n 2 1\n255\n" + bytes(6))
        img = read_ppm(path)
        assert img.shape == (1, 2, 3)

    def test_bad_magic_offset_zero(self, tmp_path):
        path = tmp_path / "img.ppm"
        path.write_bytes(b"P3\n1 1\n255\n")
        with pytest.raises(FormatError, match="byte 0"):
            read_ppm(path)

    def test_truncated_pixels_reports_offset(self, tmp_path):
        path = tmp_path / "img.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(FormatError, match="truncated"):
            read_ppm(path)


class TestPgm:
    def test_sixteen_bit_roundtrip(self, tmp_path):
        depth = np.array([[0, 70, 65535], [12000, 400, 3]], dtype=np.float64)
        path = tmp_path / "d.pgm"
        write_pgm(path, depth)
        np.testing.assert_array_equal(read_pgm(path), depth)

    def test_eight_bit_supported(self, tmp_path):
        path = tmp_path / "d.pgm"
        write_pgm(path, np.array([[0, 255]], dtype=np.float64), maxval=255)
        np.testing.assert_array_equal(read_pgm(path), [[0, 255]])

    def test_big_endian_samples(self, tmp_path):
        path = tmp_path / "d.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n" + (258).to_bytes(2, "big"))
        np.testing.assert_array_equal(read_pgm(path), [[258]])


class TestPfm:
    def test_roundtrip(self, tmp_path, rng):
        depth = rng.uniform(0.0, 50.0, size=(3, 5)).astype(np.float32).astype(np.float64)
        path = tmp_path / "d.pfm"
        write_pfm(path, depth)
        np.testing.assert_array_equal(read_pfm(path), depth)

    def test_rows_are_bottom_to_top(self, tmp_path):
        path = tmp_path / "d.pfm"
        data = np.array([1.0, 2.0], dtype="<f4").tobytes()  # two rows of width 1
        path.write_bytes(b"Pf\n1 2\n-1.0\n" + data)
        # first stored row is the BOTTOM row
        np.testing.assert_array_equal(read_pfm(path), [[2.0], [1.0]])

    def test_big_endian_scale(self, tmp_path):
        path = tmp_path / "d.pfm"
        data = np.array([3.5], dtype=">f4").tobytes()
        path.write_bytes(b"Pf\n1 1\n1.0\n" + data)
        np.testing.assert_array_equal(read_pfm(path), [[3.5]])

    def test_rejects_color_pfm(self, tmp_path):
        path = tmp_path / "d.pfm"
        path.write_bytes(b"PF\n1 1\n-1.0\n" + bytes(12))
        with pytest.raises(FormatError, match="grayscale"):
            read_pfm(path)

    def test_rejects_non_finite(self, tmp_path):
        path = tmp_path / "d.pfm"
        data = np.array([np.inf], dtype="<f4").tobytes()
        path.write_bytes(b"Pf\n1 1\n-1.0\n" + data)
        with pytest.raises(FormatError, match="non-finite"):
            read_pfm(path)


class TestPly:
    def test_roundtrip_fidelity(self, tmp_path):
        pc = random_cloud(200, 3)
        path = tmp_path / "cloud.ply"
        write_ply(path, pc)
        back = read_ply(path)
        assert back.count == pc.count
        assert np.abs(back.coords - pc.coords).max() <= 1e-6
        assert np.abs(back.colors - pc.colors).max() <= 1.0 / 255.0

    def test_header_layout(self, tmp_path):
        pc = random_cloud(3, 4)
        path = tmp_path / "cloud.ply"
        write_ply(path, pc)
        text = path.read_text().split("\n")
        assert text[0] == "ply"
        assert text[1] == "format ascii 1.0"
        assert text[2] == "element vertex 3"
        assert text[3] == "property float x"
        assert text[8] == "property uchar blue"
        assert text[9] == "end_header"
        assert "\r" not in path.read_text()

    def test_write_is_deterministic(self, tmp_path):
        pc = random_cloud(50, 5)
        a, b = tmp_path / "a.ply", tmp_path / "b.ply"
        write_ply(a, pc)
        write_ply(b, pc)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_vertex_row_offset(self, tmp_path):
        path = tmp_path / "c.ply"
        good = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            + "\n".join(
                [
                    "property float x",
                    "property float y",
                    "property float z",
                    "property uchar red",
                    "property uchar green",
                    "property uchar blue",
                ]
            )
            + "\nend_header\n0.1 0.2\n"
        )
        path.write_text(good)
        with pytest.raises(FormatError, match="expected 6 fields"):
            read_ply(path)

    def test_unsupported_properties_rejected(self, tmp_path):
        path = tmp_path / "c.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nend_header\n"
        )
        with pytest.raises(FormatError, match="property layout"):
            read_ply(path)


class TestLoadDepthImage:
    def test_pfm_dispatch(self, tmp_path, rng):
        rgb = rng.uniform(size=(2, 3, 3))
        depth = rng.uniform(1.0, 5.0, size=(2, 3))
        write_ppm(tmp_path / "i.ppm", rgb)
        write_pfm(tmp_path / "d.pfm", depth)
        img = load_depth_image(tmp_path / "i.ppm", tmp_path / "d.pfm")
        assert img.width == 3 and img.height == 2

    def test_pgm_dispatch(self, tmp_path, rng):
        rgb = rng.uniform(size=(2, 2, 3))
        write_ppm(tmp_path / "i.ppm", rgb)
        write_pgm(tmp_path / "d.pgm", np.array([[1, 2], [3, 4]]))
        img = load_depth_image(tmp_path / "i.ppm", tmp_path / "d.pgm")
        np.testing.assert_array_equal(img.depth, [[1, 2], [3, 4]])

    def test_dimension_mismatch(self, tmp_path, rng):
        write_ppm(tmp_path / "i.ppm", rng.uniform(size=(2, 2, 3)))
        write_pfm(tmp_path / "d.pfm", rng.uniform(size=(3, 3)))
        with pytest.raises(ValueError, match="does not match"):
            load_depth_image(tmp_path / "i.ppm", tmp_path / "d.pfm")

    def test_unknown_depth_magic(self, tmp_path, rng):
        write_ppm(tmp_path / "i.ppm", rng.uniform(size=(1, 1, 3)))
        (tmp_path / "d.bin").write_bytes(b"XXXX")
        with pytest.raises(FormatError, match="unknown depth format"):
            load_depth_image(tmp_path / "i.ppm", tmp_path / "d.bin")
