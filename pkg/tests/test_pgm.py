import numpy as np
import pytest

from axialtrack.attention import TrajectoryField, passthrough_attention_params
from axialtrack.heatmaps import (
    axial_fields,
    dump_attention_heatmaps,
    heatmap_frames,
    normalize_heatmap,
)
from axialtrack.pgm import dump_tube_set, load_tube_set, mask_to_u8, read_pgm, write_pgm
from axialtrack.segmenter import Tube


class TestPgmRoundTrip:
    def test_write_read(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(5, 7)).astype(np.uint8)
        path = tmp_path / "x.pgm"
        write_pgm(path, img)
        assert np.array_equal(read_pgm(path), img)

    def test_comment_lines_tolerated(self, tmp_path):
        path = tmp_path / "c.pgm"
        with open(path, "wb") as fh:
            fh.write(b"P5\n# a comment\n2 2\n255\n\x00\x40\x80\xff")
        img = read_pgm(path)
        assert img.shape == (2, 2)
        assert img[1, 1] == 255

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "t.pgm"
        with open(path, "wb") as fh:
            fh.write(b"P5\n4 4\n255\n\x00")
        with pytest.raises(Exception):
            read_pgm(path)


class TestMaskQuantization:
    def test_half_stays_below_threshold(self):
        # floor(0.5 * 255) = 127 -> 127/255 < 0.5 after the round trip
        q = mask_to_u8(np.array([[0.5]]))
        assert q[0, 0] == 127
        assert q[0, 0] / 255.0 < 0.5

    def test_extremes(self):
        q = mask_to_u8(np.array([[0.0, 1.0]]))
        assert q[0, 0] == 0 and q[0, 1] == 255


class TestTubeDumps:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        tubes = [
            Tube((rng.uniform(size=(3, 4, 4)) > 0.5).astype(float), np.array([1.0, 0.0]), 0),
            Tube((rng.uniform(size=(3, 4, 4)) > 0.5).astype(float), np.array([0.0, 1.0]), 1),
        ]
        dump_tube_set(tubes, [0, 1], tmp_path / "set")
        masks, class_ids, track_ids = load_tube_set(tmp_path / "set")
        assert class_ids == [0, 1]
        assert track_ids == [0, 1]
        for loaded, tube in zip(masks, tubes):
            assert np.array_equal(np.round(loaded), tube.masks)


class TestHeatmaps:
    def _uniform_field(self, b, t, s):
        stage1 = np.full((b, t, s, t, s), 1.0 / s)
        stage2 = np.full((b, t, s, t), 1.0 / t)
        values = np.zeros((b, t, t, s, 1))
        return TrajectoryField(values, stage1, stage2)

    def test_uniform_weights_constant_gray(self, tmp_path):
        fh = self._uniform_field(4, 2, 3)
        fw = self._uniform_field(3, 2, 4)
        frames = heatmap_frames(fh, fw, (0, 1, 1))
        for frame in frames:
            img = normalize_heatmap(frame)
            assert img.min() == img.max()
            assert 0 < img[0, 0] < 255

    def test_singleton_axes_white_pixel(self):
        fh = self._uniform_field(1, 2, 1)
        fw = self._uniform_field(1, 2, 1)
        frames = heatmap_frames(fh, fw, (0, 0, 0))
        for frame in frames:
            img = normalize_heatmap(frame)
            assert img.shape == (1, 1)
            assert img[0, 0] == 255

    def test_dump_writes_readable_files(self, tmp_path):
        rng = np.random.default_rng(2)
        f = rng.normal(size=(2, 4, 4, 4))
        p = passthrough_attention_params(4)
        field_h, field_w = axial_fields(f, p, p)
        paths = dump_attention_heatmaps(field_h, field_w, (0, 1, 2), tmp_path / "maps")
        assert len(paths) == 2
        for path in paths:
            img = read_pgm(path)
            assert img.shape == (4, 4)

    def test_out_of_range_reference(self):
        fh = self._uniform_field(4, 2, 3)
        fw = self._uniform_field(3, 2, 4)
        with pytest.raises(IndexError):
            heatmap_frames(fh, fw, (0, 5, 0))
