"""PNG pipeline: codec round trips, aligned geometry, deterministic batching."""

import io
import os

import numpy as np
import pytest
from PIL import Image

from uwrestore.data import (DatasetSpec, ImagePair, area_down2, augment_flip,
                            batch_iter, decode_png, encode_png, gt_pyramid,
                            iter_batches, load_pairs, sample_patch)
from uwrestore.errors import (DatasetError, DecodeError, ParameterError,
                              ShapeError)

from conftest import ScriptedRng


def pil_png(color, size=(1, 1), mode="RGB"):
    out = io.BytesIO()
    Image.new(mode, size, color).save(out, format="PNG")
    return out.getvalue()


class TestDecodePng:
    def test_white_and_black_pixels(self):
        white = decode_png(pil_png((255, 255, 255)))
        assert white.shape == (3, 1, 1)
        assert np.array_equal(white.reshape(3), [1.0, 1.0, 1.0])
        assert np.array_equal(decode_png(pil_png((0, 0, 0))).reshape(3),
                              [0.0, 0.0, 0.0])

    def test_rgba_alpha_dropped(self):
        arr = decode_png(pil_png((10, 20, 30, 77), mode="RGBA"))
        assert arr.shape == (3, 1, 1)
        assert np.allclose(arr.reshape(3), np.array([10, 20, 30]) / 255.0)

    def test_grayscale_rejected(self):
        with pytest.raises(DecodeError):
            decode_png(pil_png(128, mode="L"))

    def test_non_png_rejected_with_context(self):
        out = io.BytesIO()
        Image.new("RGB", (2, 2)).save(out, format="JPEG")
        with pytest.raises(DecodeError, match="somefile"):
            decode_png(out.getvalue(), context="somefile")
        with pytest.raises(DecodeError):
            decode_png(b"not an image at all")

    def test_round_trip_bit_exact_at_8bit(self):
        rng = np.random.default_rng(0)
        img = np.floor(rng.uniform(size=(3, 8, 8)) * 255.0) / 255.0
        back = decode_png(encode_png(img))
        assert np.allclose(back, img, atol=1e-7)


class TestEncodePng:
    def test_half_rounds_up(self):
        data = encode_png(np.full((3, 1, 1), 0.5))
        px = Image.open(io.BytesIO(data)).getpixel((0, 0))
        assert px == (128, 128, 128)

    def test_clamps_out_of_range(self):
        data = encode_png(np.full((3, 1, 1), 1.7))
        assert Image.open(io.BytesIO(data)).getpixel((0, 0)) == (255, 255, 255)
        data = encode_png(np.full((3, 1, 1), -0.3))
        assert Image.open(io.BytesIO(data)).getpixel((0, 0)) == (0, 0, 0)

    def test_quantization_error_bounded(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(size=(3, 8, 8))
        back = decode_png(encode_png(img))
        assert np.max(np.abs(back - img)) <= 1.0 / 510.0 + 1e-9

    def test_shape_checked(self):
        with pytest.raises(ShapeError):
            encode_png(np.zeros((8, 8)))


class TestImagePair:
    def test_shape_agreement_enforced(self):
        with pytest.raises(ShapeError):
            ImagePair(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)), name="x")
        with pytest.raises(ShapeError):
            ImagePair(np.zeros((1, 4, 4)), np.zeros((1, 4, 4)))


class TestSamplePatch:
    def _coord_pair(self, h=16, w=16):
        arr = np.zeros((3, h, w))
        arr[0] = np.arange(h)[:, None] / h
        arr[1] = np.arange(w)[None, :] / w
        return ImagePair(arr, arr.copy(), name="coords")

    def test_full_size_patch_is_identity(self):
        pair = self._coord_pair(8, 8)
        out = sample_patch(pair, 8, np.random.default_rng(2))
        assert np.array_equal(out.input, pair.input)

    def test_same_seed_same_window(self):
        pair = self._coord_pair()
        a = sample_patch(pair, 4, np.random.default_rng(3))
        b = sample_patch(pair, 4, np.random.default_rng(3))
        assert np.array_equal(a.input, b.input)

    def test_crops_are_aligned_and_contiguous(self):
        pair = self._coord_pair()
        out = sample_patch(pair, 4, np.random.default_rng(4))
        assert np.array_equal(out.input, out.target)
        i0 = round(out.input[0, 0, 0] * 16)
        j0 = round(out.input[1, 0, 0] * 16)
        want_rows = (np.arange(i0, i0 + 4)[:, None] / 16) * np.ones((1, 4))
        want_cols = np.ones((4, 1)) * (np.arange(j0, j0 + 4)[None, :] / 16)
        assert np.allclose(out.input[0], want_rows)
        assert np.allclose(out.input[1], want_cols)

    def test_oversized_patch_rejected(self):
        with pytest.raises(ParameterError):
            sample_patch(self._coord_pair(8, 8), 9, np.random.default_rng(5))


class TestAugmentFlip:
    def _pair(self, seed=6):
        rng = np.random.default_rng(seed)
        a = rng.uniform(size=(3, 4, 6))
        return ImagePair(a, a + 0.0, name="p")

    def test_scripted_horizontal_only(self):
        pair = self._pair()
        out = augment_flip(pair, ScriptedRng([0.4, 0.9]))
        assert np.array_equal(out.input, pair.input[:, :, ::-1])
        assert np.array_equal(out.target, pair.target[:, :, ::-1])

    def test_scripted_vertical_only(self):
        pair = self._pair()
        out = augment_flip(pair, ScriptedRng([0.9, 0.1]))
        assert np.array_equal(out.input, pair.input[:, ::-1, :])

    def test_double_flip_is_identity(self):
        pair = self._pair()
        once = augment_flip(pair, ScriptedRng([0.1, 0.1]))
        twice = augment_flip(once, ScriptedRng([0.1, 0.1]))
        assert np.array_equal(twice.input, pair.input)

    def test_preserves_pixel_multiset(self):
        pair = self._pair()
        out = augment_flip(pair, np.random.default_rng(7))
        assert np.array_equal(np.sort(out.input.ravel()),
                              np.sort(pair.input.ravel()))

    def test_same_seed_deterministic(self):
        pair = self._pair()
        a = augment_flip(pair, np.random.default_rng(8))
        b = augment_flip(pair, np.random.default_rng(8))
        assert np.array_equal(a.input, b.input)


class TestPyramid:
    def test_constant_preserved(self):
        pyr = gt_pyramid(np.full((3, 8, 8), 0.37))
        assert all(np.allclose(level, 0.37) for level in pyr)

    def test_block_mean_arithmetic(self):
        # alternating 0/1 rows average to 0.5 in every 2x2 block
        target = np.zeros((3, 4, 4))
        target[:, 1::2, :] = 1.0
        pyr = gt_pyramid(target)
        assert np.allclose(pyr[1], 0.5)
        assert np.allclose(pyr[2], 0.5)

    def test_shapes(self):
        pyr = gt_pyramid(np.zeros((3, 16, 8)))
        assert [p.shape for p in pyr] == [(3, 16, 8), (3, 8, 4), (3, 4, 2)]

    def test_divisibility_enforced(self):
        with pytest.raises(ShapeError):
            gt_pyramid(np.zeros((3, 6, 8)))
        with pytest.raises(ShapeError):
            area_down2(np.zeros((3, 5, 4)))

    def test_area_down2_hand_case(self):
        arr = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        assert np.allclose(area_down2(arr), [[[2.5]]])


def synth_pairs(count, size=8, seed=9):
    rng = np.random.default_rng(seed)
    return [ImagePair(rng.uniform(size=(3, size, size)),
                      rng.uniform(size=(3, size, size)),
                      name=f"img{i:03d}.png")
            for i in range(count)]


class TestIterBatches:
    def test_partial_batch_dropped(self):
        batches = list(iter_batches(synth_pairs(10), 8, True, 4, epoch_seed=[0, 0]))
        assert len(batches) == 2
        assert all(len(b) == 4 for b in batches)

    def test_same_epoch_seed_identical(self):
        pairs = synth_pairs(6)
        a = list(iter_batches(pairs, 4, True, 2, epoch_seed=[1, 3]))
        b = list(iter_batches(pairs, 4, True, 2, epoch_seed=[1, 3]))
        for ba, bb in zip(a, b):
            for (xa, pyra, na), (xb, pyrb, nb) in zip(ba, bb):
                assert na == nb
                assert np.array_equal(xa, xb)
                assert all(np.array_equal(ga, gb) for ga, gb in zip(pyra, pyrb))

    def test_distinct_epoch_seeds_shuffle_differently(self):
        pairs = synth_pairs(8)
        names = lambda ep: [item[2]
                            for batch in iter_batches(pairs, 8, False, 2, ep)
                            for item in batch]
        assert names([2, 0]) != names([2, 1])

    def test_emitted_shapes_and_range(self):
        for batch in iter_batches(synth_pairs(4), 4, True, 2, epoch_seed=[5, 5]):
            for inp, pyr, name in batch:
                assert inp.shape == (3, 4, 4)
                assert [g.shape for g in pyr] == [(3, 4, 4), (3, 2, 2), (3, 1, 1)]
                assert np.all(inp >= 0.0) and np.all(inp <= 1.0)
                assert all(np.all(np.isfinite(g)) for g in pyr)

    def test_bad_batch_size(self):
        with pytest.raises(ParameterError):
            list(iter_batches(synth_pairs(4), 8, True, 0, epoch_seed=[0, 0]))


class TestLoadPairs:
    def test_loads_synthetic_dataset(self, tiny_dataset):
        pairs = load_pairs(DatasetSpec(root=tiny_dataset))
        assert len(pairs) == 4
        assert [p.name for p in pairs] == sorted(p.name for p in pairs)
        for p in pairs:
            assert p.input.shape == p.target.shape
            assert 0.0 <= p.input.min() and p.input.max() <= 1.0

    def test_fail_fast_collects_every_problem(self, tiny_dataset):
        orphan = os.path.join(tiny_dataset, "input", "zzz_orphan.png")
        with open(orphan, "wb") as fh:
            fh.write(pil_png((1, 2, 3)))
        bad = os.path.join(tiny_dataset, "input", "aaa_bad.png")
        with open(bad, "wb") as fh:
            fh.write(b"garbage bytes")
        with open(os.path.join(tiny_dataset, "target", "aaa_bad.png"), "wb") as fh:
            fh.write(pil_png((1, 2, 3)))
        with pytest.raises(DatasetError) as err:
            load_pairs(DatasetSpec(root=tiny_dataset))
        assert len(err.value.files) == 2
        assert any("missing target" in f for f in err.value.files)
        assert any("aaa_bad" in f for f in err.value.files)

    def test_missing_layout_and_empty_dataset(self, tmp_path):
        with pytest.raises(DatasetError):
            load_pairs(DatasetSpec(root=str(tmp_path)))
        os.makedirs(tmp_path / "input")
        os.makedirs(tmp_path / "target")
        with pytest.raises(DatasetError):
            load_pairs(DatasetSpec(root=str(tmp_path)))

    def test_batch_iter_end_to_end(self, tiny_dataset):
        spec = DatasetSpec(root=tiny_dataset, patch=16, flips=True, seed=0)
        batches = list(batch_iter(spec, 2, epoch_seed=[0, 0]))
        assert len(batches) == 2
        for inp, pyr, name in batches[0]:
            assert inp.shape == (3, 16, 16)
            assert [g.shape for g in pyr] == [(3, 16, 16), (3, 8, 8), (3, 4, 4)]
