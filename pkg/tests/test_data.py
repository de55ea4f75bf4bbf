import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from lggan.data import (
    VOID, DatasetError, DecodeError, SemanticMap, class_masks, class_palette, collate, decode_semantic_map,
    image_to_tensor, iterate_batches, load_dataset, luminance_ramp, one_hot, save_dataset, synth_dataset,
    valid_class_indicator,
)

from conftest import random_semantic


def test_decode_copies_labels():
    sem = decode_semantic_map(np.array([[0, 1], [1, 2]], dtype=np.uint8), 3, void_id=255)
    assert sem.labels.tolist() == [[0, 1], [1, 2]]


def test_decode_void():
    sem = decode_semantic_map(np.array([[0, 255], [1, 2]], dtype=np.uint8), 3, void_id=255)
    assert sem.labels[0, 1] == VOID


def test_decode_rejects_out_of_range_label():
    with pytest.raises(DecodeError, match=r"label 7 >= c=3 at pixel \(y=1, x=0\)"):
        decode_semantic_map(np.array([[0, 1], [7, 2]], dtype=np.uint8), 3, void_id=255)


def test_decode_rejects_multichannel():
    with pytest.raises(DecodeError):
        decode_semantic_map(np.zeros((2, 2, 3), dtype=np.uint8), 3)


def test_one_hot_definition():
    sem = SemanticMap(torch.tensor([[0, 1], [1, 2]]), 3)
    oh = one_hot(sem)
    assert oh[0].tolist() == [[1, 0], [0, 0]]
    assert oh[1].tolist() == [[0, 1], [1, 0]]
    assert oh[2].tolist() == [[0, 0], [0, 1]]


def test_one_hot_all_void():
    sem = SemanticMap(torch.full((3, 5), VOID), 4)
    assert one_hot(sem).sum() == 0


def test_one_hot_matches_pixel_loop(rng):
    sem = random_semantic(rng, 4, 8, 8, void_fraction=0.2)
    oh = one_hot(sem).numpy()
    for y in range(8):
        for x in range(8):
            label = int(sem.labels[y, x])
            expected = np.zeros(4)
            if label != VOID:
                expected[label] = 1
            assert (oh[:, y, x] == expected).all()
    non_void = (sem.labels != VOID).numpy()
    assert (oh.sum(0)[non_void] == 1).all()
    assert (oh.sum(0)[~non_void] == 0).all()


def test_class_masks_identity(rng):
    oh = one_hot(random_semantic(rng, 5, 64, 64))
    assert torch.equal(class_masks(oh, 64, 64), oh)


def test_class_masks_upsample_replicates():
    oh = torch.tensor([[[1.0, 1.0], [0.0, 0.0]]])
    up = class_masks(oh, 4, 4)
    oracle = np.kron(oh[0].numpy(), np.ones((2, 2)))
    assert np.array_equal(up[0].numpy(), oracle)


@pytest.mark.parametrize("size", [(16, 16), (4, 2), (8, 32), (64, 8)])
def test_class_masks_nearest_oracle(rng, size):
    oh = one_hot(random_semantic(rng, 3, 16, 16, void_fraction=0.1))
    out = class_masks(oh, *size).numpy()
    h, w = size
    for y in range(h):
        for x in range(w):
            sy, sx = (y * 16) // h, (x * 16) // w
            assert (out[:, y, x] == oh[:, sy, sx].numpy()).all()
    assert set(np.unique(out)) <= {0.0, 1.0}


def test_class_masks_rejects_fractional_scale(rng):
    oh = one_hot(random_semantic(rng, 3, 16, 16))
    with pytest.raises(ValueError, match="not an integer"):
        class_masks(oh, 24, 16)


def test_valid_class_indicator():
    sem = SemanticMap(torch.tensor([[0, 1], [1, 2]]), 4)
    assert valid_class_indicator(sem).tolist() == [1, 1, 1, 0]
    assert valid_class_indicator(SemanticMap(torch.full((2, 2), VOID), 3)).tolist() == [0, 0, 0]
    assert valid_class_indicator(SemanticMap(torch.zeros(4, 4, dtype=torch.long), 3)).tolist() == [1, 0, 0]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(1, 6), scale=st.sampled_from([1, 2, 4]))
def test_absent_class_has_empty_masks(seed, c, scale):
    sem = random_semantic(np.random.default_rng(seed), c, 4, 4, void_fraction=0.5)
    h = valid_class_indicator(sem)
    masks = class_masks(one_hot(sem), 4 * scale, 4 * scale)
    for i in range(c):
        if h[i] == 0:
            assert masks[i].sum() == 0
        else:
            assert masks[i].sum() > 0


def test_synth_is_deterministic():
    a = synth_dataset(3, 5, 4, 32, 48)
    b = synth_dataset(3, 5, 4, 32, 48)
    for x, y in zip(a, b):
        assert torch.equal(x.semantic.labels, y.semantic.labels)
        assert torch.equal(x.target, y.target)
    c = synth_dataset(4, 5, 4, 32, 48)
    assert any(not torch.equal(x.semantic.labels, y.semantic.labels) for x, y in zip(a, c))


def test_synth_contract():
    samples = synth_dataset(1, 16, 4, 64, 64)
    assert len(samples) == 16
    for s in samples:
        assert int(s.semantic.labels.max()) < 4 and int(s.semantic.labels.min()) >= 0
        assert s.target.shape == (3, 64, 64)
        assert s.conditioning is None
        assert s.target.abs().max() <= 1.0


def test_synth_class_colours_follow_palette_plus_ramp():
    palette = class_palette(4)
    ramp = luminance_ramp(64)
    for s in synth_dataset(2, 4, 4, 64, 64):
        for y in range(0, 64, 7):
            for x in range(64):
                k = int(s.semantic.labels[y, x])
                expected = palette[k] + ramp[x]
                assert torch.allclose(s.target[:, y, x], expected, atol=1e-6)


def test_synth_cross_view_has_conditioning():
    s = synth_dataset(1, 2, 3, 32, 32, mode="cross-view")[0]
    assert s.conditioning.shape == s.target.shape


def test_synth_rejects_bad_args():
    with pytest.raises(ValueError):
        synth_dataset(0, 1, 1, 64, 64)
    with pytest.raises(ValueError):
        synth_dataset(0, 1, 3, 16, 64)


def _write_png(path, array, mode):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array, mode=mode).save(path)


def test_load_dataset_roundtrip(tmp_path):
    samples = synth_dataset(5, 3, 4, 32, 32, mode="cross-view")
    save_dataset(samples, tmp_path)
    loaded = load_dataset(tmp_path, "cross-view", 4)
    assert [s.name for s in loaded] == sorted(s.name for s in samples)
    for a, b in zip(samples, loaded):
        assert torch.equal(a.semantic.labels, b.semantic.labels)
        assert (a.target - b.target).abs().max() <= 1 / 127.5
        assert b.conditioning is not None


def test_load_dataset_sorted_by_stem(tmp_path):
    for stem in ("c", "a", "b"):
        _write_png(tmp_path / "labels" / f"{stem}.png", np.zeros((8, 8), np.uint8), "L")
        _write_png(tmp_path / "images" / f"{stem}.png", np.zeros((8, 8, 3), np.uint8), "RGB")
    assert [s.name for s in load_dataset(tmp_path, "semantic", 2)] == ["a", "b", "c"]


def test_load_dataset_unmatched_stem(tmp_path):
    _write_png(tmp_path / "images" / "a.png", np.zeros((8, 8, 3), np.uint8), "RGB")
    (tmp_path / "labels").mkdir()
    with pytest.raises(DatasetError, match="a"):
        load_dataset(tmp_path, "semantic", 2)


def test_load_dataset_size_mismatch(tmp_path):
    _write_png(tmp_path / "labels" / "a.png", np.zeros((8, 8), np.uint8), "L")
    _write_png(tmp_path / "images" / "a.png", np.zeros((8, 4, 3), np.uint8), "RGB")
    with pytest.raises(DatasetError, match="size"):
        load_dataset(tmp_path, "semantic", 2)


def test_load_dataset_missing_cond_dir(tmp_path):
    _write_png(tmp_path / "labels" / "a.png", np.zeros((8, 8), np.uint8), "L")
    _write_png(tmp_path / "images" / "a.png", np.zeros((8, 8, 3), np.uint8), "RGB")
    with pytest.raises(DatasetError, match="cond"):
        load_dataset(tmp_path, "cross-view", 2)


def test_pixel_rescale_endpoints():
    image = Image.fromarray(np.array([[[0, 0, 0], [255, 255, 255]]], dtype=np.uint8), mode="RGB")
    t = image_to_tensor(image)
    assert t[:, 0, 0].tolist() == [-1.0, -1.0, -1.0]
    assert t[:, 0, 1].tolist() == [1.0, 1.0, 1.0]


def test_batches_cover_epoch_deterministically():
    samples = synth_dataset(0, 5, 3, 32, 32)
    first = [b.target for b in iterate_batches(samples, 2, seed=1, epoch=0)]
    again = [b.target for b in iterate_batches(samples, 2, seed=1, epoch=0)]
    assert [len(t) for t in first] == [2, 2, 1]
    assert all(torch.equal(a, b) for a, b in zip(first, again))
    batch = collate(samples)
    assert batch.valid.shape == (5, 3) and batch.onehot.shape == (5, 3, 32, 32)
