import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from lggan.data import collate, one_hot, synth_dataset, valid_class_indicator
from lggan.local import LocalGenerator, combine_local_add, filter_class_features, masked_l1_loss

from conftest import random_semantic
from oracles import masked_l1_oracle


def test_upsample_shapes():
    torch.manual_seed(0)
    assert LocalGenerator(4, nf=32).upsample_features(torch.randn(1, 128, 16, 16)).shape == (1, 32, 64, 64)
    out = LocalGenerator(4, nf=16).upsample_features(torch.randn(2, 64, 32, 16))
    assert out.shape == (2, 16, 128, 64)
    assert torch.isfinite(out).all()


def test_filter_definition():
    f = torch.ones(1, 2, 2, 2)
    masks = torch.tensor([[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [1.0, 1.0]]]])
    packed = filter_class_features(f, masks)
    assert packed.shape == (1, 2, 2, 2, 2)
    expected = torch.tensor([[1.0, 0.0], [0.0, 0.0]])
    assert torch.equal(packed[0, 0, 0], expected) and torch.equal(packed[0, 0, 1], expected)


def test_filter_full_mask_is_identity():
    f = torch.randn(2, 3, 4, 4)
    assert torch.equal(filter_class_features(f, torch.ones(2, 1, 4, 4))[:, 0], f)


def test_filter_resolution_mismatch():
    with pytest.raises(ValueError, match="resolution"):
        filter_class_features(torch.randn(1, 2, 4, 4), torch.ones(1, 3, 2, 2))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(1, 6), h=st.integers(1, 16), w=st.integers(1, 16))
def test_filter_partition_and_support(seed, c, h, w):
    rng = np.random.default_rng(seed)
    masks = one_hot(random_semantic(rng, c, h, w)).unsqueeze(0)
    f = torch.from_numpy(rng.normal(size=(1, 5, h, w))).float()
    packed = filter_class_features(f, masks)
    assert torch.allclose(packed.sum(dim=1), f, atol=1e-6)
    for i in range(c):
        assert (packed[:, i] * (1 - masks[:, i:i + 1])).abs().max() == 0


def test_class_images_shape_and_range():
    torch.manual_seed(0)
    gen = LocalGenerator(3, nf=8)
    out = gen.generate_class_image(torch.randn(2, 8, 16, 16) * 10, 1)
    assert out.shape == (2, 3, 16, 16)
    assert out.abs().max() <= 1.0
    with pytest.raises(IndexError):
        gen.generate_class_image(torch.randn(1, 8, 4, 4), 3)


def test_class_branches_have_isolated_parameters():
    torch.manual_seed(0)
    gen = LocalGenerator(3, nf=8).eval()  # eval: no spectral-norm power iteration between calls
    x = torch.randn(1, 8, 8, 8)
    before = [gen.generate_class_image(x, i).detach() for i in range(3)]
    with torch.no_grad():
        gen.branches[0].net[0].parametrizations.weight.original.add_(0.5)
    after = [gen.generate_class_image(x, i).detach() for i in range(3)]
    assert not torch.equal(before[0], after[0])
    assert torch.equal(before[1], after[1]) and torch.equal(before[2], after[2])


def test_combine_add():
    a = torch.randn(2, 3, 4, 4)
    assert torch.equal(combine_local_add([a, -a]), torch.zeros_like(a))
    assert torch.equal(combine_local_add([a]), a)
    xs = [torch.randn(2, 3, 4, 4) for _ in range(4)]
    oracle = torch.zeros_like(a)
    for b in range(2):
        for k in range(3):
            for y in range(4):
                for x in range(4):
                    oracle[b, k, y, x] = sum(float(t[b, k, y, x]) for t in xs)
    assert torch.allclose(combine_local_add(xs), oracle, atol=1e-6)
    assert torch.allclose(combine_local_add(xs[::-1]), combine_local_add(xs), atol=1e-6)
    with pytest.raises(ValueError):
        combine_local_add([a, torch.randn(2, 3, 4, 5)])


def test_combine_conv():
    torch.manual_seed(0)
    gen = LocalGenerator(3, nf=8, variant="conv")
    xs = [torch.randn(2, 3, 8, 8) for _ in range(3)]
    out = gen.combine(xs)
    assert out.shape == (2, 3, 8, 8) and out.abs().max() <= 1.0
    assert not torch.allclose(gen.combine(xs[::-1]), out)
    with pytest.raises(ValueError):
        gen.combine([xs[0], torch.randn(2, 3, 8, 4), xs[2]])


def test_masked_l1_exact_reconstruction_is_zero():
    target = torch.rand(1, 3, 4, 4) * 2 - 1
    masks = one_hot(random_semantic(np.random.default_rng(0), 3, 4, 4)).unsqueeze(0)
    per_class = [target * masks[:, i:i + 1] for i in range(3)]
    assert masked_l1_loss(per_class, target, masks, torch.ones(1, 3)) == 0


def test_masked_l1_hand_value():
    target = torch.ones(1, 1, 2, 2)
    masks = torch.tensor([[[[1.0, 1.0], [0.0, 0.0]]]])
    pred = torch.tensor([[[[0.5, 1.5], [0.0, 0.0]]]])
    assert masked_l1_loss([pred], target, masks, torch.ones(1, 1)).item() == pytest.approx(0.25, abs=1e-7)


def test_masked_l1_matches_loop_oracle(rng):
    for _ in range(10):
        c = int(rng.integers(1, 5))
        sems = [random_semantic(rng, c, 6, 5, void_fraction=0.3) for _ in range(2)]
        masks = torch.stack([one_hot(s) for s in sems])
        valid = torch.stack([valid_class_indicator(s) for s in sems])
        target = torch.from_numpy(rng.uniform(-1, 1, (2, 3, 6, 5))).float()
        per_class = [torch.from_numpy(rng.uniform(-1, 1, (2, 3, 6, 5))).float() for _ in range(c)]
        got = masked_l1_loss(per_class, target, masks, valid).item()
        assert got == pytest.approx(masked_l1_oracle(per_class, target, masks, valid), abs=1e-6)
        assert got >= 0


def test_absent_class_branch_gets_no_masked_l1_gradient():
    torch.manual_seed(0)
    batch = collate(synth_dataset(0, 2, 4, 32, 32))
    batch.onehot[:, 3] = 0
    batch.valid[:, 3] = 0
    gen = LocalGenerator(4, nf=8)
    packed, per_class, _ = gen(torch.randn(2, 32, 8, 8), batch.onehot)
    masked_l1_loss(per_class, batch.target, batch.onehot, batch.valid).backward()
    absent = [p.grad for p in gen.branches[3].parameters()]
    assert all(g is None or g.abs().max() == 0 for g in absent)
    present = [p.grad for p in gen.branches[0].parameters()]
    assert any(g is not None and g.abs().max() > 0 for g in present)
