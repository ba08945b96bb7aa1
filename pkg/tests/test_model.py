import numpy as np
import pytest

from gradcheck import H, REL_TOL, rel_err, relu_pattern, smooth_instances
from oracles import central_difference
from pointdr.model import (FEATURE_DIM, FEATURE_NAMES, Model, NumericError, VoxelGrid,
                           featurize, load_checkpoint, save_checkpoint)
from pointdr.pc_io import PointCloud
from pointdr.pointdr_core import MemoryBank, bank_update


def test_full_objective_gradients_fd():
    for seed, worst in smooth_instances(10):
        assert worst < REL_TOL, seed


def test_single_weight_fd_random_parameters():
    rng = np.random.default_rng(99)
    model = Model(in_dim=5, hidden=(8, 8), embed_dim=4, num_classes=3, seed=1)
    for d in model.layers:
        d.b[...] = rng.normal(0, 0.1, d.b.shape)
    x = rng.normal(size=(6, 5))
    gf, gl = rng.normal(size=(6, 4)), rng.normal(size=(6, 3))

    def scalar():
        f, logits = model.forward(x)
        model._cache = None
        return float(np.sum(f * gf) + np.sum(logits * gl))

    model.zero_grad()
    model.forward(x)
    model.backward(gf, gl)
    params, grads = model.parameters(), model.gradients()
    sizes = [p.size for p in params]
    picks = rng.choice(sum(sizes), size=100, replace=False)
    offsets = np.cumsum([0] + sizes)
    base = relu_pattern(model, x)
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(flat - offsets[k], params[k].shape)
        p = params[k]
        old = p[idx]
        p[idx] = old + H
        up = scalar()
        ok = np.array_equal(relu_pattern(model, x), base)
        p[idx] = old - H
        dn = scalar()
        ok &= np.array_equal(relu_pattern(model, x), base)
        p[idx] = old
        if ok:
            assert rel_err(grads[k][idx], (up - dn) / (2 * H)) < REL_TOL


def test_input_gradient_fd():
    rng = np.random.default_rng(4)
    model = Model(in_dim=4, hidden=(6,), embed_dim=3, num_classes=2, seed=2)
    x = rng.normal(size=(3, 4))
    gf, gl = rng.normal(size=(3, 3)), rng.normal(size=(3, 2))

    def scalar():
        f, logits = model.forward(x)
        return float(np.sum(f * gf) + np.sum(logits * gl))

    model.forward(x)
    dx = model.backward(gf, gl)
    np.testing.assert_allclose(dx, central_difference(scalar, x, h=1e-6), rtol=1e-5, atol=1e-8)


def test_embeddings_unit_norm():
    rng = np.random.default_rng(0)
    model = Model(seed=3)
    f, logits = model.forward(rng.normal(size=(50, FEATURE_DIM)) * 5)
    np.testing.assert_allclose(np.linalg.norm(f, axis=1), 1.0, atol=1e-6)
    assert logits.shape == (50, 19)


def test_zero_classifier_gives_zero_logits():
    model = Model(seed=0, zero_classifier=True)
    _, logits = model.forward(np.random.default_rng(1).normal(size=(10, FEATURE_DIM)))
    assert not logits.any()


def test_duplicated_rows_and_permutation():
    rng = np.random.default_rng(2)
    model = Model(seed=4)
    x = rng.normal(size=(20, FEATURE_DIM))
    f, logits = model.forward(np.vstack([x, x[:1]]))
    np.testing.assert_allclose(f[-1], f[0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(logits[-1], logits[0], rtol=0, atol=1e-12)
    perm = rng.permutation(20)
    f1, l1 = model.forward(x)
    f2, l2 = model.forward(x[perm])
    np.testing.assert_allclose(f2, f1[perm], atol=1e-12)
    np.testing.assert_allclose(l2, l1[perm], atol=1e-12)


def test_singular_projection_uses_safe_direction():
    model = Model(in_dim=3, hidden=(4,), embed_dim=3, num_classes=2, seed=0)
    for d in model.projector:
        d.W[...] = 0.0
        d.b[...] = 0.0
    f, _ = model.forward(np.ones((2, 3)))
    np.testing.assert_array_equal(f, [[1, 0, 0], [1, 0, 0]])
    model.backward(np.ones((2, 3)), None)
    assert not model.projector[1].dW.any()


def test_zero_upstream_gives_zero_gradients():
    model = Model(seed=5)
    model.zero_grad()
    model.forward(np.random.default_rng(0).normal(size=(8, FEATURE_DIM)))
    model.backward(np.zeros((8, 32)), np.zeros((8, 19)))
    assert all(not g.any() for g in model.gradients())


def test_gradient_accumulation_doubles():
    rng = np.random.default_rng(6)
    model = Model(seed=6)
    x = rng.normal(size=(8, FEATURE_DIM))
    gf, gl = rng.normal(size=(8, 32)), rng.normal(size=(8, 19))
    model.zero_grad()
    model.forward(x)
    model.backward(gf, gl)
    once = [g.copy() for g in model.gradients()]
    model.forward(x)
    model.backward(gf, gl)
    for a, b in zip(once, model.gradients()):
        np.testing.assert_array_equal(b, 2 * a)


def test_backward_without_forward():
    with pytest.raises(RuntimeError):
        Model(seed=0).backward(np.zeros((1, 32)), np.zeros((1, 19)))


def test_nonfinite_activation_reports_layer():
    model = Model(in_dim=3, hidden=(4,), embed_dim=2, num_classes=2, seed=0)
    model.encoder[1].W[0, 0] = np.inf
    with pytest.raises(NumericError) as exc:
        model.forward(np.ones((1, 3)) * 10)
    assert exc.value.layer == 2
    with pytest.raises(NumericError) as exc:
        model.forward(np.array([[np.nan, 0, 0]]))
    assert exc.value.layer == 0


def test_parameter_and_gradient_shapes_match():
    model = Model(seed=0)
    assert [p.shape for p in model.parameters()] == [g.shape for g in model.gradients()]


# ------------------------------------------------------------------ features

def test_voxel_grid_assignment():
    xyz = np.array([[0.1, 0.2, 0.3], [0.4, 0.1, 0.0], [-0.1, 0.0, 0.0], [1.2, 0.0, 0.0]])
    g = VoxelGrid(xyz, 0.5)
    np.testing.assert_array_equal(g.coords[g.inverse], np.floor(xyz / 0.5).astype(int))
    members = g.members()
    assert sorted(len(v) for v in members.values()) == [1, 1, 2]
    assert sorted(i for v in members.values() for i in v) == [0, 1, 2, 3]
    np.testing.assert_array_equal(members[(0, 0, 0)], [0, 1])


def test_featurize_singleton_at_origin():
    x = PointCloud(np.array([[0.0, 0.0, 0.0, 0.5]]))
    feats = featurize(x, VoxelGrid(x.xyz, 1.0))
    names = list(FEATURE_NAMES)
    assert feats[0, names.index("log_occupancy@1")] == pytest.approx(np.log(2))
    for k in ("centroid_x", "centroid_y", "centroid_z", "dx", "dy", "dz"):
        assert feats[0, names.index(k)] == 0.0


def test_featurize_coincident_points_identical():
    x = PointCloud(np.array([[1.0, 2.0, 0.3, 0.4], [1.0, 2.0, 0.3, 0.4], [5.0, 0, 0, 0.1]]))
    feats = featurize(x)
    np.testing.assert_array_equal(feats[0], feats[1])


def test_featurize_width_constant():
    rng = np.random.default_rng(0)
    for n in (1, 5, 300):
        x = PointCloud(np.column_stack([rng.normal(size=(n, 3)) * 10, rng.random(n)]))
        feats = featurize(x)
        assert feats.shape == (n, FEATURE_DIM)
        assert np.all(np.isfinite(feats))


def test_featurize_rejects_empty_and_foreign_grid():
    with pytest.raises(ValueError):
        featurize(PointCloud(np.zeros((0, 4))))
    x = PointCloud(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        featurize(x, VoxelGrid(np.zeros((2, 3))))


# ---------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip(tmp_path):
    model = Model(hidden=(16, 8), embed_dim=6, num_classes=5, seed=9, voxel_size=0.7)
    bank = MemoryBank(6, 5, 0.98)
    bank_update(bank, np.random.default_rng(0).normal(size=(6, 5)),
                np.array([True, False, True, True, False]))
    save_checkpoint(tmp_path / "m.ckpt", model, bank)
    m2, b2 = load_checkpoint(tmp_path / "m.ckpt")
    assert m2.voxel_size == 0.7 and m2.embed_dim == 6 and m2.num_classes == 5
    for p, q in zip(model.parameters(), m2.parameters()):
        np.testing.assert_array_equal(q, p.astype(np.float32))
    np.testing.assert_array_equal(b2.initialized, bank.initialized)
    np.testing.assert_array_equal(b2.B, bank.B.astype(np.float32))
    assert b2.momentum == 0.98
    save_checkpoint(tmp_path / "n.ckpt", m2)
    m3, b3 = load_checkpoint(tmp_path / "n.ckpt")
    assert b3 is None


def test_checkpoint_bad_magic(tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.ckpt")
