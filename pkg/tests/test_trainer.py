import numpy as np
import pytest

from pointdr.model import checkpoint_bytes
from pointdr.pc_io import NUM_CLASSES
from pointdr.toy import CAR, ROAD, SIDEWALK, TERRAIN, ToyBenchmark, generate_toy
from pointdr.trainer import (SGD, TrainConfig, ce_train_step, format_config, lr_at,
                             parse_config, scan_seed, train, train_step)

SMALL = ToyBenchmark(n_train=4, n_val=2, points_per_scan=300)


@pytest.fixture(scope="module")
def scans():
    return generate_toy("train", SMALL, seed=0)


def seeds_for(batch, step=0):
    return [(scan_seed(0, 0, step, k, 0), scan_seed(0, 0, step, k, 1)) for k in range(len(batch))]


def small_cfg(**kw):
    base = dict(hidden=(16,), embed_dim=8, epochs=2)
    base.update(kw)
    return TrainConfig(**base)


def params_bytes(model):
    return b"".join(p.tobytes() for p in model.parameters())


def test_zero_lambda_gates_off_step_is_ce_step(scans):
    cfg = small_cfg().baseline()
    m1, m2 = cfg.make_model(), cfg.make_model()
    o1, o2 = SGD(m1.parameters(), 0.9, 1e-4), SGD(m2.parameters(), 0.9, 1e-4)
    for step in range(3):
        batch = scans[:2]
        a = train_step(m1, cfg.make_bank(), batch, cfg, o1, 0.05, seeds_for(batch, step))
        b = ce_train_step(m2, batch, cfg, o2, 0.05, seeds_for(batch, step))
        assert a == b
    assert params_bytes(m1) == params_bytes(m2)


def test_zero_update_leaves_parameters(scans):
    cfg = small_cfg(lr=0.0, momentum=0.0, weight_decay=0.0)
    model = cfg.make_model()
    before = params_bytes(model)
    opt = SGD(model.parameters(), 0.0, 0.0)
    train_step(model, cfg.make_bank(), scans[:2], cfg, opt, 0.0, seeds_for(scans[:2]))
    assert params_bytes(model) == before


def test_step_updates_bank_from_weak_view_classes(scans):
    cfg = small_cfg()
    model, bank = cfg.make_model(), cfg.make_bank()
    opt = SGD(model.parameters(), cfg.momentum, cfg.weight_decay)
    out = train_step(model, bank, scans[:2], cfg, opt, cfg.lr, seeds_for(scans[:2]))
    present = np.zeros(NUM_CLASSES, bool)
    for s in scans[:2]:
        present[np.unique(s.labels)] = True
    np.testing.assert_array_equal(bank.initialized, present)
    assert out.ct > 0 and out.total == out.ce + cfg.lambda_ct * out.ct


def test_step_without_memory_bank(scans):
    cfg = small_cfg(use_memory_bank=False)
    model, bank = cfg.make_model(), cfg.make_bank()
    opt = SGD(model.parameters(), cfg.momentum, cfg.weight_decay)
    out = train_step(model, bank, scans[:2], cfg, opt, cfg.lr, seeds_for(scans[:2]))
    assert not bank.initialized.any()
    assert out.ct > 0


def test_empty_batch_rejected():
    cfg = small_cfg()
    with pytest.raises(ValueError):
        train_step(cfg.make_model(), cfg.make_bank(), [], cfg, None, 0.1, [])


def test_training_is_bitwise_reproducible(scans):
    cfg = small_cfg()
    r1 = train(None, cfg, scans)
    r2 = train(None, cfg, scans)
    assert r1.steps == r2.steps
    assert checkpoint_bytes(r1.model, r1.bank) == checkpoint_bytes(r2.model, r2.bank)


def test_zero_lambda_trajectory_matches_ce_trainer(scans):
    cfg = small_cfg().baseline()
    a = train(None, cfg, scans, "pointdr")
    b = train(None, cfg, scans, "ce")
    assert checkpoint_bytes(a.model, a.bank) == checkpoint_bytes(b.model, b.bank)


def test_step_count_per_epoch(scans):
    res = train(None, small_cfg(epochs=1, batch_size=2), scans)
    assert len(res.steps) == 2
    res = train(None, small_cfg(epochs=1, batch_size=3), scans)
    assert len(res.steps) == 2


def test_poly_schedule_boundaries():
    cfg = TrainConfig(schedule="poly", lr=0.1)
    assert lr_at(cfg, 0, 100) == 0.1
    assert lr_at(cfg, 100, 100) == 0.0
    assert lr_at(cfg, 50, 100) == pytest.approx(0.1 * 0.5 ** 0.9)
    assert lr_at(TrainConfig(lr=0.3), 77, 100) == 0.3


def test_sgd_momentum_and_weight_decay():
    p = np.array([1.0])
    opt = SGD([p], momentum=0.9, weight_decay=0.1)
    opt.step([np.array([2.0])], lr=0.5)
    assert p[0] == pytest.approx(1.0 - 0.5 * 2.1)
    opt.step([np.array([0.0])], lr=0.5)
    v = 0.9 * 2.1 + 0.1 * (1.0 - 0.5 * 2.1)
    assert p[0] == pytest.approx(1.0 - 0.5 * 2.1 - 0.5 * v)


def test_sgd_dampening_skips_first_step():
    p = np.array([0.0])
    opt = SGD([p], momentum=0.5, dampening=0.1)
    opt.step([np.array([1.0])], lr=1.0)
    assert p[0] == -1.0
    opt.step([np.array([1.0])], lr=1.0)
    assert p[0] == pytest.approx(-1.0 - (0.5 + 0.9))


def test_loss_curve_csv(scans):
    res = train(None, small_cfg(epochs=2), scans)
    lines = res.curve_csv().splitlines()
    assert lines[0] == "epoch,ce,ct,total,lr"
    assert len(lines) == 3
    assert lines[1].startswith("0,")


def test_default_config_loss_trends_down():
    scans = generate_toy("train", ToyBenchmark(n_train=8), seed=1)
    res = train(None, TrainConfig(seed=1), scans)
    assert len(res.curve) == 20
    assert res.curve[-1]["total"] < res.curve[0]["total"]


def test_full_scale_and_oracle_presets():
    p = TrainConfig.full_scale()
    assert (p.lr, p.momentum, p.weight_decay, p.epochs, p.batch_size) == (0.24, 0.9, 1.4e-4, 50, 4)
    assert (p.lambda_ct, p.tau, p.bank_momentum) == (0.1, 0.07, 0.99)
    o = TrainConfig.oracle()
    assert o.schedule == "poly" and o.lr == 0.1 and o.poly_power == 0.9
    assert (o.weight_decay, o.dampening, o.epochs, o.batch_size) == (1.0e-4, 0.1, 500, 4)


def test_config_round_trip():
    cfg = TrainConfig(lr=0.01, hidden=(32, 16), use_memory_bank=False, schedule="poly")
    assert parse_config(format_config(cfg)) == cfg
    cfg2 = parse_config("# desk run\nlr = 0.2\nflip_prob = 0\nrotation_range = 0, 90\n")
    assert cfg2.lr == 0.2 and cfg2.augment.flip_prob == 0.0
    assert cfg2.augment.rotation_range == (0.0, 90.0)
    with pytest.raises(ValueError):
        parse_config("nonsense = 1\n")
    with pytest.raises(ValueError):
        parse_config("lr 0.1\n")


# ----------------------------------------------------------------- toy data

def test_toy_is_deterministic():
    a = generate_toy("train", SMALL, seed=3)
    b = generate_toy("train", SMALL, seed=3)
    for x, y in zip(a, b):
        assert x.points.tobytes() == y.points.tobytes()
        assert x.labels.tobytes() == y.labels.tobytes()


def test_toy_splits_differ():
    a = generate_toy("train", SMALL, seed=3)
    b = generate_toy("val", SMALL, seed=3)
    assert all(x.points.tobytes() != y.points.tobytes() for x in a for y in b)


def test_toy_without_vehicles():
    for s in generate_toy("train", ToyBenchmark(n_train=5, vehicles=(0, 0)), seed=0):
        assert not np.any(s.labels == CAR)


def test_toy_scene_contract():
    for s in generate_toy("val", ToyBenchmark(n_val=10), seed=2):
        assert np.all((s.labels >= 0) & (s.labels < NUM_CLASSES))
        assert np.isin(s.labels, [ROAD, SIDEWALK, TERRAIN]).any()
        assert 1 <= len(s) <= 900
        assert s.weather == "clear"
