"""End-to-end smoke tests of the python bindings."""

import math

import numpy as np
import pytest

dl = pytest.importorskip("difflab")


@pytest.fixture(scope="module")
def schedule():
    return dl.make_linear_schedule(100, 1e-4, 0.02)


@pytest.fixture(scope="module")
def trained(schedule):
    spec = dl.DatasetSpec()
    spec.size = 256
    spec.seed = 3
    ds = dl.generate(spec)
    cfg = dl.DenoiserConfig()
    cfg.data_dim = 2
    cfg.hidden_width = 24
    cfg.depth = 2
    cfg.time_embed_dim = 8
    cfg.cond_embed_dim = 4
    cfg.num_conditions = ds.num_conditions
    tc = dl.TrainConfig()
    tc.total_iterations = 300
    tc.batch_size = 16
    tc.learning_rate = 1e-3
    tc.seed = 9
    result = dl.train(tc, schedule, ds.samples, ds.labels, dl.init_denoiser(cfg, 7))
    return ds, result


def test_schedule_tables(schedule):
    assert schedule.T == 100
    assert schedule.alpha_bar(0) == 1.0
    assert math.isclose(schedule.beta(1), 1e-4)
    assert math.isclose(schedule.beta(100), 0.02)
    assert schedule.alpha_bar(100) < schedule.alpha_bar(50) < 1.0


def test_forward_and_predict_round_trip(schedule):
    x0 = np.array([0.4, -1.2])
    eps = np.array([0.7, 0.1])
    xt = dl.forward_diffuse(schedule, x0, eps, 60)
    back = dl.predict_x0(schedule, xt, eps, 60)
    np.testing.assert_allclose(back, x0, atol=1e-12)


def test_training_reduces_loss(trained):
    _, result = trained
    assert result.metrics[-1].base_loss < result.metrics[0].base_loss


def test_sampling_and_inversion_round_trip(schedule, trained):
    ds, result = trained
    p = result.params
    cond = dl.cond_embedding(p, ds.labels[0])
    null = dl.null_embedding(p)

    x = dl.ddim_sample(schedule, p, None, np.array([0.5, -0.5]), cond, cond, 1.0, 20)
    assert np.isfinite(x).all()

    x0 = ds.samples[0]
    lat = dl.ddim_invert(schedule, p, None, x0, cond, null, 1.0, 50)
    back = dl.ddim_sample(schedule, p, None, lat, cond, null, 1.0, 50)
    assert np.linalg.norm(back - x0) < 0.2

    opt = dl.NtiOptions()
    inv_plain = dl.ddim_invert_result(schedule, p, None, x0, cond, 7.5, 10)
    inv_nti = dl.nti_invert(schedule, p, None, x0, cond, 7.5, 10, opt)
    rec_plain = dl.reconstruct(schedule, p, None, inv_plain, cond)
    rec_nti = dl.reconstruct(schedule, p, None, inv_nti, cond)
    err_plain = np.linalg.norm(rec_plain - x0)
    err_nti = np.linalg.norm(rec_nti - x0)
    assert err_nti <= err_plain + 1e-12


def test_istd_and_metrics(schedule, trained):
    ds, result = trained
    cfg = dl.IstdConfig()
    cfg.conditions = [0, 1]
    cfg.pairs_per_condition = 1
    cfg.num_steps = 5
    cfg.seed = 4
    rep = dl.compute_istd(schedule, result.params, None, cfg)
    assert rep.istd >= 0.0
    assert len(rep.stds) == 2

    a = [np.array([0.1, 0.2]), np.array([0.3, 0.4])]
    r = dl.recon_metrics(a, a)
    assert r.mean_mse == 0.0
    bw = dl.mmd_median_bandwidth(ds.samples, ds.samples)
    assert dl.mmd_quality(ds.samples, ds.samples, bw) <= 0.0


def test_shapes_and_classifier():
    img = dl.render_shape(2, 1, 0, 0.0, 0.0, 0.0)
    assert dl.classify_shape(img) == 2
    assert len(dl.shape_background_pixels()) == 28


def test_checkpoint_round_trip(tmp_path, trained):
    _, result = trained
    ck = dl.Checkpoint()
    ck.params = result.params
    path = str(tmp_path / "m.ckpt")
    dl.save_checkpoint(path, ck)
    back = dl.load_checkpoint(path)
    assert back.params.config.hidden_width == result.params.config.hidden_width
    np.testing.assert_allclose(back.params.get("in.W"), result.params.get("in.W"), atol=1e-6)
