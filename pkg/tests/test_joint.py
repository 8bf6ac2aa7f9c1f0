import numpy as np
import pytest

from conftest import toy_model

from spectrapix.data import make_synthetic_digits
from spectrapix.decoder import ReconLossConfig, create_mlp
from spectrapix.errors import GridError
from spectrapix.joint import JointConfig, evaluate_joint, joint_train
from spectrapix.model import aggregate_scores


def setup(seed=0, n=16):
    model = toy_model(seed=seed, features=20, class_count=3, aperture_width=5.0)
    ds = make_synthetic_digits(n, seed=seed, classes=3)
    return model, ds


def test_config_validation():
    with pytest.raises(GridError):
        JointConfig(xi=1.5)
    with pytest.raises(GridError):
        JointConfig(back_end="cnn")


def test_xi_one_leaves_decoder_unchanged():
    model, ds = setup(seed=1)
    net = create_mlp(3, 3, "classification", hidden=(8, 8), seed=0)
    before = [p.copy() for p in net.params()]
    joint_train(model, net, ds, JointConfig(xi=1.0), epochs=1, batch_size=8,
                seed=0, window=5.0)
    for a, b in zip(net.params(), before):
        assert np.array_equal(a, b)


def test_joint_training_moves_both_parameter_sets():
    model, ds = setup(seed=2)
    net = create_mlp(3, 3, "classification", hidden=(8, 8), seed=0)
    latents_before = [lay.latent.copy() for lay in model.layers]
    net_before = [p.copy() for p in net.params()]
    _, _, history = joint_train(model, net, ds, JointConfig(xi=0.5), epochs=1,
                                batch_size=8, seed=0, lr_model=0.05,
                                window=5.0)
    assert any(not np.array_equal(a, b) for a, b in
               zip((l.latent for l in model.layers), latents_before))
    assert any(not np.array_equal(a, b) for a, b in zip(net.params(), net_before))
    assert {"loss", "loss_optical", "loss_backend",
            "optical_train_accuracy"} <= set(history[0])


def test_joint_reconstructor_back_end():
    model, ds = setup(seed=3, n=8)
    net = create_mlp(3, 28 * 28, "reconstruction", hidden=(8, 8), seed=0)
    cfg = JointConfig(xi=0.5, back_end="reconstructor",
                      recon=ReconLossConfig(gamma=1.0, structural="mae"))
    joint_train(model, net, ds, cfg, epochs=1, batch_size=4, seed=0, window=5.0)
    res = evaluate_joint(model, net, ds, window=5.0)
    assert "reconstruction_mae" in res
    assert 0.0 <= res["reconstruction_mae"] <= 1.0


def test_head_back_end_pairing_enforced():
    model, ds = setup(seed=4, n=4)
    recon_net = create_mlp(3, 28 * 28, "reconstruction", hidden=(8, 8))
    with pytest.raises(GridError):
        joint_train(model, recon_net, ds, JointConfig(xi=0.5), epochs=1,
                    window=5.0)
    wrong_width = create_mlp(5, 5, "classification", hidden=(8, 8))
    with pytest.raises(GridError):
        joint_train(model, wrong_width, ds, JointConfig(xi=0.5), epochs=1,
                    window=5.0)


def test_band_bookkeeping_identity(rng):
    # per-class band power is exactly the mean of member-wavelength powers
    model = toy_model(seed=5, features=20, mode="band", class_count=2,
                      per_class=3, aperture_width=5.0)
    raw = rng.random((7, 6))
    s, _ = aggregate_scores(raw, model.plan)
    manual = raw.reshape(7, 2, 3).mean(axis=-1)
    assert np.array_equal(s, manual)


def test_evaluate_joint_classifier_metrics():
    model, ds = setup(seed=6, n=12)
    net = create_mlp(3, 3, "classification", hidden=(8, 8), seed=0)
    res = evaluate_joint(model, net, ds, window=5.0)
    assert {"optical_accuracy", "electronic_accuracy", "eta_mean",
            "eta_std", "confusion"} <= set(res)
    assert res["confusion"].sum() == len(ds)


def test_joint_determinism():
    def run():
        model, ds = setup(seed=7, n=8)
        net = create_mlp(3, 3, "classification", hidden=(8, 8), seed=1)
        joint_train(model, net, ds, JointConfig(xi=0.5), epochs=1,
                    batch_size=4, seed=9, window=5.0)
        return [lay.latent.copy() for lay in model.layers] + \
               [p.copy() for p in net.params()]

    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)
