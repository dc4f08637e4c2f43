import numpy as np
import pytest

from heteroembed.data import DomainShift, SynthConfig, generate_synthetic
from heteroembed.net import NetConfig, forward_batch, init_net
from heteroembed.train import TrainConfig, train


def small_dataset(seed=0):
    return generate_synthetic(
        SynthConfig(
            n_identities=6,
            samples_per_identity_per_domain=5,
            feature_dim=4,
            seed=seed,
        )
    )


def small_config(**overrides):
    defaults = dict(
        net=NetConfig(input_dim=4, hidden_dims=(8,), embed_dim=4),
        epochs=2,
        tuples_per_epoch=50,
        batch_size=8,
        seed=3,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


def test_zero_epochs_keeps_init():
    ds = small_dataset()
    cfg = small_config(epochs=0)
    net, log = train(ds, cfg)
    init = init_net(cfg.net, cfg.seed)
    for a, b in zip(net.params(), init.params()):
        assert np.array_equal(a, b)
    assert log.records == []


def test_deterministic():
    ds = small_dataset()
    cfg = small_config()
    net_a, log_a = train(ds, cfg)
    net_b, log_b = train(ds, cfg)
    for a, b in zip(net_a.params(), net_b.params()):
        assert np.array_equal(a, b)
    assert log_a.records == log_b.records


@pytest.mark.parametrize("mode", ["hetero", "triplet_baseline"])
def test_loss_decreases_on_hard_data(mode):
    # tight clusters with a big domain gap keeps hinges active at init
    ds = generate_synthetic(
        SynthConfig(
            n_identities=8,
            samples_per_identity_per_domain=6,
            feature_dim=4,
            cluster_spread=0.6,
            domain_shift=DomainShift(rotation_angle_degrees=60, offset_magnitude=2.0, noise_scale=0.2),
            seed=1,
        )
    )
    cfg = small_config(epochs=10, tuples_per_epoch=100, loss_mode=mode, learning_rate=3e-3)
    _, log = train(ds, cfg)
    assert log.records[-1].mean_loss < log.records[0].mean_loss


def test_baseline_has_no_l2():
    ds = small_dataset()
    _, log = train(ds, small_config(loss_mode="triplet_baseline"))
    assert all(r.mean_l2 == 0.0 for r in log.records)


def test_parameters_change():
    ds = small_dataset()
    cfg = small_config(epochs=3, tuples_per_epoch=100)
    net, _ = train(ds, cfg)
    init = init_net(cfg.net, cfg.seed)
    assert any(not np.array_equal(a, b) for a, b in zip(net.params(), init.params()))
    # trained net still emits unit-norm embeddings
    feats = np.stack([s.features for s in ds.samples[:10]])
    out = forward_batch(net, feats)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)


def test_log_csv(tmp_path):
    ds = small_dataset()
    _, log = train(ds, small_config())
    path = tmp_path / "log.csv"
    log.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,mean_loss,mean_l1,mean_l2,active_fraction,lr"
    assert len(lines) == 3
