"""Training loop contracts on miniature datasets."""

import numpy as np
import pytest

from vidsal.data import make_dataset
from vidsal.models import Conv3DNetConfig, ConvLSTMNetConfig
from vidsal.optim import Adam, MomentumSGD
from vidsal.train import TrainConfig, TrainingDiverged, accuracy, clip_gradients, config_for_dataset, train


@pytest.fixture(scope="module")
def tiny_dataset():
    return make_dataset(
        classes=("move_left", "move_right"), clips_per_class=6, split_ratio=0.67, seed=2, size=24
    )


def test_two_class_training_learns(tiny_dataset):
    cfg = TrainConfig(epochs=6, learning_rate=2e-3, optimizer="adam", seed=1)
    net, report = train("conv3d", tiny_dataset, cfg)
    assert report.val_accuracy >= 0.75
    assert report.final_train_loss < report.epoch_losses[0]


def test_zero_learning_rate_keeps_parameters(tiny_dataset):
    for opt in ("adam", "sgd"):
        cfg = TrainConfig(epochs=1, learning_rate=0.0, optimizer=opt, seed=3)
        net, _ = train("conv3d", tiny_dataset, cfg)
        fresh, _ = train("conv3d", tiny_dataset, TrainConfig(epochs=1, learning_rate=0.0, optimizer=opt, seed=3))
        for name in net.params:
            assert np.array_equal(net.params[name].data, fresh.params[name].data), name


def test_zero_learning_rate_matches_initialization(tiny_dataset):
    # one epoch at lr 0 leaves every trainable parameter at its init value
    from vidsal.models import initialize_net

    cfg = TrainConfig(epochs=1, learning_rate=0.0, optimizer="sgd", momentum=0.0, seed=5)
    net, _ = train("conv3d", tiny_dataset, cfg)
    rng = np.random.default_rng(5)
    init = initialize_net("conv3d", config_for_dataset("conv3d", tiny_dataset), seed=int(rng.integers(0, 2**31 - 1)))
    for name in net.params:
        assert np.array_equal(net.params[name].data, init.params[name].data), name


def test_same_seed_bit_identical_checkpoints(tiny_dataset):
    cfg = TrainConfig(epochs=2, learning_rate=1e-3, optimizer="adam", seed=11)
    a, ra = train("conv3d", tiny_dataset, cfg)
    b, rb = train("conv3d", tiny_dataset, cfg)
    assert ra.epoch_losses == rb.epoch_losses
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data), name
    for name in a.buffers:
        assert np.array_equal(a.buffers[name], b.buffers[name]), name


def test_convlstm_trains_one_epoch(tiny_dataset):
    cfg = TrainConfig(epochs=1, learning_rate=0.02, optimizer="sgd", momentum=0.2, clip_norm=5.0, seed=4)
    net, report = train("convlstm", tiny_dataset, cfg)
    assert len(report.epoch_losses) == 1
    assert np.isfinite(report.final_train_loss)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts_with_location(tiny_dataset):
    cfg = TrainConfig(epochs=1, learning_rate=1e8, optimizer="sgd", momentum=0.0, seed=6)
    with pytest.raises(TrainingDiverged) as err:
        train("conv3d", tiny_dataset, cfg)
    assert err.value.epoch == 0


def test_training_input_validation(tiny_dataset):
    with pytest.raises(ValueError):
        train("conv3d", make_dataset(classes=("collide",), clips_per_class=4, seed=0, size=24))
    with pytest.raises(ValueError):
        cfg = TrainConfig(epochs=1, learning_rate=0.1, optimizer="nope")
        train("conv3d", tiny_dataset, cfg)


def test_clip_gradients_scales_global_norm():
    grads = {"a": np.full(4, 3.0, dtype=np.float32), "b": np.full(9, 4.0, dtype=np.float32)}
    clipped = clip_gradients(grads, 1.0)
    total = np.sqrt(sum(np.sum(g.astype(np.float64) ** 2) for g in clipped.values()))
    assert total == pytest.approx(1.0, rel=1e-5)
    small = {"a": np.array([0.1], dtype=np.float32)}
    assert clip_gradients(small, 1.0) is small


def test_config_for_dataset_matches_geometry(tiny_dataset):
    cfg3 = config_for_dataset("conv3d", tiny_dataset)
    assert isinstance(cfg3, Conv3DNetConfig)
    assert (cfg3.frames, cfg3.height, cfg3.num_classes) == (16, 24, 2)
    cfgl = config_for_dataset("convlstm", tiny_dataset)
    assert isinstance(cfgl, ConvLSTMNetConfig)
    assert cfgl.width == 24


def test_optimizers_step_shapes():
    params = {"w": np.zeros(3, dtype=np.float32)}
    adam = Adam(params, 0.1)
    adam.step({"w": np.ones(3, dtype=np.float32)})
    assert np.all(params["w"] < 0)
    params2 = {"w": np.zeros(3, dtype=np.float32)}
    sgd = MomentumSGD(params2, 0.1, momentum=0.5)
    sgd.step({"w": np.ones(3, dtype=np.float32)})
    sgd.step({"w": np.ones(3, dtype=np.float32)})
    # momentum accumulates: second step is larger than the first
    assert params2["w"][0] == pytest.approx(-(0.1 + 0.15))
