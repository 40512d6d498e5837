import numpy as np
import pytest

from freqamc import evalharness, features, sigsynth, zoo
from freqamc.errors import ConfigurationError, DomainError, ShapeError

from gradcheck import check_network


@pytest.mark.parametrize("arch", zoo.ARCHITECTURES)
def test_untrained_output_is_distribution(arch, rng):
    m = zoo.build_model(arch, frame_len=32, seed=0, width_divisor=4)
    p = zoo.predict(m, rng.standard_normal((5, 32, 2)))
    assert p.shape == (5, 4)
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)
    single = zoo.predict(m, rng.standard_normal((32, 2)))
    assert single.shape == (4,)


def test_cnn_shape_propagation():
    m = zoo.build_model("CNN", frame_len=128)
    dense = [l for l in m.network.layers if l.kind == "dense"][0]
    assert dense.in_shape == (64 * 1 * 122,) == (7808,)
    assert dense.units == 128


def test_reference_layer_stacks():
    kinds = lambda arch: [s["kind"] for s in zoo.architecture_specs(arch)]
    assert [s["units"] for s in zoo.architecture_specs("FCNN") if s["kind"] == "dense"] == [256, 128, 128, 4]
    assert kinds("FCNN").count("dropout") == 3
    cnn = zoo.architecture_specs("CNN")
    assert [(s["feature_maps"], s["kernel"]) for s in cnn if s["kind"] == "conv2d"] == [(256, [2, 5]), (64, [1, 3])]
    assert kinds("CNN").count("dropout") == 2
    assert [s["units"] for s in zoo.architecture_specs("RNN") if s["kind"] in ("lstm", "dense")] == [75, 128, 4]
    crnn = zoo.architecture_specs("CRNN")
    assert [s["feature_maps"] for s in crnn if s["kind"] == "conv2d"] == [128, 64]
    assert [s["units"] for s in crnn if s["kind"] == "lstm"] == [32]
    assert "dropout" not in kinds("CRNN")
    m = zoo.build_model("CRNN")
    lstm = [l for l in m.network.layers if l.kind == "lstm"][0]
    assert lstm.in_shape == (122, 64)


def test_same_seed_same_parameters():
    a = zoo.build_model("CNN", seed=5, width_divisor=8)
    b = zoo.build_model("CNN", seed=5, width_divisor=8)
    c = zoo.build_model("CNN", seed=6, width_divisor=8)
    assert a.to_bytes() == b.to_bytes()
    assert a.to_bytes() != c.to_bytes()


def test_unknown_architecture():
    with pytest.raises(ConfigurationError):
        zoo.build_model("transformer")


def test_classify_tie_break():
    assert zoo.classify([0.1, 0.2, 0.3, 0.4]) == 3
    assert zoo.classify([0.25] * 4) == 0


@pytest.mark.parametrize("arch", zoo.ARCHITECTURES)
@pytest.mark.parametrize("mode", ["eval", "train"])
def test_architecture_gradients(arch, mode):
    m = zoo.build_model(arch, frame_len=32, seed=4, width_divisor=8, dtype=np.float64)
    x = np.random.default_rng(4).standard_normal((3, 32, 2)) * 0.2
    errors, probed, skipped = check_network(m.network, x, [0, 1, 3], mode=mode, seed=5, max_entries=150)
    assert max(errors.values()) < 1e-3, errors
    assert skipped <= 0.01 * probed


def test_checkpoint_round_trip(tmp_path):
    m = zoo.build_model("CRNN", frame_len=32, seed=2, width_divisor=8)
    m.history.append({"epoch": 1, "train_acc": 0.5, "val_acc": 0.5, "train_loss": 1.0, "val_loss": 1.0})
    path = tmp_path / "m.ckpt"
    m.save(path)
    back = zoo.Model.load(path)
    assert back.to_bytes() == path.read_bytes()
    assert back.architecture == "CRNN" and back.epochs_trained == 1
    x = np.random.default_rng(0).standard_normal((2, 32, 2))
    assert np.array_equal(zoo.predict(m, x), zoo.predict(back, x))


def test_checkpoint_layout():
    import json
    import struct
    m = zoo.build_model("FCNN", frame_len=16, seed=0, width_divisor=16)
    data = m.to_bytes()
    (n,) = struct.unpack_from("<I", data)
    header = json.loads(data[4:4 + n])
    assert header["architecture"] == "FCNN" and header["domain"] == "time"
    body = np.frombuffer(data[4 + n:], dtype="<f4")
    first = m.network.get_param("1.W")
    assert np.array_equal(body[:first.size], first.ravel())
    assert body.size == m.network.num_parameters()


@pytest.fixture(scope="module")
def tiny_data():
    return sigsynth.synthesize_dataset(40, frame_len=32, seed=8)


def test_train_history_and_domain_checks(tiny_data):
    m = zoo.build_model("FCNN", frame_len=32, seed=1, width_divisor=4)
    cfg = zoo.TrainConfig(epochs=1, batch_size=16, seed=1)
    zoo.train(m, tiny_data, cfg)
    assert m.epochs_trained == 1
    assert set(m.history[0]) == set(zoo.HISTORY_FIELDS)
    assert m.split == {"seed": 8, "fractions": [0.7, 0.15, 0.15]}
    with pytest.raises(DomainError):
        zoo.train(m, features.transform_dataset(tiny_data), cfg)
    with pytest.raises(ConfigurationError):
        zoo.TrainConfig(epochs=0)
    with pytest.raises(ConfigurationError):
        zoo.TrainConfig(fractions=(0.5, 0.2, 0.2))
    with pytest.raises(ShapeError):
        zoo.predict(m, np.zeros((3, 16, 2)))


def test_training_is_deterministic(tiny_data):
    runs = []
    for _ in range(2):
        m = zoo.build_model("CNN", frame_len=32, seed=1, width_divisor=8)
        zoo.train(m, tiny_data, zoo.TrainConfig(epochs=2, batch_size=16, seed=3))
        runs.append(m.to_bytes())
    assert runs[0] == runs[1]


def test_training_learns():
    ds = sigsynth.synthesize_dataset(400, frame_len=64, seed=8)
    m = zoo.build_model("CNN", frame_len=64, seed=1, width_divisor=4)
    zoo.train(m, ds, zoo.TrainConfig(epochs=15, batch_size=32, seed=1))
    assert m.history[-1]["val_acc"] > 0.8
    assert m.history[-1]["train_loss"] < m.history[0]["train_loss"]


def test_permuted_labels_give_chance_accuracy():
    ds = sigsynth.synthesize_dataset(400, frame_len=32, seed=21)
    shuffled = ds.subset(np.arange(len(ds)))
    shuffled.labels = np.random.default_rng(0).permutation(ds.labels)
    m = zoo.build_model("FCNN", frame_len=32, seed=1, width_divisor=4)
    zoo.train(m, shuffled, zoo.TrainConfig(epochs=5, batch_size=64, seed=1))
    assert abs(m.history[-1]["val_acc"] - 0.25) <= 0.05


def test_history_csv(tmp_path, tiny_data):
    m = zoo.build_model("FCNN", frame_len=32, seed=1, width_divisor=4)
    zoo.train(m, tiny_data, zoo.TrainConfig(epochs=2, batch_size=16))
    path = tmp_path / "h.csv"
    zoo.write_history_csv(m, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_acc,val_acc,train_loss,val_loss"
    assert len(lines) == 3 and lines[2].startswith("2,")
