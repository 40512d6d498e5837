"""The four classifier architectures and their training loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DomainError, InputError, ShapeError
from .sigsynth import CLASS_NAMES, DOMAINS, LabeledDataset
from .tensorcore import AdamState, Network, adam_step, checkpoint
from .tensorcore.network import cross_entropy_loss, one_hot

log = logging.getLogger(__name__)

ARCHITECTURES = ("FCNN", "CNN", "RNN", "CRNN")
HISTORY_FIELDS = ("epoch", "train_acc", "val_acc", "train_loss", "val_loss")


def _w(n: int, divisor: int) -> int:
    return max(1, n // divisor)


def architecture_specs(arch: str, num_classes: int = 4, width_divisor: int = 1) -> list[dict]:
    """Layer stack for one architecture. ``width_divisor`` shrinks every hidden width."""
    arch = arch.upper()
    d = width_divisor
    if arch == "FCNN":
        hidden = []
        for units in (256, 128, 128):
            hidden += [{"kind": "dense", "units": _w(units, d)}, {"kind": "relu"},
                       {"kind": "dropout", "rate": 0.2}]
        return [{"kind": "flatten"}, *hidden,
                {"kind": "dense", "units": num_classes}, {"kind": "softmax"}]
    if arch == "CNN":
        return [
            {"kind": "to_image"},
            {"kind": "conv2d", "feature_maps": _w(256, d), "kernel": [2, 5]}, {"kind": "relu"},
            {"kind": "dropout", "rate": 0.2},
            {"kind": "conv2d", "feature_maps": _w(64, d), "kernel": [1, 3]}, {"kind": "relu"},
            {"kind": "dropout", "rate": 0.2},
            {"kind": "flatten"},
            {"kind": "dense", "units": _w(128, d)}, {"kind": "relu"},
            {"kind": "dense", "units": num_classes}, {"kind": "softmax"},
        ]
    if arch == "RNN":
        return [
            {"kind": "lstm", "units": _w(75, d)}, {"kind": "last_step"},
            {"kind": "dense", "units": _w(128, d)}, {"kind": "relu"},
            {"kind": "dense", "units": num_classes}, {"kind": "softmax"},
        ]
    if arch == "CRNN":
        return [
            {"kind": "to_image"},
            {"kind": "conv2d", "feature_maps": _w(128, d), "kernel": [2, 5]}, {"kind": "relu"},
            {"kind": "conv2d", "feature_maps": _w(64, d), "kernel": [1, 3]}, {"kind": "relu"},
            {"kind": "to_sequence"},
            {"kind": "lstm", "units": _w(32, d)}, {"kind": "last_step"},
            {"kind": "dense", "units": num_classes}, {"kind": "softmax"},
        ]
    raise ConfigurationError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


@dataclass
class Model:
    architecture: str
    domain: str
    network: Network
    frame_len: int = 128
    num_classes: int = 4
    seed: int = 0
    class_names: list = field(default_factory=lambda: list(CLASS_NAMES))
    history: list = field(default_factory=list)
    split: Optional[dict] = None

    @property
    def epochs_trained(self) -> int:
        return len(self.history)

    @property
    def name(self) -> str:
        return f"{self.architecture}-{self.domain}"

    def header(self) -> dict:
        return {
            "architecture": self.architecture,
            "domain": self.domain,
            "frame_len": self.frame_len,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "class_names": list(self.class_names),
            "epochs_trained": self.epochs_trained,
            "history": self.history,
            "split": self.split,
        }

    def to_bytes(self) -> bytes:
        return checkpoint.dumps(self.header(), self.network)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Model":
        h, net = checkpoint.loads(data)
        return cls(h["architecture"], h["domain"], net, h["frame_len"], h["num_classes"],
                   h["seed"], h["class_names"], h["history"], h["split"])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_bytes(Path(path).read_bytes())


def build_model(arch: str, domain: str = "time", frame_len: int = 128, num_classes: int = 4,
                seed: int = 0, width_divisor: int = 1, dtype=np.float32,
                class_names=None) -> Model:
    arch = arch.upper()
    if domain not in DOMAINS:
        raise ConfigurationError(f"unknown domain {domain!r}")
    specs = architecture_specs(arch, num_classes, width_divisor)
    net = Network(specs, (frame_len, 2), rng=np.random.default_rng([seed, 0]), dtype=dtype)
    names = list(class_names) if class_names is not None else list(CLASS_NAMES[:num_classes])
    return Model(arch, domain, net, frame_len, num_classes, seed, names)


@dataclass
class TrainConfig:
    epochs: int = 75
    batch_size: int = 64
    fractions: tuple = (0.70, 0.15, 0.15)
    seed: int = 0
    learning_rate: float = 1e-3
    split_seed: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must sum to 1, got {self.fractions}")


def _check_domain(model: Model, domain: str):
    if domain != model.domain:
        raise DomainError(f"{model.name} model cannot consume {domain}-domain data")


def predict(model: Model, frames, batch_size: int = 512) -> np.ndarray:
    """Eval-mode likelihood vectors for a frame or batch of frames."""
    if isinstance(frames, LabeledDataset):
        _check_domain(model, frames.domain)
        frames = frames.frames
    frames = np.asarray(frames)
    if frames.shape[-2:] != (model.frame_len, 2):
        raise ShapeError(f"{model.name} expects ({model.frame_len}, 2) frames, got {frames.shape}")
    single = frames.ndim == 2
    probs = model.network.forward(frames[None] if single else frames, batch_size=batch_size)
    return probs[0] if single else probs


def classify(probs) -> np.ndarray:
    """Argmax over the class axis; ties go to the lowest index."""
    return np.argmax(np.asarray(probs), axis=-1)


def _evaluate_split(model: Model, frames, labels) -> tuple[float, float]:
    probs = predict(model, frames)
    acc = float(np.mean(classify(probs) == labels))
    return acc, cross_entropy_loss(probs, one_hot(labels, model.num_classes))


def train(model: Model, dataset: LabeledDataset, cfg: TrainConfig, split=None,
          on_epoch: Optional[Callable[[dict], None]] = None) -> Model:
    """Mini-batch Adam training for a fixed number of epochs (no early stopping).

    ``split`` is a SplitIndex; when omitted it is derived from ``cfg.fractions``
    and ``cfg.split_seed`` (falling back to the dataset seed).
    """
    from .evalharness import split as make_split

    _check_domain(model, dataset.domain)
    if dataset.frame_len != model.frame_len:
        raise ShapeError(f"dataset frame length {dataset.frame_len} != model {model.frame_len}")
    if split is None:
        seed = dataset.seed if cfg.split_seed is None else cfg.split_seed
        split = make_split(dataset, cfg.fractions, seed)
    train_idx = np.asarray(split.train, dtype=np.int64)
    val_idx = np.asarray(split.val, dtype=np.int64)
    if train_idx.size == 0 or val_idx.size == 0:
        raise InputError("training and validation splits must be nonempty")

    net = model.network
    params = dict(net.parameters())
    state = AdamState(learning_rate=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 1])
    x_val, y_val = dataset.frames[val_idx], dataset.labels[val_idx]
    start = model.epochs_trained
    for epoch in range(start + 1, start + cfg.epochs + 1):
        order = rng.permutation(train_idx)
        correct = 0
        loss_sum = 0.0
        for i in range(0, order.size, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            y = dataset.labels[idx]
            res = net.backprop(dataset.frames[idx], y, mode="train", rng=rng, input_grad=False)
            adam_step(params, res.grads, state)
            correct += int(np.sum(classify(res.probs) == y))
            loss_sum += res.loss * idx.size
        val_acc, val_loss = _evaluate_split(model, x_val, y_val)
        row = {
            "epoch": epoch,
            "train_acc": correct / order.size,
            "val_acc": val_acc,
            "train_loss": loss_sum / order.size,
            "val_loss": val_loss,
        }
        model.history.append(row)
        log.info("%s epoch %d: train_acc=%.4f val_acc=%.4f", model.name, epoch,
                 row["train_acc"], val_acc)
        if on_epoch is not None:
            on_epoch(row)
    model.split = {"seed": int(split.seed), "fractions": [float(f) for f in split.fractions]}
    return model


def write_history_csv(model: Model, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in model.history:
            writer.writerow({k: row[k] for k in HISTORY_FIELDS})
