"""Splits, clean/attacked evaluation and transferability sweeps."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .attacks import AttackConfig, perturb_dataset
from .errors import ConfigurationError, DomainError, ProtocolError, SplitError
from .features import dft
from .sigsynth import LabeledDataset
from .zoo import Model, classify, predict

REPORT_SCHEMA_VERSION = 1
SWEEP_FIELDS = ("method", "surrogate", "target", "domain", "budget_or_alpha", "accuracy")


@dataclass
class SplitIndex:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    fractions: tuple
    seed: int

    def signature(self) -> dict:
        return {"seed": int(self.seed), "fractions": [float(f) for f in self.fractions]}


def split(ds, fractions=(0.70, 0.15, 0.15), seed: int = 0) -> SplitIndex:
    """Stratified, seeded train/val/test partition of a dataset (or label array)."""
    labels = np.asarray(ds.labels if isinstance(ds, LabeledDataset) else ds, dtype=np.int64)
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise SplitError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n = idx.size
        if n < 3:
            raise SplitError(f"class {c} has {n} samples; at least 3 are needed")
        idx = rng.permutation(idx)
        n_val = max(1, int(round(fractions[1] * n)))
        n_test = max(1, int(round(fractions[2] * n)))
        while n - n_val - n_test < 1:
            if n_val >= n_test:
                n_val -= 1
            else:
                n_test -= 1
        n_train = n - n_val - n_test
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train:n_train + n_val])
        parts[2].append(idx[n_train + n_val:])
    train, val, test = (np.sort(np.concatenate(p)) if p else np.empty(0, np.int64) for p in parts)
    return SplitIndex(train, val, test, fractions, int(seed))


def confusion_matrix(truth, predicted, num_classes: int) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    return np.bincount(truth * num_classes + predicted,
                       minlength=num_classes * num_classes).reshape(num_classes, num_classes)


@dataclass
class EvalReport:
    """Accuracy and confusion (rows truth, columns prediction) plus sweep rows."""

    accuracy: Optional[float] = None
    confusion: Optional[np.ndarray] = None
    curve: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, truth, predicted, num_classes: int, metadata=None) -> "EvalReport":
        cm = confusion_matrix(truth, predicted, num_classes)
        total = cm.sum()
        acc = float(np.trace(cm) / total) if total else 0.0
        return cls(acc, cm, [], dict(metadata or {}))

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "accuracy": self.accuracy,
            "confusion": None if self.confusion is None else self.confusion.tolist(),
            "curve": self.curve,
            "metadata": self.metadata,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_confusion_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["truth_label", "predicted_label", "count"])
            for t in range(self.confusion.shape[0]):
                for p in range(self.confusion.shape[1]):
                    w.writerow([t, p, int(self.confusion[t, p])])

    def write_sweep_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, lineterminator="\n")
            w.writeheader()
            for row in self.curve:
                w.writerow({k: row[k] for k in SWEEP_FIELDS})


def _frames_for(model: Model, ds: LabeledDataset) -> np.ndarray:
    """Frames of a time-domain dataset in the model's input domain."""
    if model.domain == ds.domain:
        return ds.frames
    if model.domain == "freq" and ds.domain == "time":
        return dft(ds.frames)
    raise DomainError(f"{model.name} model cannot consume {ds.domain}-domain data")


def evaluate(model: Model, ds: LabeledDataset, metadata=None) -> EvalReport:
    if model.domain != ds.domain:
        raise DomainError(f"{model.name} model cannot consume {ds.domain}-domain data")
    preds = classify(predict(model, ds.frames)) if len(ds) else np.empty(0, np.int64)
    meta = {"model": model.name, "frames": len(ds)}
    if ds.attack is not None:
        meta["attack"] = ds.attack
    meta.update(metadata or {})
    return EvalReport.from_predictions(ds.labels, preds, model.num_classes, meta)


@dataclass
class TransferResult:
    surrogate: EvalReport
    targets: list
    zero_gradient_frames: int

    @property
    def target(self) -> EvalReport:
        return self.targets[0]

    @property
    def gap(self) -> float:
        """Target accuracy minus surrogate accuracy (first target)."""
        return self.target.accuracy - self.surrogate.accuracy


def _check_partitions(models: Sequence[Model]):
    sigs = {json.dumps(m.split, sort_keys=True) for m in models if m.split is not None}
    if len(sigs) > 1:
        raise ProtocolError("surrogate and target models were trained on different split partitions")


def transfer_experiment(surrogate: Model, target, test: LabeledDataset,
                        cfg: AttackConfig) -> TransferResult:
    """Attack ``surrogate`` on the time-domain test frames and score every target.

    Frequency-domain targets see the DFT of the very same perturbed frames.
    """
    targets = [target] if isinstance(target, Model) else list(target)
    if test.domain != "time":
        raise DomainError("transfer experiments start from a time-domain test set")
    _check_partitions([surrogate, *targets])
    adv = perturb_dataset(surrogate, test, cfg)
    meta = {"attack": adv.attack, "surrogate": surrogate.name}
    sur_report = evaluate(surrogate, adv, meta)
    reports = []
    for g in targets:
        frames = _frames_for(g, adv)
        preds = classify(predict(g, frames)) if len(adv) else np.empty(0, np.int64)
        reports.append(EvalReport.from_predictions(
            adv.labels, preds, g.num_classes, {**meta, "model": g.name, "frames": len(adv)}))
    return TransferResult(sur_report, reports, adv.attack["zero_gradient_frames"])


def budget_sweep(surrogate: Model, targets, test: LabeledDataset, grid,
                 cfg: AttackConfig) -> EvalReport:
    """One transfer experiment per grid point.

    For FGSM the grid holds power budgets; for BIM it holds step sizes alpha
    with ``cfg.power_budget`` and ``cfg.iterations`` fixed.
    """
    targets = [targets] if isinstance(targets, Model) else list(targets)
    grid = [float(g) for g in grid]
    if not grid:
        raise ConfigurationError("sweep grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigurationError("sweep grid must be strictly ascending")
    rows = []
    zero_frames = 0
    for value in grid:
        point = replace(cfg, power_budget=value) if cfg.method == "FGSM" else replace(cfg, alpha=value)
        res = transfer_experiment(surrogate, targets, test, point)
        zero_frames += res.zero_gradient_frames
        rows.append({"method": cfg.method, "surrogate": surrogate.name, "target": surrogate.name,
                     "domain": surrogate.domain, "budget_or_alpha": value,
                     "accuracy": res.surrogate.accuracy})
        for g, rep in zip(targets, res.targets):
            rows.append({"method": cfg.method, "surrogate": surrogate.name, "target": g.name,
                         "domain": g.domain, "budget_or_alpha": value, "accuracy": rep.accuracy})
    meta = {
        "surrogate": surrogate.name,
        "targets": [g.name for g in targets],
        "attack": cfg.record(),
        "grid": grid,
        "frames": len(test),
        "zero_gradient_frames": zero_frames,
    }
    return EvalReport(None, None, rows, meta)


def curve(report: EvalReport, target: str, domain: Optional[str] = None) -> list:
    """(budget_or_alpha, accuracy) pairs for one model in a sweep report."""
    return [(r["budget_or_alpha"], r["accuracy"]) for r in report.curve
            if r["target"] == target and (domain is None or r["domain"] == domain)]


def mean_gap(report: EvalReport, target: str) -> float:
    """Mean over the grid of target accuracy minus surrogate accuracy."""
    sur = dict(curve(report, report.metadata["surrogate"]))
    tgt = dict(curve(report, target))
    return float(np.mean([tgt[k] - sur[k] for k in sur]))
