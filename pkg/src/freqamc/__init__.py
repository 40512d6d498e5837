"""Adversarial transferability benchmark for time- and frequency-domain modulation classifiers."""

__version__ = "0.1.0"

from .errors import AmcError
from .sigsynth import CLASS_NAMES, ChannelConfig, LabeledDataset, synthesize_dataset

__all__ = ["AmcError", "CLASS_NAMES", "ChannelConfig", "LabeledDataset", "synthesize_dataset",
           "__version__"]
