from .layers import (Conv2D, Dense, Dropout, Flatten, LastStep, LSTM, ReLU, Softmax, ToImage,
                     ToSequence, dropout_mask, layer_from_spec, sigmoid, softmax)
from .network import BackpropResult, Network, backprop, cross_entropy_loss, one_hot
from .optim import AdamState, adam_step

__all__ = [
    "AdamState", "BackpropResult", "Conv2D", "Dense", "Dropout", "Flatten", "LSTM", "LastStep",
    "Network", "ReLU", "Softmax", "ToImage", "ToSequence", "adam_step", "backprop",
    "cross_entropy_loss", "dropout_mask", "layer_from_spec", "one_hot", "sigmoid", "softmax",
]
