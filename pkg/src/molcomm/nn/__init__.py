from .layers import BLSTM, LSTM, Conv1D, Dense, Flatten, MaxPool1D, SoftmaxOutput
from .network import Network, backward
from .ops import (blstm_layer_forward, conv1d_forward, cross_entropy, dense_forward,
                  lstm_layer_forward, lstm_step, maxpool1d, one_hot, softmax)
from .optim import Adam, AdamState, adam_step
from .training import DivergenceError, fit_network

__all__ = [
    "BLSTM", "LSTM", "Conv1D", "Dense", "Flatten", "MaxPool1D", "SoftmaxOutput", "Network",
    "backward", "blstm_layer_forward", "conv1d_forward", "cross_entropy", "dense_forward",
    "lstm_layer_forward", "lstm_step", "maxpool1d", "one_hot", "softmax", "Adam", "AdamState",
    "adam_step", "DivergenceError", "fit_network",
]
