"""Small float64 neural-network kernel with hand-written backward passes."""
from .core import Param, check_finite
from .gradcheck import LossGraph, gradient_check, numeric_gradient, randomize_biases
from .layers import Conv2d, Dense, GlobalAvgPool, ReLU, ResidualBlock, Sequential, conv2d, conv2d_backward
from .losses import softmax, softmax_cross_entropy
from .lstm import LSTM, LSTMParams, lstm_step, lstm_step_backward, sigmoid
from .optim import adam_update

__all__ = [
    "Param", "check_finite", "LossGraph", "gradient_check", "numeric_gradient", "randomize_biases",
    "Conv2d", "Dense", "GlobalAvgPool", "ReLU", "ResidualBlock", "Sequential",
    "conv2d", "conv2d_backward", "softmax", "softmax_cross_entropy",
    "LSTM", "LSTMParams", "lstm_step", "lstm_step_backward", "sigmoid", "adam_update",
]
