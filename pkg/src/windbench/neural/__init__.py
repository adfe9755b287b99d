from .layers import Conv1d, Dense, Flatten, MaxPool1d, Reshape, sigmoid
from .lstm import LSTM, LSTMCell, lstm_step
from .models import NeuralRegressor
from .stack import (Adam, EpochTrace, GradCheckResult, LayerStack, SGD, TrainConfig, build_cnn1d,
                    build_lstm, build_mlp, gradient_check, load_stack, mse_loss, save_stack, train)
