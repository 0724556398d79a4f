from .layers import (
    LSTM,
    Conv1D,
    ConvLSTM,
    Dense,
    Flatten,
    KernelTooLong,
    Layer,
    NoForwardState,
    ReLU,
    Reshape,
    Sequential,
    ShapeMismatch,
    conv1d_forward,
    convlstm_cell,
    dense_forward,
    lstm_cell,
    sigmoid,
)
from .optim import AdamState, adam_step, mse_loss
from .gradcheck import check_gradients, numerical_gradient, relative_error
