from .network import (
    CLASSIFICATION,
    REGRESSION,
    Cache,
    Network,
    backward,
    forward,
    grad_classification,
    grad_regression,
    init_network,
    loss_classification,
    loss_regression,
    softmax,
)
from .preprocess import Preprocessor, fit_preprocessor, maxpool
from .training import (
    History,
    Model,
    ModelFormatError,
    TrainConfig,
    TrainSet,
    fit_model,
    load_model,
    predict_config,
    save_model,
    split_indices,
    train,
    write_history,
)
