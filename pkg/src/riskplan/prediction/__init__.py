from .backprop import (
    check_gradients,
    loss_and_gradients,
    loss_forward,
    random_check_point,
    random_scene,
)
from .baseline import constant_velocity_predict
from .network import (
    DimensionError,
    NetConfig,
    NetworkParams,
    attention_fuse,
    attention_weights,
    encode_history,
    fuse,
    load_params,
    predict,
    save_params,
    scene_from_histories,
    social_pool,
)
from .training import (
    TrainConfig,
    TrainingDivergence,
    dataset_from_scenarios,
    nll_loss,
    train,
)
from .types import PredictedDistribution, TrackHistory

__all__ = [
    "DimensionError",
    "NetConfig",
    "NetworkParams",
    "PredictedDistribution",
    "TrackHistory",
    "TrainConfig",
    "TrainingDivergence",
    "attention_fuse",
    "attention_weights",
    "check_gradients",
    "constant_velocity_predict",
    "encode_history",
    "fuse",
    "load_params",
    "loss_and_gradients",
    "loss_forward",
    "nll_loss",
    "predict",
    "random_check_point",
    "random_scene",
    "save_params",
    "scene_from_histories",
    "social_pool",
    "train",
]
