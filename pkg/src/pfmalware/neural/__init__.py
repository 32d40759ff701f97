"""1D-Conv-BiLSTM classifier."""
from .estimator import CrnnClassifier
from .gradcheck import GradCheckReport, grad_check
from .io import load_model, save_model
from .network import CrnnModel, ModelConfig, forward, init_model, loss_and_grads, sgd_step
from .training import (
    TrainConfig,
    TrainHistory,
    incremental_train,
    predict_topk,
    train,
    widen_model,
)

__all__ = [
    "CrnnClassifier", "CrnnModel", "GradCheckReport", "ModelConfig", "TrainConfig", "TrainHistory",
    "forward", "grad_check", "incremental_train", "init_model", "load_model", "loss_and_grads",
    "predict_topk", "save_model", "sgd_step", "train", "widen_model",
]
