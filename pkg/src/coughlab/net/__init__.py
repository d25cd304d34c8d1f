"""BiLSTM sequence classifier, trained with backpropagation through time."""
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .lstm import bilstm_layer, lstm_cell_step, sigmoid
from .model import backward, forward, loss, normalized, predict_batch
from .params import LstmCellParams, NetworkConfig, NetworkParams, init_params
from .train import GridSearchSpec, History, TrainConfig, grid_search, train

__all__ = [
    "Checkpoint", "GridSearchSpec", "History", "LstmCellParams", "NetworkConfig", "NetworkParams",
    "TrainConfig", "backward", "bilstm_layer", "forward", "grid_search", "init_params", "load_checkpoint",
    "loss", "lstm_cell_step", "normalized", "predict_batch", "save_checkpoint", "sigmoid", "train",
]
