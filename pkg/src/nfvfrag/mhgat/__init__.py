from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .features import build_edge_features, build_node_features, dense_edge_features
from .model import ConfigError, MhgatModel, gat_backward, gat_forward
from .training import (Adam, DatasetRecord, TrainConfig, TrainingDiverged, backward_and_step,
                       read_dataset, train, write_dataset)

ABLATIONS = {
    "full": {},
    "no_gat": {"use_gat": False},
    "no_residual": {"use_residual": False},
    "no_multihop": {"use_multihop": False},
}
