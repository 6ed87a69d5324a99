from .features import FixedStateStore, StateStore, node_state
from .ops import (
    MgData,
    WindowData,
    build_representation_matrix,
    chgae_aggregate,
    chgae_encode,
    chgae_neighbor_weight,
    chgae_neighbor_weights,
    dwiue_encode,
    encode_window,
    fuse_graph_embedding,
    metagraph_attention,
    pool_rows,
    select_encoder,
    select_members,
    softmax,
)
from .backprop import backward_window
from .params import (
    ModelHyperparams,
    ModelParams,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "FixedStateStore",
    "StateStore",
    "node_state",
    "MgData",
    "WindowData",
    "build_representation_matrix",
    "chgae_aggregate",
    "chgae_encode",
    "chgae_neighbor_weight",
    "chgae_neighbor_weights",
    "dwiue_encode",
    "encode_window",
    "fuse_graph_embedding",
    "metagraph_attention",
    "pool_rows",
    "select_encoder",
    "select_members",
    "softmax",
    "backward_window",
    "ModelHyperparams",
    "ModelParams",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
]
