"""Token-swapping graph transformer for node classification.

The pipeline: build attribute- and topology-view k-NN token tables, grow
extra token sequences by token swapping over those tables, encode each
sequence with a small transformer, and train on cross-entropy plus a
center-alignment loss. Everything runs on numpy through the autodiff layer
in :mod:`swapgt.engine`.

    >>> import swapgt as sg
    >>> g = sg.generate_sbm(sg.SbmSpec((50,) * 4, 0.1, 0.01, 8, 2.0), seed=0)
    >>> cfg = sg.TrainConfig(split="sparse", hidden_dim=32, ffn_dim=64, heads=4, runs=1)
    >>> result = sg.run_experiment(cfg, g)  # doctest: +SKIP
"""

from .config import ConfigError, TrainConfig
from .engine import ParamStore, Tensor, grad_check, grad_errors
from .graph import (
    Graph,
    SbmSpec,
    SplitAssignment,
    edge_homophily,
    generate_sbm,
    load_graph,
    make_split,
    normalized_adjacency,
    write_graph,
)
from .model import (
    LossBreakdown,
    ViewRepresentations,
    center_alignment,
    cross_entropy,
    encode_view,
    forward_full,
    fuse,
    init_params,
    predict,
    readout,
    total_loss,
)
from .propagation import PropagationConfig, ppr_propagate
from .tokenizer import (
    SequenceBatch,
    SwapConfig,
    TokenTable,
    build_sequences,
    build_token_tables,
    cosine_topk,
    hop_bound_oracle,
    swap_tokens,
)
from .trainer import RunResult, apply_variant, evaluate, run_experiment, train_logistic, train_one, tune

__version__ = "0.1.0"
