"""Self-supervised graph-level representation learning toolkit.

Pipeline: encode graphs with a GIN stack (attribute and layer mixing
kernels), generate soft subgraph memberships with a learnable splitter,
aggregate them into a reconstructed-graph embedding, and train by
maximizing a contrastive mutual-information estimator over head/tail
negative pairs. Includes TUDataset IO, a reverse-mode autodiff core, and a
linear-evaluation harness.
"""

from .autodiff import AdamState, Parameter, ParameterStore, Tape, Tensor, adam_step, backward
from .data import (
    DatasetError,
    DatasetMeta,
    Graph,
    GraphBatch,
    degree_features,
    load_tudataset,
    make_batch,
    split_batch,
    synthetic_dataset,
    synthetic_regression,
    write_tudataset,
)
from .encoder import Encoder, EncoderConfig
from .evaluation import EvalConfig, evaluate_linear
from .model import GeneratorConfig, Model
from .objective import (
    LossReport,
    dv_loss,
    jsd_loss,
    permute_nodes,
    score,
    semi_supervised_loss,
    unsupervised_loss,
)
from .subgraphs import MultiHeadGenerator, SubgraphConv, TreeSplitGenerator
from .training import (
    RunRecord,
    TrainConfig,
    embed_dataset,
    load_checkpoint,
    save_checkpoint,
    train_semisupervised,
    train_unsupervised,
)

__version__ = "0.1.0"
