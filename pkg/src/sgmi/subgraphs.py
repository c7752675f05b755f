"""Learnable subgraph generation and aggregation into a reconstructed graph.

Both generators start from the mixed node embeddings: a split operator maps
each node to a two-way membership distribution, and a generator composes
split operators into S soft membership masks. Masked readouts of the node
embeddings give per-subgraph embeddings, which a scalar kernel combines into
the reconstructed-graph embedding.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .data import GraphBatch
from .encoder import ScalarCombination

_LEFT_COLUMN = np.array([[1.0], [0.0]])
_RIGHT_COLUMN = np.array([[0.0], [1.0]])


class SplitOperator:
    """Maps node embeddings to a row-stochastic two-way membership matrix."""

    def __init__(self, store: ParameterStore, name: str, dim: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(dim)
        self.weight = store.new(f"{name}.weight", rng.uniform(-bound, bound, size=(dim, 2)))

    def probabilities(self, node_embed: Tensor) -> Tensor:
        return ad.softmax_rows(ad.matmul(node_embed, self.weight.value))


class TreeSplitGenerator:
    """Recursive binary soft partition: depth T yields 2^T membership masks.

    Each internal tree node owns its own split operator (consumed in
    breadth-first order); a leaf mask is the product of the chosen membership
    column along its root-to-leaf path, so the masks sum to one per node.
    """

    kind = "tree"

    def __init__(self, store: ParameterStore, dim: int, depth: int, rng: np.random.Generator):
        if depth < 1:
            raise ValueError("tree depth must be >= 1")
        self.depth = depth
        self.num_subgraphs = 2 ** depth
        self.operators = [
            SplitOperator(store, f"generator.split.{i}", dim, rng)
            for i in range(2 ** depth - 1)
        ]

    def masks(self, node_embed: Tensor) -> list[Tensor]:
        num_nodes = node_embed.shape[0]
        masks = [Tensor(np.ones((num_nodes, 1)))]
        ops = iter(self.operators)
        for _ in range(self.depth):
            split = []
            for mask in masks:
                probs = next(ops).probabilities(node_embed)
                left = ad.matmul(probs, Tensor(_LEFT_COLUMN))
                right = ad.matmul(probs, Tensor(_RIGHT_COLUMN))
                split.append(ad.mul(mask, left))
                split.append(ad.mul(mask, right))
            masks = split
        return masks


class MultiHeadGenerator:
    """S independent split operators; head i's mask is column one of its probs."""

    kind = "multihead"

    def __init__(self, store: ParameterStore, dim: int, heads: int, rng: np.random.Generator):
        if heads < 1:
            raise ValueError("need at least one head")
        self.num_subgraphs = heads
        self.operators = [
            SplitOperator(store, f"generator.head.{i}", dim, rng) for i in range(heads)
        ]

    def masks(self, node_embed: Tensor) -> list[Tensor]:
        return [
            ad.matmul(op.probabilities(node_embed), Tensor(_LEFT_COLUMN))
            for op in self.operators
        ]


def hard_masks(soft_masks: list[Tensor]) -> np.ndarray:
    """Thresholded membership (weight >= 1/2), stacked (S, num_nodes)."""
    return np.stack([m.data.reshape(-1) >= 0.5 for m in soft_masks], axis=0)


def subgraph_readout(node_embed: Tensor, mask: Tensor, batch: GraphBatch) -> Tensor:
    """Membership-weighted segment sum: one embedding per graph per subgraph."""
    weighted = ad.mul(mask, node_embed)
    return ad.row_sum_segments(weighted, batch.graph_id, batch.num_graphs)


class SubgraphConv(ScalarCombination):
    """Mixes the S subgraph embeddings into the reconstructed-graph embedding."""


def reconstruct(node_embed: Tensor, batch: GraphBatch, generator,
                conv: SubgraphConv) -> tuple[Tensor, list[Tensor]]:
    """Generate masks, read out each subgraph, and mix; returns (h_rec, masks)."""
    masks = generator.masks(node_embed)
    per_subgraph = [subgraph_readout(node_embed, m, batch) for m in masks]
    return conv(per_subgraph), masks
