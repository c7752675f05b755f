"""Graph encoder: attribute fusion, GIN message passing, layer mixing, readout.

The encoder turns a batch into per-node embeddings (after mixing the outputs
of all message-passing layers with learnable scalar weights) and a per-graph
embedding via a permutation-invariant readout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, ParameterStore, ShapeMismatch, Tensor
from .data import GraphBatch


@dataclass
class EncoderConfig:
    num_layers: int = 4
    hidden_dim: int = 128
    readout: str = "sum"  # "sum" or "mean"

    def validate(self) -> None:
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.readout not in ("sum", "mean"):
            raise ValueError(f"unknown readout kind {self.readout!r}")


class Mlp:
    """Fully connected stack with ReLU between layers (none after the last)."""

    def __init__(self, store: ParameterStore, name: str, widths: list[int],
                 rng: np.random.Generator):
        if len(widths) < 2:
            raise ValueError("Mlp needs at least an input and an output width")
        self.name = name
        self.widths = list(widths)
        self.layers: list[tuple[Parameter, Parameter]] = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = store.new(f"{name}.{i}.weight", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            b = store.new(f"{name}.{i}.bias", rng.uniform(-bound, bound, size=(fan_out,)))
            self.layers.append((w, b))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.widths[0]:
            raise ShapeMismatch(
                f"{self.name}: input width {x.shape[-1]} != expected {self.widths[0]}"
            )
        for i, (w, b) in enumerate(self.layers):
            x = ad.add(ad.matmul(x, w.value), b.value)
            if i + 1 < len(self.layers):
                x = ad.relu(x)
        return x


class ScalarCombination:
    """Learnable scalar-weighted sum of same-shape tensors plus a scalar bias.

    Weights start at uniform averaging (1/count each, bias 0) so an untrained
    kernel reduces to the natural mean baseline.
    """

    def __init__(self, store: ParameterStore, name: str, count: int):
        if count < 1:
            raise ValueError(f"{name}: need at least one input view")
        self.name = name
        self.count = count
        self.weights = [store.new(f"{name}.weight.{i}", np.full((1,), 1.0 / count))
                        for i in range(count)]
        self.bias = store.new(f"{name}.bias", np.zeros((1,)))

    def __call__(self, views: list[Tensor]) -> Tensor:
        if len(views) != self.count:
            raise ShapeMismatch(f"{self.name}: expected {self.count} inputs, got {len(views)}")
        shape = views[0].shape
        for v in views[1:]:
            if v.shape != shape:
                raise ShapeMismatch(f"{self.name}: input shapes {shape} and {v.shape} differ")
        out = ad.mul(self.weights[0].value, views[0])
        for w, v in zip(self.weights[1:], views[1:]):
            out = ad.add(out, ad.mul(w.value, v))
        return ad.add(out, self.bias.value)

    def set_weights(self, weights, bias: float = 0.0) -> None:
        for p, w in zip(self.weights, weights):
            p.value.data[...] = w
        self.bias.value.data[...] = bias


class AttributeConv(ScalarCombination):
    """Squeezes the per-attribute-view embeddings into one node embedding."""


class LayerConv(ScalarCombination):
    """Mixes the per-layer node embeddings into one multi-scale embedding."""


class GinLayer:
    """Sum-aggregation message passing: mlp((1 + eps) * x + sum of neighbors)."""

    def __init__(self, store: ParameterStore, name: str, dim: int,
                 rng: np.random.Generator, epsilon: float = 0.0):
        self.mlp = Mlp(store, f"{name}.mlp", [dim, dim, dim], rng)
        self.epsilon = epsilon

    def __call__(self, x: Tensor, batch: GraphBatch) -> Tensor:
        if batch.edges.shape[0]:
            messages = ad.gather_rows(x, batch.edge_src)
            aggregated = ad.scatter_add_rows(messages, batch.edge_dst, batch.num_nodes)
            self_term = x if self.epsilon == 0.0 else ad.mul(1.0 + self.epsilon, x)
            pre = ad.add(self_term, aggregated)
        else:
            pre = x if self.epsilon == 0.0 else ad.mul(1.0 + self.epsilon, x)
        return self.mlp(pre)


def readout(node_embed: Tensor, batch: GraphBatch, kind: str = "sum") -> Tensor:
    """Per-graph reduction of node embeddings (segment sum, optionally mean)."""
    summed = ad.row_sum_segments(node_embed, batch.graph_id, batch.num_graphs)
    if kind == "sum":
        return summed
    if kind == "mean":
        recip = (1.0 / np.maximum(batch.node_counts, 1)).reshape(-1, 1)
        return ad.mul(summed, Tensor(recip))
    raise ValueError(f"unknown readout kind {kind!r}")


class Encoder:
    """The full node-embedding pipeline from raw attributes to (X_nodes, h)."""

    def __init__(self, store: ParameterStore, config: EncoderConfig, node_dim: int,
                 edge_dim: int | None, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.node_dim = node_dim
        self.edge_dim = edge_dim
        d = config.hidden_dim
        self.node_mlp = Mlp(store, "node_mlp", [node_dim, d, d], rng)
        if edge_dim is not None:
            self.edge_mlp = Mlp(store, "edge_mlp", [edge_dim, d, d], rng)
            self.attribute_conv = AttributeConv(store, "attribute_conv", 2)
        else:
            self.edge_mlp = None
            self.attribute_conv = None
        self.gin_layers = [
            GinLayer(store, f"gin.{k}", d, rng) for k in range(config.num_layers)
        ]
        self.layer_conv = LayerConv(store, "layer_conv", config.num_layers)

    def embed_attributes(self, batch: GraphBatch) -> list[Tensor]:
        """Node-view embedding, plus the edge view averaged onto incident nodes."""
        if batch.node_attrs is None:
            raise ShapeMismatch("batch has no node attributes; add degree features first")
        views = [self.node_mlp(Tensor(batch.node_attrs))]
        if self.edge_mlp is not None:
            if batch.edge_attrs is None:
                raise ShapeMismatch("encoder expects edge attributes but batch has none")
            if batch.edges.shape[0]:
                per_edge = self.edge_mlp(Tensor(batch.edge_attrs))
                summed = ad.scatter_add_rows(per_edge, batch.edge_dst, batch.num_nodes)
                counts = np.zeros(batch.num_nodes)
                np.add.at(counts, batch.edge_dst, 1.0)
                recip = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0).reshape(-1, 1)
                views.append(ad.mul(summed, Tensor(recip)))
            else:
                views.append(Tensor(np.zeros((batch.num_nodes, self.config.hidden_dim))))
        return views

    def initial_features(self, batch: GraphBatch) -> Tensor:
        views = self.embed_attributes(batch)
        if self.attribute_conv is not None:
            return self.attribute_conv(views)
        return views[0]

    def propagate(self, x0: Tensor, batch: GraphBatch) -> tuple[Tensor, Tensor]:
        """Run the GIN stack from initial features; mix layers and read out."""
        layer_outputs = []
        x = x0
        for layer in self.gin_layers:
            x = layer(x, batch)
            layer_outputs.append(x)
        node_embed = self.layer_conv(layer_outputs)
        graph_embed = readout(node_embed, batch, self.config.readout)
        return node_embed, graph_embed

    def encode(self, batch: GraphBatch) -> tuple[Tensor, Tensor, Tensor]:
        """Full pipeline; returns (initial features, node embeddings, h per graph)."""
        x0 = self.initial_features(batch)
        node_embed, graph_embed = self.propagate(x0, batch)
        return x0, node_embed, graph_embed
