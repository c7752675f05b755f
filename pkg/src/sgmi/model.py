"""Model assembly: encoder + subgraph generator + kernels (+ prediction head).

A model owns one ParameterStore so training, checkpointing, and evaluation
all see the same named tensors. Checkpoints append a few `meta.*` scalar
records describing the architecture, which makes a saved file sufficient to
rebuild the model without its original config.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ParameterStore
from .checkpoint import CheckpointError, load_arrays, save_arrays
from .data import Graph, GraphBatch, make_batch
from .encoder import Encoder, EncoderConfig, Mlp
from .subgraphs import MultiHeadGenerator, SubgraphConv, TreeSplitGenerator

_READOUT_CODES = {"sum": 0, "mean": 1}
_GENERATOR_CODES = {"tree": 0, "multihead": 1}


class GeneratorConfig:
    """Which subgraph generator to build and how many subgraphs it yields."""

    def __init__(self, kind: str = "tree", depth: int = 2, heads: int = 4):
        if kind not in _GENERATOR_CODES:
            raise ValueError(f"unknown generator kind {kind!r}")
        if depth < 1 or heads < 1:
            raise ValueError("generator depth and heads must be >= 1")
        self.kind = kind
        self.depth = depth
        self.heads = heads

    @property
    def num_subgraphs(self) -> int:
        return 2 ** self.depth if self.kind == "tree" else self.heads


class Model:
    """Encoder, generator, subgraph kernel, and optional prediction head."""

    def __init__(self, store: ParameterStore, encoder: Encoder, generator,
                 subgraph_conv: SubgraphConv, classifier: Mlp | None = None,
                 task: str | None = None, max_degree: int | None = None):
        self.store = store
        self.encoder = encoder
        self.generator = generator
        self.subgraph_conv = subgraph_conv
        self.classifier = classifier
        self.task = task  # "classification", "regression", or None
        self.max_degree = max_degree  # degree-feature width used at train time
        self.num_classes = (
            classifier.widths[-1] if classifier is not None and task == "classification" else None
        )

    @staticmethod
    def build(node_dim: int, edge_dim: int | None, encoder_config: EncoderConfig,
              generator_config: GeneratorConfig, rng: np.random.Generator,
              num_classes: int | None = None, task: str | None = None,
              max_degree: int | None = None) -> "Model":
        store = ParameterStore()
        encoder = Encoder(store, encoder_config, node_dim, edge_dim, rng)
        d = encoder_config.hidden_dim
        if generator_config.kind == "tree":
            generator = TreeSplitGenerator(store, d, generator_config.depth, rng)
        else:
            generator = MultiHeadGenerator(store, d, generator_config.heads, rng)
        subgraph_conv = SubgraphConv(store, "subgraph_conv", generator.num_subgraphs)
        classifier = None
        if task == "classification":
            if not num_classes or num_classes < 2:
                raise ValueError("classification head needs num_classes >= 2")
            classifier = Mlp(store, "classifier", [d, d, num_classes], rng)
        elif task == "regression":
            classifier = Mlp(store, "classifier", [d, d, 1], rng)
        elif task is not None:
            raise ValueError(f"unknown task {task!r}")
        return Model(store, encoder, generator, subgraph_conv, classifier, task, max_degree)

    # -- inference ---------------------------------------------------------

    def embed_batch(self, batch: GraphBatch) -> np.ndarray:
        """Per-graph embeddings h(G), computed without gradient recording."""
        _, _, h = self.encoder.encode(batch)
        return h.data.copy()

    def embed(self, graphs: list[Graph], chunk: int = 256) -> np.ndarray:
        rows = []
        for start in range(0, len(graphs), chunk):
            rows.append(self.embed_batch(make_batch(graphs[start:start + chunk])))
        return np.concatenate(rows, axis=0)

    def predict(self, graphs: list[Graph], chunk: int = 256) -> np.ndarray:
        """Class ids (classification) or flat targets (regression)."""
        if self.classifier is None:
            raise ValueError("model has no prediction head")
        outputs = []
        for start in range(0, len(graphs), chunk):
            batch = make_batch(graphs[start:start + chunk])
            _, _, h = self.encoder.encode(batch)
            out = self.classifier(h).data
            outputs.append(out.argmax(axis=1) if self.task == "classification" else out[:, 0])
        return np.concatenate(outputs)

    # -- persistence -------------------------------------------------------

    def _meta(self) -> dict[str, float]:
        cfg = self.encoder.config
        gen = self.generator
        head_code = 0.0
        if self.task == "classification":
            head_code = float(self.num_classes)
        elif self.task == "regression":
            head_code = -1.0
        return {
            "meta.node_dim": float(self.encoder.node_dim),
            "meta.edge_dim": float(self.encoder.edge_dim if self.encoder.edge_dim else -1),
            "meta.num_layers": float(cfg.num_layers),
            "meta.hidden_dim": float(cfg.hidden_dim),
            "meta.readout": float(_READOUT_CODES[cfg.readout]),
            "meta.generator": float(_GENERATOR_CODES[gen.kind]),
            "meta.depth": float(getattr(gen, "depth", 0)),
            "meta.heads": float(gen.num_subgraphs),
            "meta.head": head_code,
            "meta.max_degree": float(self.max_degree if self.max_degree is not None else -1),
        }

    def save(self, path) -> None:
        arrays = {name: np.asarray(value) for name, value in self._meta().items()}
        arrays.update(self.store.arrays())
        save_arrays(path, arrays)

    @staticmethod
    def load(path) -> "Model":
        arrays = load_arrays(path)
        try:
            meta = {k: float(np.asarray(v).reshape(-1)[0])
                    for k, v in arrays.items() if k.startswith("meta.")}
            node_dim = int(meta["meta.node_dim"])
            edge_dim = int(meta["meta.edge_dim"])
            readout = {v: k for k, v in _READOUT_CODES.items()}[int(meta["meta.readout"])]
            gen_kind = {v: k for k, v in _GENERATOR_CODES.items()}[int(meta["meta.generator"])]
            head_code = meta["meta.head"]
        except KeyError as exc:
            raise CheckpointError(f"checkpoint lacks required metadata record {exc}") from exc
        encoder_config = EncoderConfig(
            num_layers=int(meta["meta.num_layers"]),
            hidden_dim=int(meta["meta.hidden_dim"]),
            readout=readout,
        )
        generator_config = GeneratorConfig(
            kind=gen_kind,
            depth=max(int(meta["meta.depth"]), 1),
            heads=int(meta["meta.heads"]),
        )
        task = None
        num_classes = None
        if head_code > 0:
            task, num_classes = "classification", int(head_code)
        elif head_code < 0:
            task = "regression"
        max_degree = int(meta["meta.max_degree"])
        model = Model.build(
            node_dim=node_dim,
            edge_dim=edge_dim if edge_dim > 0 else None,
            encoder_config=encoder_config,
            generator_config=generator_config,
            rng=np.random.default_rng(0),
            num_classes=num_classes,
            task=task,
            max_degree=max_degree if max_degree >= 0 else None,
        )
        weights = {k: v for k, v in arrays.items() if not k.startswith("meta.")}
        try:
            model.store.load_arrays(weights)
        except KeyError as exc:
            raise CheckpointError(f"checkpoint is missing parameter {exc}") from exc
        return model
