"""Datasets: on-disk loading, split protocols, and a synthetic generator.

On-disk layout (all files share a ``<name>`` stem inside one directory):

* ``<name>.edges``   two whitespace-separated node ids per line (an empty
  file is a valid edgeless graph); direction is ignored, duplicates and
  self-citations are dropped
* ``<name>.labels``  one integer class id per line; the line count defines
  the node count
* ``<name>.features``  optional EMB1 binary matrix (see tagforge.features)
* ``<name>.texts``   optional, one raw document per line
* ``<name>.split.json``  optional ``{"train": [...], "val": [...], "test": [...]}``
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .graph import Graph, from_edge_list, validate_graph
from .rng import SplitMix64


class DatasetFormatError(ValueError):
    """On-disk dataset contents are inconsistent or malformed."""


@dataclass(frozen=True)
class SplitMask:
    """Disjoint train/val/test node-id sets, stored sorted."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, num_nodes: int) -> None:
        parts = [self.train, self.val, self.test]
        names = ["train", "val", "test"]
        for name, part in zip(names, parts):
            if part.size == 0:
                raise ValueError(f"{name} set is empty")
            if part.min() < 0 or part.max() >= num_nodes:
                raise ValueError(f"{name} set has node ids out of range")
            if np.unique(part).size != part.size:
                raise ValueError(f"{name} set has duplicate node ids")
        merged = np.concatenate(parts)
        if np.unique(merged).size != merged.size:
            raise ValueError("train/val/test sets overlap")


@dataclass
class Dataset:
    """A graph with node features, labels, and optional texts/splits."""

    graph: Graph
    features: np.ndarray | None
    labels: np.ndarray
    num_classes: int
    texts: list[str] | None = None
    splits: SplitMask | None = None
    name: str = "dataset"

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes


def _read_labels(path: str) -> np.ndarray:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    try:
        labels = np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: labels must be integers") from exc
    if labels.size == 0:
        raise DatasetFormatError(f"{path}: no labels")
    if labels.min() < 0:
        raise DatasetFormatError(f"{path}: negative class id")
    return labels


def _read_edges(path: str) -> list[tuple[int, int]]:
    edges = []
    with open(path) as fh:
        for lineno, ln in enumerate(fh, 1):
            parts = ln.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetFormatError(f"{path}:{lineno}: expected two node ids")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: non-integer node id") from exc
    return edges


def load_planetoid(directory: str, name: str) -> Dataset:
    """Load a dataset in the on-disk format documented in this module.

    The graph is symmetrized on load; features/texts/split files are used
    when present and checked for consistent node counts.
    """
    from .features import load_embedding_file  # deferred: features imports back

    stem = os.path.join(directory, name)
    labels_path, edges_path = stem + ".labels", stem + ".edges"
    for path in (labels_path, edges_path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing dataset file: {path}")
    labels = _read_labels(labels_path)
    n = labels.shape[0]
    num_classes = int(labels.max()) + 1
    present = np.unique(labels)
    if present.size != num_classes:
        missing = sorted(set(range(num_classes)) - set(present.tolist()))
        raise DatasetFormatError(f"{labels_path}: classes {missing} have no nodes")

    edges = _read_edges(edges_path)
    if edges and max(max(e) for e in edges) >= n:
        raise DatasetFormatError(
            f"{edges_path}: edge endpoint exceeds node count {n} from {labels_path}"
        )
    graph = from_edge_list(n, edges)
    validate_graph(graph)

    features = None
    if os.path.exists(stem + ".features"):
        features = load_embedding_file(stem + ".features").astype(np.float64)
        if features.shape[0] != n:
            raise DatasetFormatError(
                f"{stem}.features has {features.shape[0]} rows, expected {n}"
            )

    texts = None
    if os.path.exists(stem + ".texts"):
        with open(stem + ".texts") as fh:
            texts = [ln.rstrip("\n") for ln in fh]
        if len(texts) != n:
            raise DatasetFormatError(f"{stem}.texts has {len(texts)} lines, expected {n}")

    splits = None
    if os.path.exists(stem + ".split.json"):
        with open(stem + ".split.json") as fh:
            blob = json.load(fh)
        try:
            splits = SplitMask(
                train=np.sort(np.asarray(blob["train"], dtype=np.int64)),
                val=np.sort(np.asarray(blob["val"], dtype=np.int64)),
                test=np.sort(np.asarray(blob["test"], dtype=np.int64)),
            )
        except (KeyError, TypeError) as exc:
            raise DatasetFormatError(f"{stem}.split.json: bad split file") from exc
        splits.validate(n)

    return Dataset(graph, features, labels, num_classes, texts, splits, name=name)


def split_low(
    labels: np.ndarray,
    num_classes: int | None = None,
    per_class: int = 20,
    n_val: int = 500,
    n_test: int = 1000,
    seed: int = 0,
) -> SplitMask:
    """Low-label protocol: ``per_class`` training nodes per class, then val
    and test drawn uniformly without replacement from the remaining pool.

    Classes are processed in ascending order, each drawing from the same
    stream, so the result is a pure function of (labels, sizes, seed).
    """
    labels = np.asarray(labels, dtype=np.int64)
    classes = int(labels.max()) + 1 if num_classes is None else num_classes
    rng = SplitMix64(seed)
    train_parts = []
    for c in range(classes):
        nodes_c = np.flatnonzero(labels == c)
        if nodes_c.size < per_class:
            raise ValueError(
                f"class {c} has {nodes_c.size} nodes, need {per_class} for training"
            )
        train_parts.append(rng.choice(nodes_c, per_class))
    train = np.sort(np.concatenate(train_parts))
    pool = np.setdiff1d(np.arange(labels.shape[0], dtype=np.int64), train)
    if pool.size < n_val + n_test:
        raise ValueError(
            f"{pool.size} nodes remain after training selection, "
            f"need {n_val + n_test} for val+test"
        )
    perm = rng.permutation(pool.size)
    val = np.sort(pool[perm[:n_val]])
    test = np.sort(pool[perm[n_val : n_val + n_test]])
    mask = SplitMask(train, val, test)
    mask.validate(labels.shape[0])
    return mask


def split_high(n: int, ratios=(0.6, 0.2, 0.2), seed: int = 0) -> SplitMask:
    """High-label protocol: an exhaustive ratio split of all n nodes.

    Train and val take floor(ratio * n) nodes; test takes the remainder.
    """
    if n < 5:
        raise ValueError(f"need at least 5 nodes to split, got {n}")
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive values summing to 1, got {ratios}")
    # +1e-9 guards float dust in products that are mathematically integral
    n_train = int(np.floor(ratios[0] * n + 1e-9))
    n_val = int(np.floor(ratios[1] * n + 1e-9))
    perm = SplitMix64(seed).permutation(n)
    mask = SplitMask(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train : n_train + n_val]),
        test=np.sort(perm[n_train + n_val :]),
    )
    mask.validate(n)
    return mask


def generate_synthetic(
    n: int,
    num_classes: int,
    p_in: float,
    p_out: float,
    dim: int = 16,
    sep: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Planted-partition graph with class-separated Gaussian features.

    Labels are assigned round-robin (balanced within one). Same-class node
    pairs are joined with probability ``p_in``, cross-class pairs with
    ``p_out``. Class c features are drawn around ``sep * u_c`` for a random
    unit vector u_c. Each node also gets a small synthetic document mixing
    class-specific and shared tokens, so text encoders run end to end.
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in} p_out={p_out}")
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if n < num_classes:
        raise ValueError(f"need n >= num_classes, got n={n} C={num_classes}")

    root = SplitMix64(seed)
    edge_rng, feat_rng, text_rng = root.split(), root.split(), root.split()

    labels = np.arange(n, dtype=np.int64) % num_classes

    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = edge_rng.random(iu.shape[0]) < p
    graph = from_edge_list(n, np.stack([iu[keep], ju[keep]], axis=1))

    means = feat_rng.normal((num_classes, dim))
    means = sep * means / np.linalg.norm(means, axis=1, keepdims=True)
    features = means[labels] + feat_rng.normal((n, dim))

    class_vocab = [[f"c{c}w{k}" for k in range(6)] for c in range(num_classes)]
    shared_vocab = [f"common{k}" for k in range(8)]
    picks = (text_rng.random((n, 8)) * 6).astype(np.int64)  # 5 class + 3 shared slots
    texts = []
    for i in range(n):
        words = [class_vocab[labels[i]][picks[i, k] % 6] for k in range(5)]
        words += [shared_vocab[picks[i, 5 + k] % 8] for k in range(3)]
        texts.append(" ".join(words))

    return Dataset(
        graph,
        features,
        labels,
        num_classes,
        texts=texts,
        name=f"synthetic-n{n}-c{num_classes}",
    )
