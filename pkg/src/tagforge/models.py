"""The three node-classification architectures assembled from nn primitives.

Parameter shape table (layer index l = 0..L-1, widths d_0 = in_dim,
d_1..d_{L-1} = hidden, d_L = num_classes):

===================  =======================================================
arch                 parameters per layer l (d_in = d_l, d_out = d_{l+1})
===================  =======================================================
mlp / gcn            ``layer{l}.W`` (d_in, d_out); ``layer{l}.b`` (1, d_out)
graph_transformer    ``layer{l}.W_Q|W_K|W_V`` (d_in, H*d_head);
                     ``layer{l}.W_S`` (d_in, H*d_head); ``layer{l}.b``
                     (1, H*d_head) where hidden layers use H = spec.heads,
                     d_head = hidden // heads, and the final layer uses a
                     single head with d_head = num_classes
===================  =======================================================

Weights are Glorot-uniform, U(-a, a) with a = sqrt(6 / (fan_in + fan_out));
biases start at zero. Initialization draws weights in table order from one
SplitMix64 stream, so a seed pins every parameter.

Checkpoint container (all integers little-endian): magic ``TAGM``, u32
version (1), u64 JSON length + the spec as UTF-8 JSON, u64 parameter count,
then per parameter: u64 name length, name bytes, u64 rows, u64 cols, and
rows*cols float64 values row-major.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .graph import (
    Graph,
    NormalizedAdjacency,
    edge_rows,
    normalize_adjacency,
    segment_max,
    segment_sum,
    spmm,
    with_self_loops,
)
from .nn import Parameter, add_bias, dropout, dropout_backward, matmul, relu
from .rng import SplitMix64

ARCHITECTURES = ("gcn", "graph_transformer", "mlp")


class CheckpointFormatError(ValueError):
    """A checkpoint file is malformed or inconsistent."""


@dataclass(frozen=True)
class ModelSpec:
    arch: str
    in_dim: int
    num_classes: int
    layers: int = 4
    hidden: int = 64
    heads: int = 4
    dropout: float = 0.5

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        if self.layers < 2:
            raise ValueError("need at least 2 layers")
        if self.in_dim < 1 or self.num_classes < 2 or self.hidden < 1:
            raise ValueError("in_dim/hidden must be >= 1 and num_classes >= 2")
        if self.arch == "graph_transformer" and self.hidden % self.heads != 0:
            raise ValueError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def layer_dims(self) -> list[int]:
        return [self.in_dim] + [self.hidden] * (self.layers - 1) + [self.num_classes]


@dataclass
class Model:
    spec: ModelSpec
    parameters: dict[str, Parameter]

    def zero_grads(self) -> None:
        for p in self.parameters.values():
            p.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.parameters.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters.items():
            p.value[...] = snapshot[name]


@dataclass(frozen=True)
class AttentionStructure:
    """Neighbors-plus-self CSR used by transformer layers.

    ``rows`` expands row ids per stored entry; ``tperm`` reorders entries
    into transpose (column-major) order, which doubles as the scatter
    permutation because the structure is symmetric.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    rows: np.ndarray
    tperm: np.ndarray


def build_attention_structure(g: Graph) -> AttentionStructure:
    loops = with_self_loops(g)
    rows = edge_rows(loops)
    tperm = np.lexsort((rows, loops.col_indices))
    return AttentionStructure(loops.num_nodes, loops.row_offsets, loops.col_indices, rows, tperm)


@dataclass(frozen=True)
class PropagationContext:
    """Per-graph operators shared by every forward pass on a dataset."""

    adj: NormalizedAdjacency
    att: AttentionStructure


def build_context(g: Graph) -> PropagationContext:
    return PropagationContext(normalize_adjacency(g), build_attention_structure(g))


def glorot_uniform(rng: SplitMix64, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return (rng.random((fan_in, fan_out)) * 2.0 - 1.0) * a


def _layer_param_shapes(spec: ModelSpec, layer: int) -> dict[str, tuple[int, int]]:
    dims = spec.layer_dims()
    d_in, d_out = dims[layer], dims[layer + 1]
    if spec.arch in ("gcn", "mlp"):
        return {"W": (d_in, d_out), "b": (1, d_out)}
    width = d_out  # heads * d_head; final layer: 1 head of width num_classes
    return {
        "W_Q": (d_in, width),
        "W_K": (d_in, width),
        "W_V": (d_in, width),
        "W_S": (d_in, width),
        "b": (1, width),
    }


def layer_heads(spec: ModelSpec, layer: int) -> int:
    if spec.arch != "graph_transformer":
        return 1
    return spec.heads if layer < spec.layers - 1 else 1


def init_parameters(spec: ModelSpec, seed: int) -> Model:
    rng = SplitMix64(seed)
    params: dict[str, Parameter] = {}
    for layer in range(spec.layers):
        for short, shape in _layer_param_shapes(spec, layer).items():
            name = f"layer{layer}.{short}"
            if short == "b":
                params[name] = Parameter(np.zeros(shape), name)
            else:
                params[name] = Parameter(glorot_uniform(rng, *shape), name)
    return Model(spec, params)


def mlp_layer(h: np.ndarray, W: Parameter, b: Parameter):
    """h @ W + b. Backward accumulates into W/b and returns dH."""
    z, mm_back = matmul(h, W.value)
    out, bias_back = add_bias(z, b.value)

    def backward(d_out):
        d_z, d_b = bias_back(d_out)
        d_h, d_W = mm_back(d_z)
        W.add_grad(d_W)
        b.add_grad(d_b)
        return d_h

    return out, backward


def gcn_layer(h: np.ndarray, adj: NormalizedAdjacency, W: Parameter, b: Parameter):
    """spmm(adj, h) @ W + b.

    Computed as spmm(adj, h @ W) + b: the aggregation is linear, so the
    transform commutes with it, and aggregating the narrower matrix is far
    cheaper when in_dim >> out_dim. Backward uses the adjacency's symmetry
    (undirected graphs only) to propagate gradients with the same kernel.
    """
    z, mm_back = matmul(h, W.value)
    agg = spmm(adj, z)
    out, bias_back = add_bias(agg, b.value)

    def backward(d_out):
        d_agg, d_b = bias_back(d_out)
        d_z = spmm(adj, d_agg)
        d_h, d_W = mm_back(d_z)
        W.add_grad(d_W)
        b.add_grad(d_b)
        return d_h

    return out, backward


def graph_transformer_layer(h: np.ndarray, structure, params: dict[str, Parameter], heads: int):
    """Multi-head dot-product attention over each node's neighbors + self.

    Per head, attention weights are a softmax over the neighborhood of
    query-key scores scaled by 1/sqrt(d_head); head outputs are
    concatenated and a learned skip transform W_S h + b is added.
    ``structure`` is an AttentionStructure or a Graph (converted here).
    """
    if isinstance(structure, Graph):
        structure = build_attention_structure(structure)
    att = structure
    n = att.num_nodes
    if h.shape[0] != n:
        raise ValueError(f"feature rows {h.shape[0]} != num_nodes {n}")
    width = params["W_Q"].shape[1]
    if width % heads != 0:
        raise ValueError(f"attention width {width} not divisible by heads {heads}")
    d_head = width // heads
    inv_sqrt = 1.0 / math.sqrt(d_head)
    rows, cols, offsets, tperm = att.rows, att.col_indices, att.row_offsets, att.tperm

    q = (h @ params["W_Q"].value).reshape(n, heads, d_head)
    k = (h @ params["W_K"].value).reshape(n, heads, d_head)
    v = (h @ params["W_V"].value).reshape(n, heads, d_head)

    scores = np.einsum("ehd,ehd->eh", q[rows], k[cols]) * inv_sqrt
    shifted = scores - segment_max(scores, offsets)[rows]
    exps = np.exp(shifted)
    alpha = exps / segment_sum(exps, offsets)[rows]

    messages = segment_sum(alpha[:, :, None] * v[cols], offsets)
    out = messages.reshape(n, width) + h @ params["W_S"].value + params["b"].value

    def backward(d_out):
        params["b"].add_grad(d_out.sum(axis=0, keepdims=True))
        params["W_S"].add_grad(h.T @ d_out)
        d_h = d_out @ params["W_S"].value.T

        d_msg = d_out.reshape(n, heads, d_head)
        d_alpha = np.einsum("ehd,ehd->eh", v[cols], d_msg[rows])
        weighted = alpha[:, :, None] * d_msg[rows]
        d_v = segment_sum(weighted[tperm], offsets)  # scatter to columns

        # softmax backward per neighborhood segment
        inner = segment_sum(alpha * d_alpha, offsets)
        d_scores = alpha * (d_alpha - inner[rows]) * inv_sqrt
        d_q = segment_sum(d_scores[:, :, None] * k[cols], offsets)
        d_k = segment_sum((d_scores[:, :, None] * q[rows])[tperm], offsets)

        for short, grad in (("W_Q", d_q), ("W_K", d_k), ("W_V", d_v)):
            flat = grad.reshape(n, width)
            params[short].add_grad(h.T @ flat)
            d_h = d_h + flat @ params[short].value.T
        return d_h

    return out, backward


def _layer_params(model: Model, layer: int) -> dict[str, Parameter]:
    prefix = f"layer{layer}."
    return {
        name[len(prefix) :]: p
        for name, p in model.parameters.items()
        if name.startswith(prefix)
    }


def forward_backward(
    model: Model,
    dataset,
    context: PropagationContext | None = None,
    training: bool = False,
    rng: SplitMix64 | None = None,
):
    """Full forward pass; returns (logits, backward).

    Hidden layers apply {layer -> ReLU -> dropout}; the final layer emits
    raw logits. ``backward(d_logits)`` accumulates parameter gradients and
    returns the gradient at the input features.
    """
    spec = model.spec
    h = dataset.features
    if h is None:
        raise ValueError("dataset has no feature matrix")
    if h.shape[1] != spec.in_dim:
        raise ValueError(f"feature dim {h.shape[1]} != spec.in_dim {spec.in_dim}")
    if spec.arch != "mlp" and context is None:
        context = build_context(dataset.graph)
    keep_prob = 1.0 - spec.dropout
    if training and keep_prob < 1.0 and rng is None:
        raise ValueError("training with dropout requires an rng")

    tape = []
    for layer in range(spec.layers):
        params = _layer_params(model, layer)
        if spec.arch == "mlp":
            h, back = mlp_layer(h, params["W"], params["b"])
        elif spec.arch == "gcn":
            h, back = gcn_layer(h, context.adj, params["W"], params["b"])
        else:
            h, back = graph_transformer_layer(h, context.att, params, layer_heads(spec, layer))
        tape.append(back)
        if layer < spec.layers - 1:
            h, relu_back = relu(h)
            tape.append(relu_back)
            if training:
                h, mask = dropout(h, keep_prob, rng=rng, training=True)
                tape.append(lambda d, m=mask: dropout_backward(m, d))

    def backward(d_logits):
        d = d_logits
        for back in reversed(tape):
            d = back(d)
        return d

    return h, backward


def forward(
    model: Model,
    dataset,
    training: bool = False,
    rng: SplitMix64 | None = None,
    context: PropagationContext | None = None,
) -> np.ndarray:
    """Logits only; see forward_backward."""
    return forward_backward(model, dataset, context, training, rng)[0]


_MAGIC = b"TAGM"
_VERSION = 1


def save_checkpoint(model: Model, path: str) -> None:
    spec_blob = json.dumps(asdict(model.spec), sort_keys=True).encode()
    chunks = [_MAGIC, struct.pack("<I", _VERSION), struct.pack("<Q", len(spec_blob)), spec_blob]
    chunks.append(struct.pack("<Q", len(model.parameters)))
    for name, p in model.parameters.items():
        encoded = name.encode()
        chunks.append(struct.pack("<Q", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<QQ", *p.value.shape))
        chunks.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path: str) -> Model:
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    pos = 0

    def take(nbytes, what):
        nonlocal pos
        if pos + nbytes > len(view):
            raise CheckpointFormatError(f"{path}: truncated while reading {what}")
        chunk = view[pos : pos + nbytes]
        pos += nbytes
        return chunk

    if bytes(take(4, "magic")) != _MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic, not a TAGM checkpoint")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != _VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    (spec_len,) = struct.unpack("<Q", take(8, "spec length"))
    spec = ModelSpec(**json.loads(bytes(take(spec_len, "spec"))))
    (count,) = struct.unpack("<Q", take(8, "parameter count"))
    params: dict[str, Parameter] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<Q", take(8, "name length"))
        name = bytes(take(name_len, "name")).decode()
        rows, cols = struct.unpack("<QQ", take(16, "shape"))
        data = np.frombuffer(take(rows * cols * 8, f"values of {name}"), dtype="<f8")
        params[name] = Parameter(data.reshape(rows, cols).copy(), name)
    if pos != len(view):
        raise CheckpointFormatError(f"{path}: trailing bytes after last parameter")
    model = Model(spec, params)
    expected = {
        f"layer{layer}.{short}": shape
        for layer in range(spec.layers)
        for short, shape in _layer_param_shapes(spec, layer).items()
    }
    actual = {name: p.value.shape for name, p in params.items()}
    if actual != expected:
        raise CheckpointFormatError(f"{path}: parameters do not match the spec shape table")
    return model
