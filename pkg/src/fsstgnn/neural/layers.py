"""Network components: graph convolution, masked multi-head graph
attention, an LSTM cell and the MLP readouts.

All layers operate on batched inputs with a leading batch axis and are
differentiable through :mod:`fsstgnn.neural.autodiff`. Weights are
initialized uniformly in +/- sqrt(6 / (fan_in + fan_out)) from an
explicit rng so runs are reproducible.
"""

import numpy as np

from ..errors import ContractError, ParameterError, ShapeError
from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = {
    "relu": ad.relu,
    "tanh": ad.tanh,
    "none": lambda t: t,
}


def resolve_activation(name: str):
    if name not in ACTIVATIONS:
        raise ParameterError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}")
    return ACTIVATIONS[name]


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _ensure_batched(values, ndim: int):
    """Promote an unbatched array/tensor to batch size 1."""
    t = ad.as_tensor(values)
    if t.values.ndim == ndim - 1:
        t = ad.reshape(t, (1,) + t.values.shape)
    if t.values.ndim != ndim:
        raise ShapeError(f"expected {ndim - 1}-D or {ndim}-D input, got shape {t.values.shape}")
    return t


class GcnLayer:
    """Graph convolution with an edge-weighted neighborhood sum.

    Node update: h'_i = act(sum_j w_ij * (h_j W)), where w is the graph
    weight matrix (correlation or precision entries, self-loops included).
    The weights enter the aggregation directly; no degree normalization
    is applied because correlation coefficients arrive already scaled.
    """

    def __init__(self, in_dim: int, out_dim: int, activation: str = "tanh", *, rng=None, weight=None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self._act = resolve_activation(activation)
        if weight is None:
            if rng is None:
                raise ParameterError("GcnLayer needs either an rng or an explicit weight")
            weight = glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim)
        self.weight = Tensor(np.asarray(weight, dtype=float), requires_grad=True)
        if self.weight.values.shape != (in_dim, out_dim):
            raise ShapeError(f"GCN weight must be {(in_dim, out_dim)}, got {self.weight.values.shape}")

    def forward(self, graph_weights, features) -> Tensor:
        feats = _ensure_batched(features, 3)
        weights = _ensure_batched(graph_weights, 3)
        if feats.values.shape[-1] != self.in_dim:
            raise ShapeError(f"feature width {feats.values.shape[-1]} != layer input dim {self.in_dim}")
        if weights.values.shape[-1] != weights.values.shape[-2] or weights.values.shape[-1] != feats.values.shape[-2]:
            raise ShapeError(
                f"graph weights {weights.values.shape} incompatible with features {feats.values.shape}"
            )
        return self._act(ad.matmul(weights, ad.matmul(feats, self.weight)))

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight}


class GatLayer:
    """Masked multi-head graph attention.

    Per head: e_ij = LeakyReLU(a^T [W h_i || W h_j]) on masked pairs only,
    attention rows softmax-normalized over each node's neighborhood, and
    the head outputs averaged before the activation. Edge weights never
    enter; only the connectivity mask does.
    """

    def __init__(self, in_dim: int, head_dim: int, heads: int = 4, leaky_slope: float = 0.2,
                 activation: str = "tanh", *, rng=None):
        if heads < 1:
            raise ParameterError("GAT needs at least one attention head")
        self.in_dim = in_dim
        self.head_dim = head_dim
        self.heads = heads
        self.leaky_slope = leaky_slope
        self.activation = activation
        self._act = resolve_activation(activation)
        if rng is None:
            raise ParameterError("GatLayer needs an rng")
        self.head_weights = [
            Tensor(glorot_uniform(rng, (in_dim, head_dim), in_dim, head_dim), requires_grad=True)
            for _ in range(heads)
        ]
        self.head_attn = [
            Tensor(glorot_uniform(rng, (2 * head_dim, 1), 2 * head_dim, 1), requires_grad=True)
            for _ in range(heads)
        ]

    def forward(self, mask, features) -> Tensor:
        feats = _ensure_batched(features, 3)
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 2:
            mask = mask[None, :, :]
        if mask.shape[-1] != mask.shape[-2] or mask.shape[-1] != feats.values.shape[-2]:
            raise ShapeError(f"mask {mask.shape} incompatible with features {feats.values.shape}")
        if feats.values.shape[-1] != self.in_dim:
            raise ShapeError(f"feature width {feats.values.shape[-1]} != layer input dim {self.in_dim}")
        if not mask.any(axis=-1).all():
            raise ContractError("GAT requires every node to have at least one masked neighbor")

        combined = None
        for weight, attn in zip(self.head_weights, self.head_attn):
            projected = ad.matmul(feats, weight)                      # (B, N, D)
            src = ad.matmul(projected, attn[: self.head_dim])         # (B, N, 1)
            dst = ad.matmul(projected, attn[self.head_dim:])          # (B, N, 1)
            logits = ad.leaky_relu(ad.add(src, ad.swap_last(dst)), self.leaky_slope)
            alpha = ad.masked_softmax(logits, mask)                   # rows sum to 1 on neighborhoods
            head_out = ad.matmul(alpha, projected)
            combined = head_out if combined is None else ad.add(combined, head_out)
        return self._act(ad.mul(combined, 1.0 / self.heads))

    __call__ = forward

    def attention(self, mask, features) -> list[np.ndarray]:
        """Per-head attention matrices (values only), for inspection."""
        feats = _ensure_batched(features, 3)
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 2:
            mask = mask[None, :, :]
        out = []
        for weight, attn in zip(self.head_weights, self.head_attn):
            projected = ad.matmul(feats, weight)
            src = ad.matmul(projected, attn[: self.head_dim])
            dst = ad.matmul(projected, attn[self.head_dim:])
            logits = ad.leaky_relu(ad.add(src, ad.swap_last(dst)), self.leaky_slope)
            out.append(ad.masked_softmax(logits, mask).values)
        return out

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for k in range(self.heads):
            params[f"head{k}.weight"] = self.head_weights[k]
            params[f"head{k}.attn"] = self.head_attn[k]
        return params


class LstmCell:
    """Single-layer LSTM over a (batch, time, features) sequence.

    Gate order in the fused weight matrices is input, forget, cell, output.
    The forget-gate bias starts at 1 so early training does not wipe the
    cell state. Returns the final hidden state.
    """

    def __init__(self, input_dim: int, hidden_dim: int, *, rng=None):
        if rng is None:
            raise ParameterError("LstmCell needs an rng")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w_input = Tensor(
            glorot_uniform(rng, (input_dim, 4 * hidden_dim), input_dim, hidden_dim),
            requires_grad=True,
        )
        self.w_hidden = Tensor(
            glorot_uniform(rng, (hidden_dim, 4 * hidden_dim), hidden_dim, hidden_dim),
            requires_grad=True,
        )
        bias = np.zeros((1, 4 * hidden_dim))
        bias[0, hidden_dim: 2 * hidden_dim] = 1.0
        self.bias = Tensor(bias, requires_grad=True)

    def forward(self, sequence) -> Tensor:
        seq = _ensure_batched(sequence, 3)
        batch, steps, width = seq.values.shape
        if width != self.input_dim:
            raise ShapeError(f"sequence width {width} != LSTM input dim {self.input_dim}")
        if steps < 1:
            raise ShapeError("LSTM needs at least one time step")
        h_dim = self.hidden_dim
        projected = ad.matmul(seq, self.w_input)          # (B, T, 4H), one matmul for all steps
        hidden = Tensor(np.zeros((batch, h_dim)))
        cell = Tensor(np.zeros((batch, h_dim)))
        for t in range(steps):
            z = ad.add(ad.add(projected[:, t, :], ad.matmul(hidden, self.w_hidden)), self.bias)
            gate_in = ad.sigmoid(z[:, :h_dim])
            gate_forget = ad.sigmoid(z[:, h_dim: 2 * h_dim])
            gate_cell = ad.tanh(z[:, 2 * h_dim: 3 * h_dim])
            gate_out = ad.sigmoid(z[:, 3 * h_dim:])
            cell = ad.add(ad.mul(gate_forget, cell), ad.mul(gate_in, gate_cell))
            hidden = ad.mul(gate_out, ad.tanh(cell))
        return hidden

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {"w_input": self.w_input, "w_hidden": self.w_hidden, "bias": self.bias}


class NodeReadout:
    """Two-layer MLP producing one scalar per node.

    The temporal embedding may be per-node (batch, nodes, width) or
    shared (batch, width); a shared embedding is tiled across nodes
    before concatenation with each node's spatial embedding.
    """

    def __init__(self, temporal_dim: int, spatial_dim: int, hidden_dim: int, *, rng=None):
        if rng is None:
            raise ParameterError("NodeReadout needs an rng")
        in_dim = temporal_dim + spatial_dim
        self.temporal_dim = temporal_dim
        self.spatial_dim = spatial_dim
        self.w1 = Tensor(glorot_uniform(rng, (in_dim, hidden_dim), in_dim, hidden_dim), requires_grad=True)
        self.b1 = Tensor(np.zeros((1, hidden_dim)), requires_grad=True)
        self.w2 = Tensor(glorot_uniform(rng, (hidden_dim, 1), hidden_dim, 1), requires_grad=True)
        self.b2 = Tensor(np.zeros((1, 1)), requires_grad=True)

    def forward(self, temporal, spatial) -> Tensor:
        temporal = ad.as_tensor(temporal)
        spatial = _ensure_batched(spatial, 3)
        if temporal.values.ndim == 1:
            temporal = ad.reshape(temporal, (1, -1))
        if temporal.values.shape[-1] != self.temporal_dim:
            raise ShapeError(f"temporal width {temporal.values.shape[-1]} != {self.temporal_dim}")
        if spatial.values.shape[-1] != self.spatial_dim:
            raise ShapeError(f"spatial width {spatial.values.shape[-1]} != {self.spatial_dim}")
        batch, n_nodes, _ = spatial.values.shape
        if temporal.values.ndim == 2:
            temporal = ad.broadcast_to(
                ad.reshape(temporal, (batch, 1, self.temporal_dim)),
                (batch, n_nodes, self.temporal_dim),
            )
        if temporal.values.shape[:2] != (batch, n_nodes):
            raise ShapeError(
                f"temporal block {temporal.values.shape} does not match spatial {spatial.values.shape}"
            )
        joined = ad.concat([temporal, spatial], axis=-1)
        hidden = ad.relu(ad.add(ad.matmul(joined, self.w1), self.b1))
        out = ad.add(ad.matmul(hidden, self.w2), self.b2)      # (B, N, 1)
        return ad.reshape(out, (batch, n_nodes))

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


class DenseReadout:
    """Two-layer MLP from a shared embedding to one output per series.

    Used by the temporal-only baseline, which has no per-node branch.
    """

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int, *, rng=None):
        if rng is None:
            raise ParameterError("DenseReadout needs an rng")
        self.in_dim = in_dim
        self.w1 = Tensor(glorot_uniform(rng, (in_dim, hidden_dim), in_dim, hidden_dim), requires_grad=True)
        self.b1 = Tensor(np.zeros((1, hidden_dim)), requires_grad=True)
        self.w2 = Tensor(glorot_uniform(rng, (hidden_dim, out_dim), hidden_dim, out_dim), requires_grad=True)
        self.b2 = Tensor(np.zeros((1, out_dim)), requires_grad=True)

    def forward(self, embedding) -> Tensor:
        embedding = ad.as_tensor(embedding)
        if embedding.values.ndim == 1:
            embedding = ad.reshape(embedding, (1, -1))
        if embedding.values.shape[-1] != self.in_dim:
            raise ShapeError(f"embedding width {embedding.values.shape[-1]} != {self.in_dim}")
        hidden = ad.relu(ad.add(ad.matmul(embedding, self.w1), self.b1))
        return ad.add(ad.matmul(hidden, self.w2), self.b2)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def gcn_forward(layer: GcnLayer, graph, features) -> Tensor:
    """Apply a GCN layer to a FilteredGraph, using its edge weights."""
    return layer.forward(graph.weights, features)


def gat_forward(layer: GatLayer, graph, features) -> Tensor:
    """Apply a GAT layer to a FilteredGraph, using only its mask."""
    return layer.forward(graph.mask, features)


def lstm_forward(cell: LstmCell, sequence) -> Tensor:
    """Run the LSTM over a (time, features) sequence; final hidden state."""
    return cell.forward(sequence)


def readout(head: NodeReadout, temporal, spatial) -> Tensor:
    """Fuse temporal and spatial embeddings into per-node predictions."""
    return head.forward(temporal, spatial)
