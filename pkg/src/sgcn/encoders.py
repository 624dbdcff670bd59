"""Source encoders: bag-of-words, convolutional, bidirectional GRU, and syntactic GCN layers."""
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import LOOP, EdgeVocabulary, IN, OUT
from .errors import ConfigError, DataError, DimensionError

INIT_SCALE = 0.08
ENCODER_KINDS = ("bow", "cnn", "birnn")


def uniform(rng, shape, name=None, scale=INIT_SCALE):
    return T.parameter(rng.uniform(-scale, scale, size=shape), name=name)


def glorot(rng, shape, name=None):
    """Glorot-uniform for feed-forward projections."""
    fan_in, fan_out = shape[0], shape[-1]
    return uniform(rng, shape, name, scale=float(np.sqrt(6.0 / (fan_in + fan_out))))


def embedding(rng, shape, name=None):
    return T.parameter(rng.standard_normal(size=shape), name=name)


def zeros(shape, name=None):
    return T.parameter(np.zeros(shape), name=name)


# ------------------------------------------------------------------ GRU


@dataclass
class GruParams:
    """One GRU direction; gate order in ``W`` and ``b`` is update, reset, candidate."""

    W: T.Tensor      # in x 3h
    U_zr: T.Tensor   # h x 2h
    U_h: T.Tensor    # h x h
    b: T.Tensor      # 3h

    @classmethod
    def init(cls, n_in, n_hidden, rng):
        return cls(glorot(rng, (n_in, 3 * n_hidden)), uniform(rng, (n_hidden, 2 * n_hidden)),
                   uniform(rng, (n_hidden, n_hidden)), zeros(3 * n_hidden))

    @property
    def hidden(self):
        return self.U_h.shape[0]

    @property
    def n_in(self):
        return self.W.shape[0]

    def named(self, prefix):
        return {f"{prefix}.W": self.W, f"{prefix}.U_zr": self.U_zr, f"{prefix}.U_h": self.U_h, f"{prefix}.b": self.b}


def gru_step(x, h_prev, params, xw=None):
    """One GRU update.  ``xw`` may carry a precomputed ``x @ W + b``."""
    n = params.hidden
    if xw is None:
        xw = x @ params.W + params.b
    zr = T.sigmoid(xw[:, :2 * n] + h_prev @ params.U_zr)
    z = zr[:, :n]
    r = zr[:, n:]
    cand = T.tanh(xw[:, 2 * n:] + (r * h_prev) @ params.U_h)
    return h_prev + z * (cand - h_prev)


# ------------------------------------------------------------------ GCN


@dataclass
class GcnLayerParams:
    """Direction-specific matrices, label-specific biases, and edge gates for one layer.

    ``b`` is indexed by directed label (``L x d``) and ``gate_b`` by directed
    label (``L``); the three matrices are shared across labels.
    """

    W_in: T.Tensor
    W_out: T.Tensor
    W_loop: T.Tensor
    b: T.Tensor
    gate_w_in: T.Tensor
    gate_w_out: T.Tensor
    gate_w_loop: T.Tensor
    gate_b: T.Tensor

    @classmethod
    def init(cls, dim, n_directed, rng):
        return cls(uniform(rng, (dim, dim)), uniform(rng, (dim, dim)), uniform(rng, (dim, dim)),
                   zeros((n_directed, dim)), uniform(rng, dim), uniform(rng, dim), uniform(rng, dim),
                   zeros(n_directed))

    @property
    def dim(self):
        return self.W_in.shape[0]

    @property
    def n_directed(self):
        return self.gate_b.shape[0]

    def named(self, prefix):
        return {f"{prefix}.{k}": getattr(self, k) for k in
                ("W_in", "W_out", "W_loop", "b", "gate_w_in", "gate_w_out", "gate_w_loop", "gate_b")}

    def n_scalars(self):
        return sum(t.data.size for t in self.named("").values())


@dataclass
class EdgeIndex:
    """Flattened message list for a padded batch; node id is ``row * T + position``."""

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    direction: np.ndarray
    label: np.ndarray

    @property
    def is_self(self):
        return self.direction == LOOP

    def subset(self, keep):
        return EdgeIndex(self.n_nodes, self.src[keep], self.dst[keep], self.direction[keep], self.label[keep])


def batch_edges(graphs, length, mask):
    """Expand per-sentence arcs into IN, OUT and self-loop messages over a ``B x length`` grid."""
    mask = np.asarray(mask)
    b = mask.shape[0]
    src, dst, direction, label = [], [], [], []
    for row, graph in enumerate(graphs):
        n = int(mask[row].sum())
        if graph.n != n:
            raise DataError(f"graph for row {row} has {graph.n} nodes but the sentence has {n} tokens")
        base = row * length
        for v in range(n):
            src.append(base + v); dst.append(base + v); direction.append(LOOP); label.append(0)
        for head, dep, lab in graph.arcs:
            if head >= n or dep >= n:
                raise DataError(f"arc {head}->{dep} points into padding (row {row}, length {n})")
            # the dependent hears its head along IN, the head hears its dependent along OUT
            src.append(base + head); dst.append(base + dep); direction.append(IN)
            label.append(EdgeVocabulary.fold(lab, IN))
            src.append(base + dep); dst.append(base + head); direction.append(OUT)
            label.append(EdgeVocabulary.fold(lab, OUT))
    as_idx = lambda xs: np.asarray(xs, dtype=np.int64)  # noqa: E731
    return EdgeIndex(b * length, as_idx(src), as_idx(dst), as_idx(direction), as_idx(label))


def gcn_layer(h_in, edges, params, edge_dropout=0.0, training=False, rng=None, activation=T.relu, gated=True):
    """Gated syntactic graph convolution over ``h_in[B, T, d]``.

    Each edge ``u -> v`` carries ``g * (h_u W_dir + b_lab)`` with
    ``g = sigmoid(h_u . w_dir + gb_lab)``; messages into ``v`` are summed and
    passed through ``activation``.  Edge dropout removes whole non-self
    messages without rescaling.
    """
    shape = h_in.shape
    d = params.dim
    if shape[-1] != d:
        raise DimensionError(f"gcn_layer: input width {shape[-1]} but layer width {d}")
    if edges.label.size and edges.label.max() >= params.n_directed:
        raise DataError(f"directed label {edges.label.max()} outside {params.n_directed} bias rows")
    if training and edge_dropout > 0.0:
        keep = edges.is_self | (rng.random(edges.src.shape[0]) >= edge_dropout)
        edges = edges.subset(keep)
    n = edges.n_nodes
    h = h_in.reshape(n, d)
    slot = edges.src * 3 + edges.direction
    w_all = T.concat([params.W_in, params.W_out, params.W_loop], axis=1)
    projected = (h @ w_all).reshape(n * 3, d)
    msg = T.gather_rows(projected, slot) + T.gather_rows(params.b, edges.label)
    if gated:
        gate_w = T.stack([params.gate_w_in, params.gate_w_out, params.gate_w_loop], axis=1)
        gate_logit = (h @ gate_w).reshape(n * 3, 1)
        gate_b = params.gate_b.reshape(params.n_directed, 1)
        gate = T.sigmoid(T.gather_rows(gate_logit, slot) + T.gather_rows(gate_b, edges.label))
        msg = msg * gate
    summed = T.scatter_add_rows(msg, edges.dst, n)
    return activation(summed).reshape(shape)


def gcn_layer_reference(h, graph, params, activation=lambda x: np.maximum(x, 0), gated=True):
    """Per-edge loop over one sentence ``h[n, d]`` (numpy); used as a test oracle."""
    Ws = {IN: params.W_in.data, OUT: params.W_out.data, LOOP: params.W_loop.data}
    ws = {IN: params.gate_w_in.data, OUT: params.gate_w_out.data, LOOP: params.gate_w_loop.data}
    b, gb = params.b.data, params.gate_b.data
    n = h.shape[0]
    edges = [(v, v, LOOP, 0) for v in range(n)]
    for head, dep, lab in graph.arcs:
        edges.append((head, dep, IN, EdgeVocabulary.fold(lab, IN)))
        edges.append((dep, head, OUT, EdgeVocabulary.fold(lab, OUT)))
    out = np.zeros_like(h)
    for u, v, direction, lab in edges:
        g = 1.0 / (1.0 + np.exp(-(h[u] @ ws[direction] + gb[lab]))) if gated else 1.0
        out[v] += g * (h[u] @ Ws[direction] + b[lab])
    return activation(out)


# ------------------------------------------------------------------ encoders


@dataclass
class EncoderConfig:
    kind: str = "birnn"
    emb_dim: int = 256
    hidden_dim: int = 512
    cnn_window: int = 5
    gcn_layers: int = 0
    dropout: float = 0.2
    edge_dropout: float = 0.2
    max_pos: int = 50

    def validate(self):
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"encoder kind must be one of {ENCODER_KINDS}, got {self.kind!r}")
        if self.kind == "cnn" and self.cnn_window % 2 == 0:
            raise ConfigError(f"CNN window must be odd, got {self.cnn_window}")
        if self.gcn_layers < 0:
            raise ConfigError("gcn_layers must be >= 0")
        for name in ("dropout", "edge_dropout"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {p}")
        if min(self.emb_dim, self.hidden_dim, self.max_pos) < 1:
            raise ConfigError("dimensions must be positive")
        return self

    @property
    def output_dim(self):
        return {"bow": self.emb_dim, "cnn": self.hidden_dim, "birnn": 2 * self.hidden_dim}[self.kind]


@dataclass
class EncoderParams:
    emb: T.Tensor
    pos: T.Tensor = None
    gru_fwd: GruParams = None
    gru_bwd: GruParams = None
    cnn_W: T.Tensor = None
    cnn_b: T.Tensor = None
    gcn: list = field(default_factory=list)

    @classmethod
    def init(cls, config, vocab_size, n_directed, rng):
        config.validate()
        e, hdim = config.emb_dim, config.hidden_dim
        p = cls(embedding(rng, (vocab_size, e)))
        if config.kind == "bow":
            p.pos = embedding(rng, (config.max_pos, e))
        elif config.kind == "cnn":
            p.cnn_W = glorot(rng, (config.cnn_window * e, hdim))
            p.cnn_b = zeros(hdim)
        else:
            p.gru_fwd = GruParams.init(e, hdim, rng)
            p.gru_bwd = GruParams.init(e, hdim, rng)
        p.gcn = [GcnLayerParams.init(config.output_dim, n_directed, rng) for _ in range(config.gcn_layers)]
        return p

    def named(self, prefix="encoder"):
        out = {f"{prefix}.emb": self.emb}
        if self.pos is not None:
            out[f"{prefix}.pos"] = self.pos
        if self.gru_fwd is not None:
            out.update(self.gru_fwd.named(f"{prefix}.gru_fwd"))
            out.update(self.gru_bwd.named(f"{prefix}.gru_bwd"))
        if self.cnn_W is not None:
            out[f"{prefix}.cnn.W"] = self.cnn_W
            out[f"{prefix}.cnn.b"] = self.cnn_b
        for j, layer in enumerate(self.gcn):
            out.update(layer.named(f"{prefix}.gcn.{j}"))
        return out


def _mask3(mask, dtype):
    return T.Tensor(np.asarray(mask)[:, :, None], dtype=dtype)


def bow_encode(ids, mask, params):
    """Word embedding plus learned absolute position embedding."""
    ids = np.asarray(ids)
    length = ids.shape[1]
    if length > params.pos.shape[0]:
        raise ConfigError(f"sentence length {length} exceeds max position {params.pos.shape[0]}; raise max_pos")
    x = T.gather_rows(params.emb, ids) + T.gather_rows(params.pos, np.arange(length))
    return x * _mask3(mask, x.dtype)


def cnn_encode(ids, mask, params, window):
    """One convolution layer (affine + ReLU) over a zero-padded window of embeddings."""
    if window % 2 == 0:
        raise ConfigError(f"CNN window must be odd, got {window}")
    ids = np.asarray(ids)
    b, length = ids.shape
    m = _mask3(mask, params.emb.dtype)
    x = T.gather_rows(params.emb, ids) * m
    half = window // 2
    if half:
        pad = T.Tensor(np.zeros((b, half, x.shape[2])), dtype=x.dtype)
        x = T.concat([pad, x, pad], axis=1)
    windows = T.concat([x[:, j:j + length] for j in range(window)], axis=2) if window > 1 else x
    return T.relu(windows @ params.cnn_W + params.cnn_b) * m


def _run_gru(xw, mask, params, reverse):
    b, length, _ = xw.shape
    h = T.Tensor(np.zeros((b, params.hidden)), dtype=xw.dtype)
    states = [None] * length
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for t in steps:
        h_new = gru_step(None, h, params, xw=xw[:, t])
        if reverse:
            # carry the zero state through trailing pads so the real suffix starts clean
            m = T.Tensor(mask[:, t:t + 1], dtype=xw.dtype)
            h = h + m * (h_new - h)
        else:
            h = h_new
        states[t] = h
    return T.stack(states, axis=1)


def birnn_encode(ids, mask, params):
    """Concatenated forward and backward GRU states; padded positions are zero."""
    ids = np.asarray(ids)
    mask = np.asarray(mask)
    x = T.gather_rows(params.emb, ids)
    fwd = _run_gru(x @ params.gru_fwd.W + params.gru_fwd.b, mask, params.gru_fwd, reverse=False)
    bwd = _run_gru(x @ params.gru_bwd.W + params.gru_bwd.b, mask, params.gru_bwd, reverse=True)
    return T.concat([fwd, bwd], axis=2) * _mask3(mask, x.dtype)


def base_encode(ids, mask, config, params):
    if config.kind == "bow":
        return bow_encode(ids, mask, params)
    if config.kind == "cnn":
        return cnn_encode(ids, mask, params, config.cnn_window)
    return birnn_encode(ids, mask, params)


def encode(ids, mask, graphs, config, params, training=False, rng=None, activation=T.relu):
    """Base encoder, dropout, then ``config.gcn_layers`` GCN layers with residuals from layer 2 on."""
    states = base_encode(ids, mask, config, params)
    states = T.dropout(states, config.dropout, training, rng)
    if not params.gcn:
        return states
    if graphs is None:
        raise DataError("this encoder has GCN layers but no dependency graphs were given")
    edges = batch_edges(graphs, states.shape[1], mask)
    for j, layer in enumerate(params.gcn):
        inp = states if j == 0 else T.dropout(states, config.dropout, training, rng)
        out = gcn_layer(inp, edges, layer, config.edge_dropout, training, rng, activation=activation)
        states = out if j == 0 else out + states
    return states
