"""Central finite-difference check of tape gradients."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import Tape


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict
    failures: list = field(default_factory=list)
    tol: float = 1e-4
    n_checked: int = 0

    @property
    def passed(self):
        return not self.failures

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status} max_rel_err={self.max_rel_err:.3e} tol={self.tol:.0e} coords={self.n_checked}"]
        for name, err in self.per_param.items():
            lines.append(f"  {name}: {err:.3e}")
        for name, idx, analytic, numeric, err in self.failures[:20]:
            lines.append(f"  bad {name}{list(idx)}: tape={analytic:.6e} fd={numeric:.6e} rel={err:.2e}")
        return "\n".join(lines)


def relative_error(analytic, numeric, floor=1e-6):
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero gradients from dominating."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(build_fn, params, eps=1e-5, tol=1e-4, max_coords=None, rng=None, corrupt=None, floor=1e-6):
    """Compare tape gradients of ``build_fn()`` against central differences.

    ``params`` maps names to float64 leaf tensors that ``build_fn`` reads.
    Tensors with more than ``max_coords`` entries are checked on a random
    sample of coordinates drawn from ``rng``.
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ConfigError(f"grad_check needs float64 parameters; {name} is {p.data.dtype}")
    for p in params.values():
        p.grad = None
    tape = Tape(corrupt=corrupt)
    with tape:
        loss = build_fn()
    tape.backward(loss)
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)).copy() for name, p in params.items()}
    rng = rng or np.random.default_rng(0)

    per_param, failures = {}, []
    worst, checked = 0.0, 0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        param_worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            f_plus = float(build_fn().data)
            flat[c] = orig - eps
            f_minus = float(build_fn().data)
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            a = float(analytic[name].reshape(-1)[c])
            err = relative_error(a, numeric, floor)
            param_worst = max(param_worst, err)
            if err > tol:
                failures.append((name, np.unravel_index(c, p.shape), a, numeric, err))
            checked += 1
        per_param[name] = param_worst
        worst = max(worst, param_worst)
    return GradCheckReport(worst, per_param, failures, tol, checked)


# ------------------------------------------------------------------ miniature model suite

SUITE = ("bow+gcn1", "cnn+gcn1", "birnn+gcn2", "decoder")


def _mini_corpus(rng, n_sent=3, vocab=6, n_labels=2):
    from .data import Example

    corpus = []
    for _ in range(n_sent):
        n = int(rng.integers(2, 5))
        src = [f"s{int(t)}" for t in rng.integers(0, vocab, n)]
        tgt = [f"t{int(t)}" for t in rng.integers(0, vocab, int(rng.integers(1, 4)))]
        arcs = []
        for dep in range(n):
            head = int(rng.integers(0, n))
            if head != dep:
                arcs.append((head, dep, f"l{int(rng.integers(0, n_labels))}"))
        corpus.append(Example(src, tgt, arcs))
    return corpus


def mini_case(name, seed=0):
    """Build ``(loss_fn, params)`` for one float64 miniature; call inside ``precision(float64)``."""
    from . import tensor as T
    from .config import RunConfig
    from .data import build_edge_vocab, build_vocab, encode_batch
    from .decoder import DecoderParams, decode_train
    from .model import Seq2Seq
    from .rng import stream

    rng = stream(seed, "gradcheck", SUITE.index(name))
    corpus = _mini_corpus(rng)
    if name == "decoder":
        tgt_vocab = build_vocab([ex.tgt for ex in corpus], 1)
        batch = encode_batch(corpus, range(len(corpus)), build_vocab([ex.src for ex in corpus], 1), tgt_vocab, None)
        enc = T.parameter(rng.normal(0, 0.5, batch.src_ids.shape + (5,)), "enc_states")
        dec = DecoderParams.init(len(tgt_vocab), 5, 3, 4, 4, rng)
        params = dict(dec.named("decoder"))
        params["enc_states"] = enc
        return (lambda: decode_train(enc, batch.src_mask, batch.tgt_ids, batch.tgt_mask, dec)), params

    kind, gcn = name.split("+gcn")
    cfg = RunConfig(encoder=kind, emb_dim=4, hidden_dim=3 if kind == "birnn" else 4, cnn_window=3,
                    gcn_layers=int(gcn), max_pos=8, dec_emb_dim=3, dec_hidden_dim=4, attn_dim=4,
                    dropout=0.0, edge_dropout=0.0, seed=seed)
    model = Seq2Seq(cfg, build_vocab([ex.src for ex in corpus], 1), build_vocab([ex.tgt for ex in corpus], 1),
                    build_edge_vocab(corpus))
    # gate biases start at zero; move them so label-specific paths are exercised
    for pname, p in model.parameters().items():
        if pname.endswith(".b") or pname.endswith("gate_b"):
            p.data[...] = rng.normal(0, 0.3, p.shape)
    batch = encode_batch(corpus, range(len(corpus)), model.src_vocab, model.tgt_vocab, model.edge_vocab)
    return (lambda: model.loss(batch)), model.parameters()


def check_suite(names=SUITE, eps=1e-5, tol=1e-3, seed=0, corrupt=None, max_coords=40):
    """Run :func:`grad_check` on each named miniature in 64-bit mode; returns ``{name: report}``."""
    from . import tensor as T

    reports = {}
    for name in names:
        if name not in SUITE:
            raise ConfigError(f"unknown grad-check case {name!r}; choose from {', '.join(SUITE)}")
        with T.precision(np.float64):
            loss_fn, params = mini_case(name, seed)
            reports[name] = grad_check(loss_fn, params, eps=eps, tol=tol, max_coords=max_coords,
                                       rng=np.random.default_rng(seed), corrupt=corrupt)
    return reports
