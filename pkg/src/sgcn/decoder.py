"""Attention GRU decoder (no maxout) with teacher-forced loss and greedy search."""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import BOS, EOS
from .encoders import GruParams, embedding, glorot, gru_step, uniform, zeros
from .errors import DataError


@dataclass
class AttentionParams:
    W_q: T.Tensor   # dec hidden x a
    W_k: T.Tensor   # enc dim x a
    v: T.Tensor     # a

    def named(self, prefix):
        return {f"{prefix}.W_q": self.W_q, f"{prefix}.W_k": self.W_k, f"{prefix}.v": self.v}


@dataclass
class DecoderParams:
    emb: T.Tensor
    gru: GruParams
    init_W: T.Tensor
    init_b: T.Tensor
    attn: AttentionParams
    out_W: T.Tensor
    out_b: T.Tensor

    @classmethod
    def init(cls, vocab_size, enc_dim, emb_dim, hidden_dim, attn_dim, rng):
        return cls(
            emb=embedding(rng, (vocab_size, emb_dim)),
            gru=GruParams.init(emb_dim + enc_dim, hidden_dim, rng),
            init_W=glorot(rng, (enc_dim, hidden_dim)),
            init_b=zeros(hidden_dim),
            attn=AttentionParams(glorot(rng, (hidden_dim, attn_dim)), glorot(rng, (enc_dim, attn_dim)),
                                 uniform(rng, attn_dim)),
            out_W=glorot(rng, (hidden_dim + enc_dim + emb_dim, vocab_size)),
            out_b=zeros(vocab_size),
        )

    @property
    def emb_dim(self):
        return self.emb.shape[1]

    @property
    def vocab_size(self):
        return self.emb.shape[0]

    def named(self, prefix="decoder"):
        out = {f"{prefix}.emb": self.emb}
        out.update(self.gru.named(f"{prefix}.gru"))
        out[f"{prefix}.init.W"] = self.init_W
        out[f"{prefix}.init.b"] = self.init_b
        out.update(self.attn.named(f"{prefix}.attn"))
        out[f"{prefix}.out.W"] = self.out_W
        out[f"{prefix}.out.b"] = self.out_b
        return out


def attention_keys(enc_states, params):
    return enc_states @ params.W_k


def attend(dec_state, enc_states, src_mask, params, keys=None):
    """Additive attention ``e_t = v . tanh(W_q s + W_k h_t)``; returns ``(context, weights)``."""
    b, length, d = enc_states.shape
    src_mask = np.asarray(src_mask)
    if keys is None:
        keys = attention_keys(enc_states, params)
    a = keys.shape[2]
    q = (dec_state @ params.W_q).reshape(b, 1, a)
    energy = (T.tanh(keys + q) @ params.v.reshape(a, 1)).reshape(b, length)
    weights = T.masked_softmax(energy, src_mask > 0)
    context = (weights.reshape(b, 1, length) @ enc_states).reshape(b, d)
    return context, weights


def initial_state(enc_states, src_mask, params):
    """``tanh(affine(mean of real encoder states))``."""
    src_mask = np.asarray(src_mask, dtype=np.float64)
    lengths = src_mask.sum(axis=1)
    if (lengths <= 0).any():
        raise DataError("empty source sentence")
    b, length, _ = enc_states.shape
    weights = T.Tensor((src_mask / lengths[:, None]).reshape(b, 1, length), dtype=enc_states.dtype)
    summary = (weights @ enc_states).reshape(b, enc_states.shape[2])
    return T.tanh(summary @ params.init_W + params.init_b)


def _split_gru_input(params):
    e = params.emb_dim
    return params.gru.W[:e], params.gru.W[e:]


def decoder_logits(enc_states, src_mask, tgt_in, params):
    """Teacher-forced logits ``[B, Tt, V]`` for inputs ``tgt_in`` (BOS-prefixed)."""
    tgt_in = np.asarray(tgt_in)
    b, steps = tgt_in.shape
    keys = attention_keys(enc_states, params.attn)
    s = initial_state(enc_states, src_mask, params)
    w_emb, w_ctx = _split_gru_input(params)
    prev = T.gather_rows(params.emb, tgt_in)
    xw_emb = prev @ w_emb + params.gru.b
    states, contexts = [], []
    for i in range(steps):
        c, _ = attend(s, enc_states, src_mask, params.attn, keys)
        s = gru_step(None, s, params.gru, xw=xw_emb[:, i] + c @ w_ctx)
        states.append(s)
        contexts.append(c)
    feats = T.concat([T.stack(states, axis=1), T.stack(contexts, axis=1), prev], axis=2)
    return feats @ params.out_W + params.out_b


def decode_train(enc_states, src_mask, tgt_ids, tgt_mask, params, max_len=None, return_logits=False):
    """Masked mean token cross-entropy of ``tgt_ids`` framed ``BOS ... EOS``."""
    tgt_ids = np.asarray(tgt_ids)
    tgt_mask = np.asarray(tgt_mask)
    if max_len is not None and tgt_ids.shape[1] - 2 > max_len:
        raise DataError(f"target length {tgt_ids.shape[1] - 2} exceeds max {max_len}")
    tgt_in, tgt_out, out_mask = tgt_ids[:, :-1], tgt_ids[:, 1:], tgt_mask[:, 1:]
    logits = decoder_logits(enc_states, src_mask, tgt_in, params)
    b, steps, vocab = logits.shape
    loss = T.softmax_xent(logits.reshape(b * steps, vocab), tgt_out.reshape(-1), out_mask.reshape(-1))
    if return_logits:
        return loss, logits
    return loss


def max_decode_length(src_len):
    return 2 * int(src_len) + 5


def greedy_decode(enc_states, src_mask, params, max_len=None):
    """Argmax decoding until EOS or ``max_len`` (default ``2 * T_src + 5`` per sentence)."""
    src_mask = np.asarray(src_mask)
    b = enc_states.shape[0]
    lengths = src_mask.sum(axis=1).astype(np.int64)
    limits = np.array([max_decode_length(n) if max_len is None else max_len for n in lengths])
    keys = attention_keys(enc_states, params.attn)
    s = initial_state(enc_states, src_mask, params)
    w_emb, w_ctx = _split_gru_input(params)
    prev_ids = np.full(b, BOS, dtype=np.int64)
    done = np.zeros(b, dtype=bool)
    outputs = [[] for _ in range(b)]
    for step in range(int(limits.max())):
        e = T.gather_rows(params.emb, prev_ids)
        c, _ = attend(s, enc_states, src_mask, params.attn, keys)
        s = gru_step(None, s, params.gru, xw=e @ w_emb + params.gru.b + c @ w_ctx)
        logits = T.concat([s, c, e], axis=1) @ params.out_W + params.out_b
        # np.argmax picks the lowest id among ties
        next_ids = np.argmax(logits.data, axis=1)
        for r in range(b):
            if done[r]:
                continue
            if step >= limits[r]:
                done[r] = True
                continue
            tok = int(next_ids[r])
            if tok == EOS:
                done[r] = True
            else:
                outputs[r].append(tok)
                if len(outputs[r]) >= limits[r]:
                    done[r] = True
        if done.all():
            break
        prev_ids = next_ids
    return outputs
