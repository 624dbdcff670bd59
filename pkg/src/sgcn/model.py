"""Encoder-decoder model: parameters, loss, greedy translation, persistence."""
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import EdgeVocabulary, Vocabulary, make_batches
from .decoder import DecoderParams, decode_train, decoder_logits, greedy_decode
from .encoders import EncoderParams, encode
from .errors import CheckpointError
from .rng import stream

CONFIG_FILE = "config.txt"
SRC_VOCAB = "src.vocab"
TGT_VOCAB = "tgt.vocab"
LABEL_VOCAB = "labels.vocab"


class Seq2Seq:
    def __init__(self, config, src_vocab, tgt_vocab, edge_vocab, seed=None):
        self.config = config
        self.enc_config = config.encoder_config()
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.edge_vocab = edge_vocab
        rng = stream(config.seed if seed is None else seed, "init")
        self.encoder = EncoderParams.init(self.enc_config, len(src_vocab), edge_vocab.n_directed, rng)
        self.decoder = DecoderParams.init(len(tgt_vocab), self.enc_config.output_dim, config.dec_emb_dim,
                                          config.dec_hidden_dim, config.attn_dim, rng)

    @property
    def has_gcn(self):
        return self.enc_config.gcn_layers > 0

    def parameters(self):
        out = dict(self.encoder.named("encoder"))
        out.update(self.decoder.named("decoder"))
        return out

    def n_parameters(self):
        return sum(p.data.size for p in self.parameters().values())

    def encode(self, batch, training=False, rng=None):
        graphs = batch.graphs if self.has_gcn else None
        return encode(batch.src_ids, batch.src_mask, graphs, self.enc_config, self.encoder, training, rng)

    def loss(self, batch, training=False, rng=None):
        states = self.encode(batch, training, rng)
        return decode_train(states, batch.src_mask, batch.tgt_ids, batch.tgt_mask, self.decoder)

    def token_accuracy(self, batch):
        """Teacher-forced next-token accuracy over real target positions; returns ``(correct, total)``."""
        states = self.encode(batch)
        logits = decoder_logits(states, batch.src_mask, batch.tgt_ids[:, :-1], self.decoder)
        pred = np.argmax(logits.data, axis=2)
        gold = batch.tgt_ids[:, 1:]
        live = batch.tgt_mask[:, 1:] > 0
        return int(((pred == gold) & live).sum()), int(live.sum())

    def greedy(self, batch, max_len=None):
        return greedy_decode(self.encode(batch), batch.src_mask, self.decoder, max_len)

    def translate(self, corpus, batch_size=200, max_len=None):
        """Greedy token lists for every example of ``corpus``, in corpus order."""
        out = [None] * len(corpus)
        batches = make_batches(corpus, self.src_vocab, self.tgt_vocab, self.edge_vocab, batch_size,
                               max_len=10 ** 9)
        for batch in batches:
            for idx, ids in zip(batch.indices, self.greedy(batch, max_len)):
                out[idx] = self.tgt_vocab.decode(ids)
        return [o if o is not None else [] for o in out]

    # -------------------------------------------------------------- persistence

    def state_arrays(self):
        return {name: p.data for name, p in self.parameters().items()}

    def load_state_arrays(self, arrays):
        params = self.parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise CheckpointError(f"checkpoint lacks {sorted(missing)[:5]}")
        for name, p in params.items():
            arr = np.asarray(arrays[name])
            if arr.shape != p.shape:
                raise CheckpointError(f"{name}: checkpoint shape {arr.shape}, model shape {p.shape}")
            p.data[...] = arr

    def save(self, path):
        save_checkpoint(path, self.state_arrays())

    def save_artifacts(self, run_dir):
        from .config import dump_config

        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / CONFIG_FILE).write_text(dump_config(self.config), encoding="utf-8")
        self.src_vocab.save(run_dir / SRC_VOCAB)
        self.tgt_vocab.save(run_dir / TGT_VOCAB)
        self.edge_vocab.save(run_dir / LABEL_VOCAB)


def load_model(ckpt_path):
    """Rebuild a model from a checkpoint and the config/vocab files in its directory."""
    ckpt_path = Path(ckpt_path)
    run_dir = ckpt_path.parent
    for name in (CONFIG_FILE, SRC_VOCAB, TGT_VOCAB, LABEL_VOCAB):
        if not (run_dir / name).is_file():
            raise CheckpointError(f"{run_dir / name} not found next to {ckpt_path}")
    config = load_config(run_dir / CONFIG_FILE)
    with T.precision(np.float32):
        model = Seq2Seq(config, Vocabulary.load(run_dir / SRC_VOCAB), Vocabulary.load(run_dir / TGT_VOCAB),
                        EdgeVocabulary.load(run_dir / LABEL_VOCAB))
    model.load_state_arrays(load_checkpoint(ckpt_path))
    return model


__all__ = ["Seq2Seq", "load_model", "RunConfig"]
