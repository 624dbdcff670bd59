"""Epoch loop with validation-BLEU model selection."""
import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import resolve_path
from .data import build_edge_vocab, build_vocab, load_jsonl, load_parallel, make_batches
from .errors import ConfigError, DataError, NumericError
from .metrics import evaluate, gate_bias_report, labels_by_prefix
from .model import Seq2Seq
from .optim import Adam
from .rng import stream

logger = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "train_loss", "bleu1", "bleu4", "kendall")


@dataclass
class TrainConfig:
    epochs: int = 45
    batch_size: int = 80
    lr: float = 0.001
    dropout: float = 0.2
    edge_dropout: float = 0.2
    l2: float = 1e-8
    seed: int = 1
    eval_every_epoch: bool = True
    max_len: int = 50
    stop_at_bleu: float = 0.0

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        return self

    @classmethod
    def from_run_config(cls, cfg):
        return cls(cfg.epochs, cfg.batch_size, cfg.learning_rate, cfg.dropout, cfg.edge_dropout, cfg.l2,
                   cfg.seed, cfg.eval_every_epoch, cfg.max_len, cfg.stop_at_bleu).validate()


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    bleu1: float = float("nan")
    bleu4: float = float("nan")
    kendall: float = float("nan")


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    best_epoch: int = None
    gate_rows: list = field(default_factory=list)

    @property
    def best(self):
        for r in self.records:
            if r.epoch == self.best_epoch:
                return r
        return None

    def add(self, record):
        """Append a record; returns True if it becomes the best (strictly higher BLEU-4)."""
        self.records.append(record)
        best = self.best
        if not math.isnan(record.bleu4) and (best is None or record.bleu4 > best.bleu4):
            self.best_epoch = record.epoch
            return True
        return False

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_FIELDS)
            for r in self.records:
                w.writerow([r.epoch, f"{r.train_loss:.6f}", f"{r.bleu1:.4f}", f"{r.bleu4:.4f}", f"{r.kendall:.6f}"])

    def write_gate_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("epoch", "group", "mean"))
            for epoch, group, value in self.gate_rows:
                w.writerow([epoch, group, f"{value:.6f}"])

    @classmethod
    def read(cls, run_dir):
        run_dir = Path(run_dir)
        log = cls()
        with open(run_dir / "log.csv", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                log.add(EpochRecord(int(row["epoch"]), float(row["train_loss"]), float(row["bleu1"]),
                                    float(row["bleu4"]), float(row["kendall"])))
        gate = run_dir / "gate_bias.csv"
        if gate.is_file():
            with open(gate, encoding="utf-8") as fh:
                log.gate_rows = [(int(r["epoch"]), r["group"], float(r["mean"])) for r in csv.DictReader(fh)]
        return log


def validate_model(model, corpus, batch_size=200):
    hyps = model.translate(corpus, batch_size=batch_size)
    refs = [ex.tgt for ex in corpus]
    return evaluate(hyps, refs), hyps


def _grad_norms(params):
    return {name: float(np.sqrt((p.grad.astype(np.float64) ** 2).sum())) for name, p in params.items()
            if p.grad is not None}


def train_epoch(model, batches, optimizer, config, epoch):
    params = model.parameters()
    arrays = {name: p.data for name, p in params.items()}
    rng = stream(config.seed, "dropout", epoch)
    total, count = 0.0, 0
    for bi, batch in enumerate(batches):
        tape = T.Tape()
        try:
            with tape:
                loss = model.loss(batch, training=True, rng=rng)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch} batch {bi}: {exc}") from None
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError(f"epoch {epoch} batch {bi}: loss is {value}")
        tape.backward(loss)
        grads = {name: p.grad for name, p in params.items()}
        bad = [n for n, g in grads.items() if g is not None and not np.isfinite(g).all()]
        if bad:
            norms = _grad_norms(params)
            raise NumericError(f"epoch {epoch} batch {bi}: non-finite gradients in {bad[:5]}; norms {norms}")
        optimizer.step(arrays, grads)
        for p in params.values():
            p.grad = None
        n_tok = float(batch.tgt_mask[:, 1:].sum())
        total += value * n_tok
        count += n_tok
    return total / max(count, 1.0)


def train(model, train_corpus, val_corpus, config, run_dir=None, resume=False, log_fn=None):
    """Train with Adam, score greedy validation output every epoch, keep the best-BLEU-4 weights.

    Returns ``(best_state, run_log)`` where ``best_state`` maps parameter names
    to arrays.  With ``run_dir`` set, writes ``best.ckpt``, ``last.ckpt``,
    optimizer state, ``log.csv`` and (for GCN models) ``gate_bias.csv``.
    """
    config.validate()
    log_fn = log_fn or (lambda msg: logger.info(msg))
    run_dir = Path(run_dir) if run_dir is not None else None
    optimizer = Adam(lr=config.lr, weight_decay=config.l2)
    log = RunLog()
    start = 1
    best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    if resume:
        if run_dir is None:
            raise ConfigError("resume needs a run directory")
        state = json.loads((run_dir / "state.json").read_text())
        model.load_state_arrays(load_checkpoint(run_dir / "last.ckpt"))
        optimizer.load_state_arrays(load_checkpoint(run_dir / "last.optim.ckpt"), state["adam_t"])
        log = RunLog.read(run_dir)
        start = state["epoch"] + 1
        if (run_dir / "best.ckpt").is_file():
            best_state = dict(load_checkpoint(run_dir / "best.ckpt"))
    real_ids, fake_ids = labels_by_prefix(model.edge_vocab, model.config.real_label_prefix,
                                          model.config.fake_label_prefix)
    track_gates = model.has_gcn and real_ids and fake_ids
    if run_dir is not None:
        model.save_artifacts(run_dir)

    for epoch in range(start, config.epochs + 1):
        t0 = time.time()
        batches = make_batches(train_corpus, model.src_vocab, model.tgt_vocab, model.edge_vocab,
                               config.batch_size, config.max_len, shuffle_seed=config.seed, epoch=epoch)
        if not batches:
            raise DataError("no training batches left after length filtering")
        loss = train_epoch(model, batches, optimizer, config, epoch)
        record = EpochRecord(epoch, loss)
        if config.eval_every_epoch or epoch == config.epochs:
            metrics, _ = validate_model(model, val_corpus)
            record.bleu1, record.bleu4, record.kendall = metrics["bleu1"], metrics["bleu4"], metrics["kendall"]
        improved = log.add(record)
        if improved:
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
        if track_gates:
            means = gate_bias_report(model.state_arrays(), real_ids, fake_ids, len(model.edge_vocab))
            log.gate_rows += [(epoch, "real", means["real"]), (epoch, "fake", means["fake"])]
        log_fn(f"epoch {epoch} loss {loss:.4f} bleu1 {record.bleu1:.2f} bleu4 {record.bleu4:.2f} "
               f"kendall {record.kendall:.4f} ({time.time() - t0:.1f}s)")
        if run_dir is not None:
            if improved:
                save_checkpoint(run_dir / "best.ckpt", best_state)
            model.save(run_dir / "last.ckpt")
            save_checkpoint(run_dir / "last.optim.ckpt", optimizer.state_arrays())
            (run_dir / "state.json").write_text(json.dumps(
                {"epoch": epoch, "adam_t": optimizer.t, "best_epoch": log.best_epoch}))
            log.write_csv(run_dir / "log.csv")
            if track_gates:
                log.write_gate_csv(run_dir / "gate_bias.csv")
        if config.stop_at_bleu and record.bleu4 >= config.stop_at_bleu:
            break
    return best_state, log


# ------------------------------------------------------------------ config-driven entry point


def load_corpora(cfg):
    def load(jsonl, src, tgt, conllu, limit):
        if jsonl:
            corpus = load_jsonl(resolve_path(jsonl))
        elif src:
            corpus = load_parallel(resolve_path(src), resolve_path(tgt), resolve_path(conllu))
        else:
            return None
        return corpus[:limit] if limit else corpus

    train_corpus = load(cfg.train_data, cfg.train_src, cfg.train_tgt, cfg.train_conllu, cfg.train_limit)
    val_corpus = load(cfg.val_data, cfg.val_src, cfg.val_tgt, cfg.val_conllu, cfg.val_limit)
    if not train_corpus:
        raise DataError("training corpus is empty")
    if val_corpus is None:
        val_corpus = train_corpus
    return train_corpus, val_corpus


def build_model(cfg, train_corpus):
    src_vocab = build_vocab([ex.src for ex in train_corpus], cfg.src_min_freq, cfg.src_max_vocab or None)
    tgt_vocab = build_vocab([ex.tgt for ex in train_corpus], cfg.tgt_min_freq, cfg.tgt_max_vocab or None)
    edge_vocab = build_edge_vocab(train_corpus)
    return Seq2Seq(cfg, src_vocab, tgt_vocab, edge_vocab)


def run_training(cfg, run_dir=None, resume=False, log_fn=None):
    """Load data named by ``cfg``, build (or resume) a model, train it; returns ``(model, best_state, log)``."""
    cfg.validate()
    run_dir = Path(run_dir or cfg.run_dir)
    train_corpus, val_corpus = load_corpora(cfg)
    if resume:
        from .model import load_model

        model = load_model(run_dir / "last.ckpt")
    else:
        model = build_model(cfg, train_corpus)
    best_state, log = train(model, train_corpus, val_corpus, TrainConfig.from_run_config(cfg), run_dir,
                            resume=resume, log_fn=log_fn)
    return model, best_state, log
