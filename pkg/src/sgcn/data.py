"""Sentences, dependency graphs, vocabularies and batching."""
import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .rng import stream

logger = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")

IN, OUT, LOOP = 0, 1, 2
SELF_LABEL = 0
UNK_LABEL = "<unk-label>"


@dataclass
class Example:
    """One aligned pair; ``arcs`` are ``(head, dependent, label)`` with 0-based indices."""

    src: list
    tgt: list
    arcs: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"src": self.src, "tgt": self.tgt, "arcs": [list(a) for a in self.arcs]})

    @classmethod
    def from_json(cls, line):
        obj = json.loads(line)
        return cls(list(obj["src"]), list(obj.get("tgt", [])), [tuple(a) for a in obj.get("arcs", [])])


@dataclass
class DepGraph:
    """Directed labeled arcs ``head -> dependent`` over ``n`` tokens; self loops are implicit."""

    n: int
    arcs: list

    def __post_init__(self):
        for head, dep, _ in self.arcs:
            if not (0 <= head < self.n and 0 <= dep < self.n):
                raise DataError(f"arc {head}->{dep} outside sentence of length {self.n}")
            if head == dep:
                raise DataError(f"explicit self-loop on token {head}")


class Vocabulary:
    """Token <-> id map with PAD/UNK/BOS/EOS reserved at ids 0..3."""

    def __init__(self, tokens):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def encode(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids, strip=True):
        out = []
        for i in ids:
            i = int(i)
            if strip and i == EOS:
                break
            if strip and i in (PAD, BOS):
                continue
            out.append(self.itos[i])
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.itos[len(RESERVED):]:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def build_vocab(corpus, min_freq=3, max_size=None):
    """Build a vocabulary from tokenized sentences, keeping tokens seen ``min_freq`` times or more."""
    counts = Counter()
    n_sent = 0
    for sent in corpus:
        counts.update(sent)
        n_sent += 1
    if n_sent == 0 or not counts:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_freq and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    if max_size is not None:
        kept = kept[:max_size]
    return Vocabulary(kept)


class EdgeVocabulary:
    """Dependency labels plus their directed folding.

    Label id 0 is reserved for unknown labels.  Directed ids are
    ``0`` for the self loop and ``1 + 2*label + direction`` otherwise, with
    direction ``IN`` (message from head to dependent) or ``OUT``.
    """

    def __init__(self, labels):
        self.labels = [UNK_LABEL] + [lab for lab in labels if lab != UNK_LABEL]
        self.index = {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self):
        return len(self.labels)

    @property
    def n_directed(self):
        return 2 * len(self.labels) + 1

    def label_id(self, label):
        return self.index.get(label, 0)

    @staticmethod
    def fold(label_id, direction):
        if direction == LOOP:
            return SELF_LABEL
        return 1 + 2 * label_id + direction

    @staticmethod
    def unfold(directed_id):
        if directed_id == SELF_LABEL:
            return None, LOOP
        return (directed_id - 1) // 2, (directed_id - 1) % 2

    def graph(self, n, arcs):
        return DepGraph(n, [(h, d, self.label_id(lab)) for h, d, lab in arcs])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for lab in self.labels[1:]:
                fh.write(lab + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def build_edge_vocab(corpus):
    labels = sorted({lab for ex in corpus for _, _, lab in ex.arcs})
    return EdgeVocabulary(labels)


# ------------------------------------------------------------------ readers


def load_conllu(path):
    """Parse a CoNLL-U file into ``(tokens, arcs)`` pairs with 0-based ``head -> dependent`` arcs."""
    sentences = []
    tokens, heads = [], []
    start_line = None

    def flush():
        if not tokens:
            return
        n = len(tokens)
        arcs = []
        for dep, (head, label, lineno) in enumerate(heads):
            if head > n:
                raise ParseError(f"HEAD {head} beyond sentence length {n}", lineno, path)
            if head == 0:
                continue
            if head - 1 == dep:
                raise ParseError("token is its own head", lineno, path)
            arcs.append((head - 1, dep, label))
        sentences.append((list(tokens), arcs))
        tokens.clear()
        heads.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 8:
                raise ParseError(f"expected at least 8 tab-separated columns, got {len(cols)}", lineno, path)
            tok_id = cols[0]
            if "-" in tok_id or "." in tok_id:
                continue
            try:
                idx = int(tok_id)
            except ValueError:
                raise ParseError(f"bad token id {tok_id!r}", lineno, path) from None
            if idx != len(tokens) + 1:
                raise ParseError(f"token id {idx} out of sequence", lineno, path)
            try:
                head = int(cols[6])
            except ValueError:
                raise ParseError(f"non-integer HEAD {cols[6]!r}", lineno, path) from None
            if head < 0:
                raise ParseError(f"negative HEAD {head}", lineno, path)
            if start_line is None:
                start_line = lineno
            tokens.append(cols[1])
            heads.append((head, cols[7], lineno))
    flush()
    return sentences


def read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def load_parallel(src_path, tgt_path=None, conllu_path=None):
    """Read whitespace-tokenized parallel text, optionally aligned with CoNLL-U parses."""
    src = read_lines(src_path)
    tgt = read_lines(tgt_path) if tgt_path else [[] for _ in src]
    if len(src) != len(tgt):
        raise DataError(f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}")
    if conllu_path is None:
        return [Example(s, t, []) for s, t in zip(src, tgt)]
    parsed = load_conllu(conllu_path)
    if len(parsed) != len(src):
        raise DataError(f"{conllu_path} has {len(parsed)} sentences but {src_path} has {len(src)} lines")
    out = []
    for i, (s, t, (toks, arcs)) in enumerate(zip(src, tgt, parsed)):
        if len(toks) != len(s):
            logger.warning("dropping sentence %d: parse has %d tokens, source line has %d", i + 1, len(toks), len(s))
            continue
        out.append(Example(s, t, arcs))
    return out


def load_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        out = []
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                ex = Example.from_json(line)
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"bad JSON record: {exc}", lineno, path) from None
            for arc in ex.arcs:
                if len(arc) != 3:
                    raise ParseError(f"arc {arc!r} is not [head, dep, label]", lineno, path)
            out.append(ex)
        return out


def write_jsonl(path, corpus):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in corpus:
            fh.write(ex.to_json() + "\n")


# ------------------------------------------------------------------ synthetic reordering task


def real_label(k):
    return f"real{k}"


def fake_label(k):
    return f"fake{k}"


def reorder_item(rng, len_range, vocab_size, n_real, n_fake):
    lo, hi = len_range
    length = int(rng.integers(lo, hi + 1))
    tgt_ids = rng.integers(0, vocab_size, size=length)
    perm = rng.permutation(length)  # source position i holds original token perm[i]
    position = np.empty(length, dtype=np.int64)
    position[perm] = np.arange(length)
    tgt = [_type_name(i) for i in tgt_ids]
    src = [tgt[j] for j in perm]
    arcs = []
    for j in range(1, length):
        arcs.append((int(position[j]), int(position[j - 1]), real_label(int(rng.integers(n_real)))))
    for i in range(length):
        other = int(rng.integers(length - 1))
        if other >= i:
            other += 1
        arcs.append((i, other, fake_label(int(rng.integers(n_fake)))))
    return Example(src, tgt, arcs)


def _type_name(i):
    i = int(i)
    if i < 26:
        return chr(ord("a") + i)
    return f"w{i}"


def generate_reorder_dataset(n_train=25000, n_val=1000, len_range=(3, 10), vocab_size=26,
                             n_real_labels=5, n_fake_labels=5, seed=1):
    """Random sequences to be restored from a permutation, with real predecessor arcs and fake arcs.

    Each token points (as head) to the token that preceded it in the original
    sequence under a real label, and to one uniformly chosen other position
    under a fake label.
    """
    lo, hi = len_range
    if lo < 2 or hi < lo:
        raise ConfigError(f"length range must satisfy 2 <= min <= max, got {len_range}")
    if n_train < 0 or n_val < 0 or vocab_size < 1 or n_real_labels < 1 or n_fake_labels < 1:
        raise ConfigError("dataset sizes and label/vocab counts must be positive")
    rng = stream(seed, "data")
    make = lambda: reorder_item(rng, (lo, hi), vocab_size, n_real_labels, n_fake_labels)  # noqa: E731
    train = [make() for _ in range(n_train)]
    val = [make() for _ in range(n_val)]
    return train, val


def walk_real_chain(example, is_real=lambda lab: lab.startswith("real")):
    """Rebuild the original order by following real arcs from the token that has none."""
    n = len(example.src)
    pred_of = {}
    for head, dep, lab in example.arcs:
        if is_real(lab):
            pred_of[head] = dep
    starts = [i for i in range(n) if i not in pred_of]
    if len(starts) != 1:
        raise DataError(f"expected one chain start, found {len(starts)}")
    succ = {dep: head for head, dep in pred_of.items()}
    order = [starts[0]]
    while order[-1] in succ:
        order.append(succ[order[-1]])
        if len(order) > n:
            raise DataError("real arcs contain a cycle")
    return [example.src[i] for i in order]


# ------------------------------------------------------------------ batching


@dataclass
class Batch:
    src_ids: np.ndarray      # B x Ts
    src_mask: np.ndarray     # B x Ts, 1.0 on real tokens
    graphs: list             # DepGraph per row
    tgt_ids: np.ndarray      # B x Tt, BOS y_1..y_n EOS PAD...
    tgt_mask: np.ndarray     # B x Tt
    indices: np.ndarray      # corpus positions of each row

    @property
    def size(self):
        return self.src_ids.shape[0]

    @property
    def src_lengths(self):
        return self.src_mask.sum(axis=1).astype(np.int64)


def encode_batch(examples, indices, src_vocab, tgt_vocab, edge_vocab):
    b = len(examples)
    ts = max(len(ex.src) for ex in examples)
    tt = max(len(ex.tgt) for ex in examples) + 2
    src_ids = np.full((b, ts), PAD, dtype=np.int64)
    src_mask = np.zeros((b, ts), dtype=np.float32)
    tgt_ids = np.full((b, tt), PAD, dtype=np.int64)
    tgt_mask = np.zeros((b, tt), dtype=np.float32)
    graphs = []
    for r, ex in enumerate(examples):
        n = len(ex.src)
        src_ids[r, :n] = src_vocab.encode(ex.src)
        src_mask[r, :n] = 1.0
        framed = [BOS] + tgt_vocab.encode(ex.tgt) + [EOS]
        tgt_ids[r, :len(framed)] = framed
        tgt_mask[r, :len(framed)] = 1.0
        graphs.append(edge_vocab.graph(n, ex.arcs) if edge_vocab is not None else DepGraph(n, []))
    return Batch(src_ids, src_mask, graphs, tgt_ids, tgt_mask, np.asarray(indices, dtype=np.int64))


def filter_length(corpus, max_len=50):
    keep = [i for i, ex in enumerate(corpus) if 0 < len(ex.src) <= max_len and len(ex.tgt) <= max_len]
    if corpus and not keep:
        logger.warning("all %d sentences exceed max_len=%d", len(corpus), max_len)
    return keep


def make_batches(corpus, src_vocab, tgt_vocab, edge_vocab, batch_size, max_len=50, shuffle_seed=None, epoch=0):
    """Length-filter, optionally shuffle (seeded per epoch), and cut into padded batches."""
    if batch_size < 1:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    keep = filter_length(corpus, max_len)
    if shuffle_seed is not None:
        order = stream(shuffle_seed, "shuffle", epoch).permutation(len(keep))
        keep = [keep[i] for i in order]
    batches = []
    for start in range(0, len(keep), batch_size):
        idx = keep[start:start + batch_size]
        batches.append(encode_batch([corpus[i] for i in idx], idx, src_vocab, tgt_vocab, edge_vocab))
    return batches
