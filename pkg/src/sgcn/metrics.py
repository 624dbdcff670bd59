"""Corpus BLEU, Kendall tau reordering score, and gate-bias summaries."""
import math
import re
from collections import Counter

import numpy as np

from . import kernels
from .data import IN, OUT, EdgeVocabulary
from .errors import ConfigError, DataError


def ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(hyps, refs, max_n=4):
    """Clipped n-gram matches and totals, summed over the corpus, plus hyp/ref lengths."""
    if len(hyps) != len(refs):
        raise DataError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        raise DataError("cannot score an empty hypothesis corpus")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h = ngram_counts(hyp, n)
            r = ngram_counts(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    return matches, totals, hyp_len, ref_len


def bleu_from_stats(matches, totals, hyp_len, ref_len, max_n=None):
    max_n = max_n or len(matches)
    if hyp_len == 0:
        return 0.0
    bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    logs = []
    for n in range(max_n):
        if totals[n] == 0 or matches[n] == 0:
            return 0.0
        logs.append(math.log(matches[n] / totals[n]))
    return 100.0 * bp * math.exp(sum(logs) / max_n)


def bleu(hyps, refs, max_n=4):
    """Return ``(BLEU_1, BLEU_max_n)`` in [0, 100] from one reference per hypothesis."""
    stats = bleu_stats(hyps, refs, max_n)
    return bleu_from_stats(*stats, max_n=1), bleu_from_stats(*stats, max_n=max_n)


def align_positions(hyp, ref):
    """Reference positions of hypothesis tokens, matching each to its first unused occurrence."""
    slots = {}
    for j, tok in enumerate(ref):
        slots.setdefault(tok, []).append(j)
    used = {tok: 0 for tok in slots}
    out = []
    for tok in hyp:
        k = used.get(tok)
        if k is None or k >= len(slots[tok]):
            continue
        out.append(slots[tok][k])
        used[tok] = k + 1
    return out


def kendall_tau(hyp, ref):
    """``1 - 2 * inversions / C(n, 2)`` over matched tokens; ``None`` if fewer than two match."""
    perm = align_positions(hyp, ref)
    n = len(perm)
    if n < 2:
        return None
    inv = kernels.count_inversions(np.asarray(perm, dtype=np.int64))
    return 1.0 - 2.0 * inv / (n * (n - 1) / 2)


def corpus_kendall(hyps, refs):
    if len(hyps) != len(refs):
        raise DataError(f"{len(hyps)} hypotheses but {len(refs)} references")
    scores = [s for s in (kendall_tau(h, r) for h, r in zip(hyps, refs)) if s is not None]
    return float(np.mean(scores)) if scores else 0.0


def evaluate(hyps, refs):
    b1, b4 = bleu(hyps, refs)
    return {"bleu1": b1, "bleu4": b4, "kendall": corpus_kendall(hyps, refs), "sentences": len(hyps)}


def bleu_by_length(hyps, refs, buckets=5):
    """Split by reference length into equal-population buckets and score each.

    Adjacent buckets covering the same single length are merged.
    """
    if len(hyps) != len(refs):
        raise DataError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if len(refs) < buckets:
        raise DataError(f"{len(refs)} sentences cannot fill {buckets} buckets")
    order = sorted(range(len(refs)), key=lambda i: len(refs[i]))
    groups = [list(g) for g in np.array_split(np.asarray(order), buckets)]
    merged = []
    for g in groups:
        lens = {len(refs[i]) for i in g}
        if merged:
            prev_lens = {len(refs[i]) for i in merged[-1]}
            if len(lens) == 1 and lens == prev_lens:
                merged[-1].extend(g)
                continue
        merged.append(g)
    rows = []
    for k, g in enumerate(merged):
        h = [hyps[i] for i in g]
        r = [refs[i] for i in g]
        b1, b4 = bleu(h, r)
        lens = [len(x) for x in r]
        rows.append({"bucket": k, "min_len": min(lens), "max_len": max(lens), "sentences": len(g),
                     "bleu1": b1, "bleu4": b4})
    return rows


# ------------------------------------------------------------------ gate biases

_GATE_B = re.compile(r"^encoder\.gcn\.(\d+)\.gate_b$")


def directed_ids(label_ids):
    return [EdgeVocabulary.fold(l, d) for l in label_ids for d in (IN, OUT)]


def gate_bias_report(arrays, real_label_ids, fake_label_ids, n_labels=None):
    """Mean gate bias over the IN/OUT entries of real labels and of fake labels, across GCN layers."""
    gate_bs = [np.asarray(a).reshape(-1) for k, a in sorted(arrays.items()) if _GATE_B.match(k)]
    if not gate_bs:
        raise ConfigError("checkpoint has no GCN gate biases")
    n_directed = gate_bs[0].shape[0]
    n_labels = n_labels if n_labels is not None else (n_directed - 1) // 2
    for lab in list(real_label_ids) + list(fake_label_ids):
        if not 0 <= lab < n_labels:
            raise ConfigError(f"label id {lab} not in edge vocabulary of {n_labels} labels")
    if not real_label_ids or not fake_label_ids:
        raise ConfigError("need at least one real and one fake label")
    out = {}
    for group, ids in (("real", real_label_ids), ("fake", fake_label_ids)):
        idx = directed_ids(ids)
        out[group] = float(np.mean(np.concatenate([gb[idx] for gb in gate_bs])))
    return out


def labels_by_prefix(edge_vocab, real_prefix="real", fake_prefix="fake"):
    real = [i for i, lab in enumerate(edge_vocab.labels) if lab.startswith(real_prefix)]
    fake = [i for i, lab in enumerate(edge_vocab.labels) if lab.startswith(fake_prefix)]
    return real, fake
