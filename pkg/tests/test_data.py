import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgcn.data import (BOS, EOS, IN, LOOP, OUT, PAD, UNK, DepGraph, EdgeVocabulary, Example, Vocabulary,
                       build_edge_vocab, build_vocab, generate_reorder_dataset, load_conllu, load_jsonl,
                       load_parallel, make_batches, walk_real_chain, write_jsonl)
from sgcn.errors import ConfigError, DataError, ParseError

FIGURE_1 = """# text = The monkey eats a banana
1\tThe\t_\t_\t_\t_\t2\tdet\t_\t_
2\tmonkey\t_\t_\t_\t_\t3\tnsubj\t_\t_
3\teats\t_\t_\t_\t_\t0\troot\t_\t_
4\ta\t_\t_\t_\t_\t5\tdet\t_\t_
5\tbanana\t_\t_\t_\t_\t3\tdobj\t_\t_

"""


def conllu(tmp_path, text):
    path = tmp_path / "x.conllu"
    path.write_text(text, encoding="utf-8")
    return path


# ------------------------------------------------------------------ CoNLL-U


def test_conllu_two_tokens(tmp_path):
    text = "1\tmonkey\t_\t_\t_\t_\t2\tnsubj\t_\t_\n2\teats\t_\t_\t_\t_\t0\troot\t_\t_\n"
    assert load_conllu(conllu(tmp_path, text)) == [(["monkey", "eats"], [(1, 0, "nsubj")])]


def test_conllu_single_root_token(tmp_path):
    assert load_conllu(conllu(tmp_path, "1\thi\t_\t_\t_\t_\t0\troot\t_\t_\n\n")) == [(["hi"], [])]


def test_conllu_figure_one(tmp_path):
    [(tokens, arcs)] = load_conllu(conllu(tmp_path, FIGURE_1))
    assert tokens == ["The", "monkey", "eats", "a", "banana"]
    assert sorted(lab for _, _, lab in arcs) == ["det", "det", "dobj", "nsubj"]
    assert sorted(h + 1 for h, _, _ in arcs) == [2, 3, 3, 5]


def test_conllu_skips_multiword_and_empty_nodes(tmp_path):
    text = ("1-2\tdu\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\t_\t_\t_\t_\t0\troot\t_\t_\n"
            "2\tle\t_\t_\t_\t_\t1\tdet\t_\t_\n2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n\n"
            "1\tb\t_\t_\t_\t_\t0\troot\t_\t_\n")
    assert load_conllu(conllu(tmp_path, text)) == [(["de", "le"], [(0, 1, "det")]), (["b"], [])]


@pytest.mark.parametrize("line, where", [
    ("1\ta\t_\t_\t_\t_\tX\tdet\t_\t_", "HEAD"),
    ("1\ta\t_\t_\t_\t_\t5\tdet\t_\t_", "beyond"),
    ("1\ta\t_\t_", "columns"),
])
def test_conllu_errors_carry_line_numbers(tmp_path, line, where):
    path = conllu(tmp_path, "# c\n" + line + "\n")
    with pytest.raises(ParseError, match=where) as info:
        load_conllu(path)
    assert info.value.line == 2 and ":2:" in str(info.value)


def test_load_parallel_drops_misaligned_parses(tmp_path, caplog):
    (tmp_path / "s.txt").write_text("monkey eats\nthe cat sleeps\n")
    (tmp_path / "t.txt").write_text("affe isst\ndie katze schlaeft\n")
    text = ("1\tmonkey\t_\t_\t_\t_\t2\tnsubj\t_\t_\n2\teats\t_\t_\t_\t_\t0\troot\t_\t_\n\n"
            "1\tcat\t_\t_\t_\t_\t2\tnsubj\t_\t_\n2\tsleeps\t_\t_\t_\t_\t0\troot\t_\t_\n\n")
    path = conllu(tmp_path, text)
    with caplog.at_level(logging.WARNING):
        corpus = load_parallel(tmp_path / "s.txt", tmp_path / "t.txt", path)
    assert [ex.src for ex in corpus] == [["monkey", "eats"]]
    assert "dropping sentence 2" in caplog.text


# ------------------------------------------------------------------ vocabularies


def test_build_vocab_min_freq_and_order():
    corpus = [["a"] * 5 + ["b"] * 2 + ["c"] * 3]
    v = build_vocab(corpus, min_freq=3)
    assert v.itos == ["<pad>", "<unk>", "<s>", "</s>", "a", "c"]
    assert build_vocab(corpus, min_freq=1, max_size=1).itos[4:] == ["a"]
    assert build_vocab(corpus, 1).itos == build_vocab(corpus, 1).itos
    assert v.encode(["c", "zzz"]) == [5, UNK]
    with pytest.raises(ConfigError):
        build_vocab([], 1)


def test_vocab_ties_sorted_by_token():
    assert build_vocab([["y", "x", "z", "x", "y"]], 1).itos[4:] == ["x", "y", "z"]


def test_vocab_decode_and_roundtrip(tmp_path):
    v = Vocabulary(["a", "b"])
    assert (PAD, UNK, BOS, EOS) == (0, 1, 2, 3)
    assert v.decode([BOS, 4, 5, EOS, 4]) == ["a", "b"]
    v.save(tmp_path / "v")
    assert Vocabulary.load(tmp_path / "v").itos == v.itos


def test_edge_vocab_folding():
    ev = EdgeVocabulary(["det", "nsubj"])
    assert ev.n_directed == 2 * len(ev) + 1 == 7
    assert ev.fold(5, LOOP) == 0
    seen = {0}
    for lab in range(len(ev)):
        for d in (IN, OUT):
            folded = ev.fold(lab, d)
            assert ev.unfold(folded) == (lab, d)
            seen.add(folded)
    assert seen == set(range(ev.n_directed))
    assert ev.label_id("never-seen") == 0


def test_edge_vocab_roundtrip(tmp_path):
    ev = build_edge_vocab([Example(["a", "b"], [], [(0, 1, "x"), (1, 0, "y")])])
    ev.save(tmp_path / "l")
    assert EdgeVocabulary.load(tmp_path / "l").labels == ev.labels


def test_depgraph_invariants():
    with pytest.raises(DataError):
        DepGraph(2, [(0, 2, 0)])
    with pytest.raises(DataError):
        DepGraph(2, [(1, 1, 0)])


# ------------------------------------------------------------------ synthetic generator


def test_generator_defaults_and_determinism(tmp_path):
    train, val = generate_reorder_dataset(n_train=300, n_val=50, seed=5)
    assert len(train) == 300 and len(val) == 50
    again, _ = generate_reorder_dataset(n_train=300, n_val=50, seed=5)
    write_jsonl(tmp_path / "a.jsonl", train)
    write_jsonl(tmp_path / "b.jsonl", again)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    other, _ = generate_reorder_dataset(n_train=300, n_val=0, seed=6)
    assert [e.src for e in other] != [e.src for e in train]


def test_generator_item_properties():
    train, _ = generate_reorder_dataset(n_train=2000, n_val=0, seed=2)
    lengths = set()
    for ex in train:
        n = len(ex.src)
        lengths.add(n)
        assert sorted(ex.src) == sorted(ex.tgt)
        assert set(ex.tgt) <= set("abcdefghijklmnopqrstuvwxyz")
        real = [a for a in ex.arcs if a[2].startswith("real")]
        fake = [a for a in ex.arcs if a[2].startswith("fake")]
        assert len(real) == n - 1 and len(fake) == n
        assert {lab for *_, lab in real} <= {f"real{k}" for k in range(5)}
        assert {lab for *_, lab in fake} <= {f"fake{k}" for k in range(5)}
        assert sorted(h for h, _, _ in fake) == list(range(n))
        assert all(h != d for h, d, _ in ex.arcs)
        # real arcs form a Hamiltonian path: each position is head once and dependent once, bar the ends
        heads = [h for h, _, _ in real]
        deps = [d for _, d, _ in real]
        assert len(set(heads)) == len(set(deps)) == n - 1
        assert walk_real_chain(ex) == ex.tgt
    assert lengths == set(range(3, 11))


def test_generator_identity_permutation_still_has_chain():
    train, _ = generate_reorder_dataset(n_train=400, n_val=0, len_range=(3, 3), seed=0)
    same = [ex for ex in train if ex.src == ex.tgt and len(set(ex.src)) == 3]
    assert same
    for ex in same:
        assert sorted((h, d) for h, d, lab in ex.arcs if lab.startswith("real")) == [(1, 0), (2, 1)]


def test_generator_rejects_bad_ranges():
    with pytest.raises(ConfigError):
        generate_reorder_dataset(10, 1, len_range=(1, 4))
    with pytest.raises(ConfigError):
        generate_reorder_dataset(10, 1, len_range=(5, 4))


def test_walk_real_chain_detects_broken_chain():
    with pytest.raises(DataError):
        walk_real_chain(Example(["a", "b", "c"], [], [(1, 0, "real0")]))


def test_jsonl_format(tmp_path):
    ex = Example(["b", "a"], ["a", "b"], [(0, 1, "real1"), (1, 0, "fake3")])
    write_jsonl(tmp_path / "c.jsonl", [ex])
    line = (tmp_path / "c.jsonl").read_text().strip()
    assert json.loads(line) == {"src": ["b", "a"], "tgt": ["a", "b"], "arcs": [[0, 1, "real1"], [1, 0, "fake3"]]}
    assert load_jsonl(tmp_path / "c.jsonl") == [ex]
    (tmp_path / "bad.jsonl").write_text(line + "\n{\"src\": [\"a\"], \"arcs\": [[0, 1]]}\n")
    with pytest.raises(ParseError, match=":2:"):
        load_jsonl(tmp_path / "bad.jsonl")


# ------------------------------------------------------------------ batching


def _vocabs(corpus):
    return (build_vocab([e.src for e in corpus], 1), build_vocab([e.tgt for e in corpus], 1),
            build_edge_vocab(corpus))


def test_batch_sizes_and_framing():
    corpus, _ = generate_reorder_dataset(n_train=5, n_val=0, seed=3)
    sv, tv, ev = _vocabs(corpus)
    batches = make_batches(corpus, sv, tv, ev, 2)
    assert [b.size for b in batches] == [2, 2, 1]
    for b in batches:
        for r, i in enumerate(b.indices):
            ex = corpus[i]
            n = len(ex.src)
            assert b.src_mask[r].sum() == n and b.src_mask[r, :n].all()
            assert (b.src_ids[r, n:] == PAD).all()
            framed = b.tgt_ids[r, :int(b.tgt_mask[r].sum())]
            assert framed[0] == BOS and framed[-1] == EOS
            assert tv.decode(framed) == ex.tgt
            assert b.graphs[r].n == n


def test_all_filtered_gives_empty_stream_and_warning(caplog):
    corpus = [Example(["a"] * 6, ["a"], [])]
    sv, tv, ev = _vocabs(corpus)
    with caplog.at_level(logging.WARNING):
        assert make_batches(corpus, sv, tv, ev, 2, max_len=5) == []
    assert "exceed max_len" in caplog.text


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 9), st.integers(0, 5), st.integers(3, 12))
def test_batching_is_content_preserving(n, batch_size, epoch, max_len):
    corpus, _ = generate_reorder_dataset(n_train=n, n_val=0, seed=n)
    sv, tv, ev = _vocabs(corpus)
    batches = make_batches(corpus, sv, tv, ev, batch_size, max_len=max_len, shuffle_seed=4, epoch=epoch)
    rows = [(int(i), sv.decode(b.src_ids[r, :int(b.src_mask[r].sum())], strip=False))
            for b in batches for r, i in enumerate(b.indices)]
    kept = [i for i, ex in enumerate(corpus) if len(ex.src) <= max_len and len(ex.tgt) <= max_len]
    assert sorted(i for i, _ in rows) == kept
    for i, toks in rows:
        assert toks == corpus[i].src
    again = make_batches(corpus, sv, tv, ev, batch_size, max_len=max_len, shuffle_seed=4, epoch=epoch)
    assert [list(b.indices) for b in again] == [list(b.indices) for b in batches]


def test_shuffle_changes_with_epoch():
    corpus, _ = generate_reorder_dataset(n_train=50, n_val=0, seed=1)
    sv, tv, ev = _vocabs(corpus)
    order = lambda e: [int(i) for b in make_batches(corpus, sv, tv, ev, 50, shuffle_seed=1, epoch=e)  # noqa: E731
                       for i in b.indices]
    assert order(1) != order(2) and sorted(order(1)) == list(range(50))
    assert order(1) == order(1)
    assert make_batches(corpus, sv, tv, ev, 50)[0].indices.tolist() == list(range(50))


def test_batch_size_must_be_positive():
    with pytest.raises(ConfigError):
        make_batches([], None, None, None, 0)
