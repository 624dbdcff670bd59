"""Regenerate the 50-pair toy English->German corpus shipped under ``sgcn/presets/toy_mt``.

Word order differences (verb-second after a fronted adverb, sentence-final
negation) and determiner agreement with the governing noun make the
dependency arcs informative for translation.
"""
import argparse
from pathlib import Path

import numpy as np

NOUNS = {  # english: (german, gender)
    "dog": ("hund", "m"), "cat": ("katze", "f"), "house": ("haus", "n"), "man": ("mann", "m"),
    "woman": ("frau", "f"), "child": ("kind", "n"), "car": ("auto", "n"), "book": ("buch", "n"),
    "teacher": ("lehrer", "m"), "garden": ("garten", "m"), "bird": ("vogel", "m"), "door": ("tuer", "f"),
}
ADJS = {"big": "gross", "small": "klein", "old": "alt", "red": "rot"}
VERBS = {"sees": "sieht", "likes": "mag", "finds": "findet", "buys": "kauft", "paints": "malt"}
FRONT = {"yesterday": "gestern", "today": "heute"}
DET = {("the", "nom"): {"m": "der", "f": "die", "n": "das"}, ("the", "acc"): {"m": "den", "f": "die", "n": "das"},
       ("a", "nom"): {"m": "ein", "f": "eine", "n": "ein"}, ("a", "acc"): {"m": "einen", "f": "eine", "n": "ein"}}


def noun_phrase(rng, case):
    det = "the" if rng.random() < 0.6 else "a"
    noun = str(rng.choice(sorted(NOUNS)))
    adj = str(rng.choice(sorted(ADJS))) if rng.random() < 0.4 else None
    de_noun, gender = NOUNS[noun]
    en = [det] + ([adj] if adj else []) + [noun]
    de = [DET[det, case][gender]] + ([ADJS[adj]] if adj else []) + [de_noun]
    return en, de


def sentence(rng):
    """Return ``(english, german, rows)`` with rows ``(id, form, head, deprel)``, 1-based."""
    subj_en, subj_de = noun_phrase(rng, "nom")
    obj_en, obj_de = noun_phrase(rng, "acc")
    verb = str(rng.choice(sorted(VERBS)))
    front = str(rng.choice(sorted(FRONT))) if rng.random() < 0.3 else None
    never = rng.random() < 0.3
    en, rows = [], []

    def add_np(tokens, head_of_np):
        start = len(en)
        noun_id = start + len(tokens)
        for k, tok in enumerate(tokens[:-1]):
            rel = "det" if k == 0 else "amod"
            rows.append((start + k + 1, tok, noun_id, rel))
        rows.append((noun_id, tokens[-1], None, head_of_np))
        en.extend(tokens)
        return noun_id

    if front:
        en.append(front)
        rows.append((1, front, None, "advmod"))
    subj_id = add_np(subj_en, "nsubj")
    if never:
        en.append("never")
        rows.append((len(en), "never", None, "advmod"))
    en.append(verb)
    verb_id = len(en)
    rows.append((verb_id, verb, 0, "root"))
    add_np(obj_en, "obj")
    rows = [(i, form, verb_id if head is None else head, rel) for i, form, head, rel in rows]

    de_verb = VERBS[verb]
    if front:
        de = [FRONT[front], de_verb] + subj_de + obj_de
    else:
        de = subj_de + [de_verb] + obj_de
    if never:
        de.append("nie")
    return en, de, rows


def conllu_block(rows):
    lines = [f"{i}\t{form}\t_\t_\t_\t_\t{head}\t{rel}\t_\t_" for i, form, head, rel in rows]
    return "\n".join(lines) + "\n\n"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/sgcn/presets/toy_mt"))
    ap.add_argument("-n", type=int, default=50)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    seen, pairs = set(), []
    while len(pairs) < args.n:
        en, de, rows = sentence(rng)
        if " ".join(en) in seen:
            continue
        seen.add(" ".join(en))
        pairs.append((en, de, rows))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "train.en").write_text("".join(" ".join(en) + "\n" for en, _, _ in pairs), encoding="utf-8")
    (out / "train.de").write_text("".join(" ".join(de) + "\n" for _, de, _ in pairs), encoding="utf-8")
    (out / "train.conllu").write_text("".join(conllu_block(rows) for _, _, rows in pairs), encoding="utf-8")
    print(f"wrote {len(pairs)} pairs to {out}")


if __name__ == "__main__":
    main()
