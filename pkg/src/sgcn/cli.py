"""Command-line entry point: ``sgcn <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (including a failed gradient check).
"""
import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .config import apply_overrides, load_config, parse_config_text, preset_path
from .errors import ConfigError, DataError, SgcnError

SEED_ENV = "SGCN_SEED"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def env_seed(default=1):
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


def resolve_seed(flag):
    return flag if flag is not None else env_seed()


# ------------------------------------------------------------------ gen-synthetic


def cmd_gen_synthetic(args):
    from .data import generate_reorder_dataset, write_jsonl

    if args.train < 1 or args.val < 0:
        raise ConfigError("--train must be >= 1 and --val >= 0")
    if not 2 <= args.min_len <= args.max_len:
        raise ConfigError(f"need 2 <= --min-len <= --max-len, got {args.min_len}..{args.max_len}")
    if args.vocab < 1 or args.real_labels < 1 or args.fake_labels < 1:
        raise ConfigError("--vocab, --real-labels and --fake-labels must be positive")
    seed = resolve_seed(args.seed)
    train, val = generate_reorder_dataset(args.train, args.val, (args.min_len, args.max_len), args.vocab,
                                          args.real_labels, args.fake_labels, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "train.jsonl", train)
    write_jsonl(out / "val.jsonl", val)
    print(f"wrote {len(train)} training and {len(val)} validation sequences to {out} (seed {seed})")
    return EXIT_OK


# ------------------------------------------------------------------ train


def _train_config(args):
    if args.config and args.preset:
        raise ConfigError("give a config file or --preset, not both")
    if not args.config and not args.preset:
        raise ConfigError("train needs a config file or --preset NAME")
    path = Path(args.config) if args.config else preset_path(args.preset)
    cfg = load_config(path)
    explicit = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    if "seed" not in explicit:
        cfg = apply_overrides(cfg, [f"seed={env_seed(cfg.seed)}"])
    overrides = list(args.set or [])
    if args.epochs is not None:
        overrides.append(f"epochs={args.epochs}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.run_dir:
        overrides.append(f"run_dir={args.run_dir}")
    return apply_overrides(cfg, overrides).validate()


def cmd_train(args):
    from .train import run_training

    cfg = _train_config(args)
    model, _, log = run_training(cfg, cfg.run_dir, resume=args.resume, log_fn=print)
    best = log.best
    if best is not None:
        print(f"best epoch {best.epoch}: bleu4 {best.bleu4:.2f} -> {Path(cfg.run_dir) / 'best.ckpt'}")
    return EXIT_OK


# ------------------------------------------------------------------ translate


def _read_graph_input(src_path, graph_path):
    from .data import Example, load_conllu, load_jsonl, read_lines

    if graph_path is None:
        return [Example(toks, [], []) for toks in read_lines(src_path)]
    if str(graph_path).endswith(".jsonl"):
        graphs = [(ex.src, ex.arcs) for ex in load_jsonl(graph_path)]
    else:
        graphs = load_conllu(graph_path)
    if src_path is None:
        return [Example(list(toks), [], list(arcs)) for toks, arcs in graphs]
    lines = read_lines(src_path)
    if len(lines) != len(graphs):
        raise DataError(f"{src_path} has {len(lines)} lines but {graph_path} has {len(graphs)} graphs")
    out = []
    for i, (toks, (gtoks, arcs)) in enumerate(zip(lines, graphs), start=1):
        if len(toks) != len(gtoks):
            raise DataError(f"line {i}: {len(toks)} tokens but the graph covers {len(gtoks)}")
        out.append(Example(toks, [], list(arcs)))
    return out


def cmd_translate(args):
    from .model import load_model

    model = load_model(args.ckpt)
    if args.src is None and args.graphs is None:
        raise ConfigError("translate needs --src and/or --graphs")
    if model.has_gcn and args.graphs is None:
        raise ConfigError(f"{args.ckpt} has {model.enc_config.gcn_layers} GCN layer(s); pass --graphs")
    corpus = _read_graph_input(args.src, args.graphs)
    hyps = model.translate(corpus, batch_size=args.batch_size)
    text = "".join(" ".join(h) + "\n" for h in hyps)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ------------------------------------------------------------------ eval


def _read_tokenized(path):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not lines:
        raise DataError(f"{path} is empty")
    return [line.split() for line in lines]


def cmd_eval(args):
    from .metrics import bleu_by_length, evaluate

    hyps = _read_tokenized(args.hyp)
    refs = _read_tokenized(args.ref)
    if len(hyps) != len(refs):
        raise DataError(f"{args.hyp} has {len(hyps)} lines but {args.ref} has {len(refs)}")
    result = evaluate(hyps, refs)
    print(json.dumps(result, sort_keys=True))
    if args.by_length:
        rows = bleu_by_length(hyps, refs, args.buckets)
        with open(args.by_length, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK


# ------------------------------------------------------------------ grad-check


def _parse_corrupt(items):
    out = {}
    for item in items or ():
        op, _, factor = item.partition("=")
        try:
            out[op] = float(factor) if factor else 1.5
        except ValueError:
            raise ConfigError(f"--corrupt expects op[=factor], got {item!r}") from None
    return out


def cmd_grad_check(args):
    from .gradcheck import SUITE, check_suite

    names = args.case or list(SUITE)
    reports = check_suite(names, eps=args.eps, tol=args.tol, seed=resolve_seed(args.seed),
                          corrupt=_parse_corrupt(args.corrupt), max_coords=args.max_coords)
    ok = True
    for name, report in reports.items():
        print(f"[{name}] {report.summary()}")
        ok &= report.passed
    print("grad-check: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_NUMERIC


# ------------------------------------------------------------------ gate-report


def cmd_gate_report(args):
    from .checkpoint import load_checkpoint
    from .data import EdgeVocabulary
    from .metrics import gate_bias_report, labels_by_prefix
    from .model import LABEL_VOCAB

    ckpt = Path(args.ckpt)
    if ckpt.is_dir():
        ckpt = ckpt / "best.ckpt"
    arrays = load_checkpoint(ckpt)
    label_file = ckpt.parent / LABEL_VOCAB
    if args.real_ids or args.fake_ids:
        real = [int(x) for x in args.real_ids.split(",")] if args.real_ids else []
        fake = [int(x) for x in args.fake_ids.split(",")] if args.fake_ids else []
        n_labels = len(EdgeVocabulary.load(label_file)) if label_file.is_file() else None
    else:
        if not label_file.is_file():
            raise ConfigError(f"{label_file} not found; pass --real-ids/--fake-ids")
        edge_vocab = EdgeVocabulary.load(label_file)
        real, fake = labels_by_prefix(edge_vocab, args.real_prefix, args.fake_prefix)
        n_labels = len(edge_vocab)
    means = gate_bias_report(arrays, real, fake, n_labels)
    means["difference"] = means["real"] - means["fake"]
    print(json.dumps(means, sort_keys=True))
    per_epoch = ckpt.parent / "gate_bias.csv"
    if args.csv:
        if not per_epoch.is_file():
            raise DataError(f"{per_epoch} not found; per-epoch rows are written during training")
        Path(args.csv).write_text(per_epoch.read_text(encoding="utf-8"), encoding="utf-8")
    return EXIT_OK


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="sgcn", description="Seq2seq translation with syntactic GCN encoders.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-synthetic", help="write the permuted-sequence reordering corpus as JSONL")
    g.add_argument("--out", default="data/synthetic")
    g.add_argument("--train", type=int, default=25000)
    g.add_argument("--val", type=int, default=1000)
    g.add_argument("--min-len", type=int, default=3)
    g.add_argument("--max-len", type=int, default=10)
    g.add_argument("--vocab", type=int, default=26)
    g.add_argument("--real-labels", type=int, default=5)
    g.add_argument("--fake-labels", type=int, default=5)
    g.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 1")
    g.set_defaults(func=cmd_gen_synthetic)

    t = sub.add_parser("train", help="train a model from a config file or preset")
    t.add_argument("config", nargs="?")
    t.add_argument("--preset")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--run-dir")
    t.add_argument("--resume", action="store_true", help="continue from last.ckpt in the run directory")
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("translate", help="greedy-decode a source file with a checkpoint")
    tr.add_argument("ckpt")
    tr.add_argument("--src", help="whitespace-tokenized source, one sentence per line")
    tr.add_argument("--graphs", help="CoNLL-U parses or JSONL graphs aligned with the source")
    tr.add_argument("--out")
    tr.add_argument("--batch-size", type=int, default=100)
    tr.set_defaults(func=cmd_translate)

    e = sub.add_parser("eval", help="BLEU-1/4 and Kendall tau of hypotheses against references")
    e.add_argument("hyp")
    e.add_argument("ref")
    e.add_argument("--by-length", metavar="CSV", help="write per-length-bucket BLEU")
    e.add_argument("--buckets", type=int, default=5)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("grad-check", help="finite-difference check of every encoder variant and the decoder")
    c.add_argument("--case", action="append", help="restrict to one miniature (repeatable)")
    c.add_argument("--eps", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-3)
    c.add_argument("--max-coords", type=int, default=40)
    c.add_argument("--seed", type=int)
    c.add_argument("--corrupt", action="append", metavar="OP[=FACTOR]",
                   help="test hook: scale the backward of OP to show the check fails")
    c.set_defaults(func=cmd_grad_check)

    r = sub.add_parser("gate-report", help="mean gate bias of real vs fake labels")
    r.add_argument("ckpt", help="checkpoint file or run directory")
    r.add_argument("--real-prefix", default="real")
    r.add_argument("--fake-prefix", default="fake")
    r.add_argument("--real-ids")
    r.add_argument("--fake-ids")
    r.add_argument("--csv", help="copy the per-epoch gate-bias log here")
    r.set_defaults(func=cmd_gate_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, usage errors exit EXIT_USAGE
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SgcnError as exc:
        print(f"sgcn {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"sgcn {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"sgcn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA

