"""Time the numba kernels against their numpy fallbacks.

Kernel timings run in-process.  The end-to-end timing (one epoch-slice of
GCN training steps) starts a subprocess per backend because the backend is
chosen at import time from ``SGCN_NUMBA``.

    python benchmarks/bench_kernels.py [--repeat 20] [--no-e2e]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from sgcn import kernels

E2E_SNIPPET = r"""
import json, time
from sgcn import kernels
from sgcn.config import RunConfig
from sgcn.data import generate_reorder_dataset, make_batches
from sgcn.train import TrainConfig, build_model, train_epoch
from sgcn.optim import Adam
train, _ = generate_reorder_dataset(n_train={n}, n_val=1, seed=1)
cfg = RunConfig(encoder="birnn", emb_dim=32, hidden_dim=64, gcn_layers=2, max_pos=10, dec_emb_dim=32,
                dec_hidden_dim=64, attn_dim=64, train_data="-", dropout=0.0, edge_dropout=0.0)
model = build_model(cfg, train)
batches = make_batches(train, model.src_vocab, model.tgt_vocab, model.edge_vocab, 80)
tc = TrainConfig(lr=0.001)
opt = Adam(lr=tc.lr)
train_epoch(model, batches[:2], opt, tc, 0)  # warm-up (JIT compile / cache load)
t0 = time.perf_counter()
train_epoch(model, batches, opt, tc, 1)
print(json.dumps({{"backend": kernels.backend(), "seconds": time.perf_counter() - t0}}))
"""


def bench(fn, args, repeat):
    fn(*args)  # compile / warm caches
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n_edges, width, n_rows in ((600, 64, 200), (4000, 128, 800), (20000, 128, 4000)):
        values = rng.normal(size=(n_edges, width)).astype(np.float32)
        index = rng.integers(0, n_rows, n_edges)
        a = kernels.scatter_add_rows_numpy(values, index, n_rows)
        b = kernels.scatter_add_rows_numba(values, index, n_rows)
        assert np.allclose(a, b, atol=1e-4)
        rows.append(("scatter_add_rows", f"{n_edges}x{width}->{n_rows}",
                     bench(kernels.scatter_add_rows_numpy, (values, index, n_rows), repeat),
                     bench(kernels.scatter_add_rows_numba, (values, index, n_rows), repeat)))
    for n in (10, 50, 200):
        perm = rng.permutation(n)
        assert kernels.count_inversions_numpy(perm) == kernels.count_inversions_numba(perm)
        rows.append(("count_inversions", f"n={n}", bench(kernels.count_inversions_numpy, (perm,), repeat),
                     bench(kernels.count_inversions_numba, (perm,), repeat)))
    return rows


def e2e(flag, n):
    env = dict(os.environ, SGCN_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", E2E_SNIPPET.format(n=n)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--e2e-sentences", type=int, default=2000)
    ap.add_argument("--no-e2e", action="store_true")
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        sys.exit("numba is unavailable (or SGCN_NUMBA=0); nothing to compare")

    print(f"{'kernel':<18} {'size':<20} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, size, t_np, t_nb in kernel_rows(args.repeat):
        print(f"{name:<18} {size:<20} {1e3 * t_np:>10.3f} {1e3 * t_nb:>10.3f} {t_np / t_nb:>7.1f}x")
    if not args.no_e2e:
        res = {flag: e2e(flag, args.e2e_sentences) for flag in ("0", "1")}
        t_np, t_nb = res["0"]["seconds"], res["1"]["seconds"]
        print(f"\ntraining epoch, {args.e2e_sentences} sentences, BiGRU + 2 GCN layers:")
        print(f"  numpy {t_np:.2f}s   numba {t_nb:.2f}s   speedup {t_np / t_nb:.2f}x")


if __name__ == "__main__":
    main()
