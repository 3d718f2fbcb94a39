"""Time the numba kernels against the numpy fallback on synthetic data.

    python3 benchmarks/bench_kernels.py [--sentences 20000] [--dim 128] [--repeat 5]

Both backends are called directly, so the ``CVSM_DISABLE_NUMBA`` flag does not
matter here.  Outputs are compared before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cvsm import _kernels as K


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _cases(args, rng):
    vocab = 5000
    table = rng.normal(0.0, 0.1, (vocab, args.dim))
    lengths = rng.integers(3, 30, args.sentences)
    seqs = [rng.integers(0, vocab, n) for n in lengths]
    tokens, offsets = K.pack(seqs)
    delta = rng.normal(size=(args.sentences, args.dim))
    n_pts, n_labels = 2000, 4
    x = rng.normal(size=(n_pts, args.dim))
    y = rng.integers(0, n_labels, n_pts)
    order = rng.permutation(n_pts)

    def add_fwd(impl):
        return lambda: impl.add_forward(table, tokens, offsets)

    def add_bwd(impl):
        def run():
            g = np.zeros_like(table)
            impl.add_backward(g, tokens, offsets, delta)
            return g
        return run

    def bi_fwd(impl):
        return lambda: impl.bi_forward(table, tokens, offsets)[0]

    def bi_bwd(impl):
        act = impl.bi_forward(table, tokens, offsets)[1]

        def run():
            g = np.zeros_like(table)
            impl.bi_backward(g, tokens, offsets, act, delta)
            return g
        return run

    def perceptron(impl):
        def run():
            w = np.zeros((n_labels, args.dim))
            ws = np.zeros_like(w)
            impl.perceptron_epoch(w, ws, x, y, order, 1.0)
            return ws
        return run

    return {"add_forward": add_fwd, "add_backward": add_bwd, "bi_forward": bi_fwd,
            "bi_backward": bi_bwd, "perceptron_epoch": perceptron}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sentences", type=int, default=20000)
    ap.add_argument("--dim", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if K.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")

    cases = _cases(args, np.random.default_rng(args.seed))
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, make in cases.items():
        np_fn, nb_fn = make(K.numpy_impl), make(K.numba_impl)
        ref, got = np_fn(), nb_fn()  # also triggers compilation
        if not np.allclose(ref, got, rtol=1e-10, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_np, t_nb = _best(np_fn, args.repeat), _best(nb_fn, args.repeat)
        print(f"{name:<18}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
