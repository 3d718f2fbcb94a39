"""Hot inner loops: sequence composition over packed token arrays and the
averaged-perceptron epoch.

Each kernel has a vectorized numpy implementation and a loop implementation
compiled with ``numba.njit``.  The numba path is used when numba imports and
the environment variable ``CVSM_DISABLE_NUMBA`` is not set to a true value.

Packed sequences: ``tokens`` is a flat int64 array of row ids into ``table``
and ``offsets`` (length S+1) delimits the S sequences.  Sequences are never
empty.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _flag("CVSM_DISABLE_NUMBA")


def pack(seqs):
    """Pack a list of int sequences into (tokens, offsets)."""
    lengths = np.fromiter((len(s) for s in seqs), dtype=np.int64, count=len(seqs))
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    if len(seqs):
        tokens = np.concatenate([np.asarray(s, dtype=np.int64) for s in seqs])
    else:
        tokens = np.zeros(0, dtype=np.int64)
    return tokens, offsets


# ---------------------------------------------------------------------------
# numpy implementations


def _segment_ids(offsets, n_tokens):
    return np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))


def _add_forward_np(table, tokens, offsets):
    if len(offsets) == 1:
        return np.zeros((0, table.shape[1]))
    return np.add.reduceat(table[tokens], offsets[:-1], axis=0)


def _add_backward_np(grad_table, tokens, offsets, delta):
    rows = np.repeat(delta, np.diff(offsets), axis=0)
    np.add.at(grad_table, tokens, rows)


def _bi_forward_np(table, tokens, offsets):
    x = table[tokens]
    prev = np.zeros_like(x)
    prev[1:] = x[:-1]
    prev[offsets[:-1]] = 0.0
    act = np.tanh(x + prev)
    if len(offsets) == 1:
        return np.zeros((0, table.shape[1])), act
    return np.add.reduceat(act, offsets[:-1], axis=0), act


def _bi_backward_np(grad_table, tokens, offsets, act, delta):
    g = np.repeat(delta, np.diff(offsets), axis=0) * (1.0 - act * act)
    gx = g.copy()
    nxt = g[1:].copy()
    # the successor term only applies inside a segment
    starts = offsets[1:-1]
    nxt[starts - 1] = 0.0
    gx[:-1] += nxt
    np.add.at(grad_table, tokens, gx)


def _perceptron_epoch_np(weights, weight_sum, x, y, order, lr):
    mistakes = 0
    for i in order:
        scores = weights @ x[i]
        pred = int(np.argmax(scores))
        if pred != y[i]:
            weights[y[i]] += lr * x[i]
            weights[pred] -= lr * x[i]
            mistakes += 1
        weight_sum += weights
    return mistakes


# ---------------------------------------------------------------------------
# loop implementations (compiled by numba when available)


def _add_forward_loop(table, tokens, offsets):
    n_seq = offsets.shape[0] - 1
    d = table.shape[1]
    out = np.zeros((n_seq, d))
    for s in range(n_seq):
        for t in range(offsets[s], offsets[s + 1]):
            row = tokens[t]
            for j in range(d):
                out[s, j] += table[row, j]
    return out


def _add_backward_loop(grad_table, tokens, offsets, delta):
    n_seq = offsets.shape[0] - 1
    d = grad_table.shape[1]
    for s in range(n_seq):
        for t in range(offsets[s], offsets[s + 1]):
            row = tokens[t]
            for j in range(d):
                grad_table[row, j] += delta[s, j]


def _bi_forward_loop(table, tokens, offsets):
    n_seq = offsets.shape[0] - 1
    d = table.shape[1]
    out = np.zeros((n_seq, d))
    act = np.empty((tokens.shape[0], d))
    for s in range(n_seq):
        start = offsets[s]
        for t in range(start, offsets[s + 1]):
            row = tokens[t]
            for j in range(d):
                z = table[row, j]
                if t > start:
                    z += table[tokens[t - 1], j]
                a = np.tanh(z)
                act[t, j] = a
                out[s, j] += a
    return out, act


def _bi_backward_loop(grad_table, tokens, offsets, act, delta):
    n_seq = offsets.shape[0] - 1
    d = grad_table.shape[1]
    for s in range(n_seq):
        start = offsets[s]
        for t in range(start, offsets[s + 1]):
            row = tokens[t]
            for j in range(d):
                a = act[t, j]
                g = delta[s, j] * (1.0 - a * a)
                grad_table[row, j] += g
                if t > start:
                    grad_table[tokens[t - 1], j] += g


def _perceptron_epoch_loop(weights, weight_sum, x, y, order, lr):
    n_labels, d = weights.shape
    mistakes = 0
    for i in order:
        best = 0
        best_score = -np.inf
        for c in range(n_labels):
            sc = 0.0
            for j in range(d):
                sc += weights[c, j] * x[i, j]
            if sc > best_score:
                best_score = sc
                best = c
        gold = y[i]
        if best != gold:
            for j in range(d):
                weights[gold, j] += lr * x[i, j]
                weights[best, j] -= lr * x[i, j]
            mistakes += 1
        for c in range(n_labels):
            for j in range(d):
                weight_sum[c, j] += weights[c, j]
    return mistakes


numpy_impl = SimpleNamespace(
    add_forward=_add_forward_np,
    add_backward=_add_backward_np,
    bi_forward=_bi_forward_np,
    bi_backward=_bi_backward_np,
    perceptron_epoch=_perceptron_epoch_np,
)

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    numba_impl = SimpleNamespace(
        add_forward=_jit(_add_forward_loop),
        add_backward=_jit(_add_backward_loop),
        bi_forward=_jit(_bi_forward_loop),
        bi_backward=_jit(_bi_backward_loop),
        perceptron_epoch=_jit(_perceptron_epoch_loop),
    )
else:  # pragma: no cover
    numba_impl = None

_active = numba_impl if USE_NUMBA else numpy_impl


def backend() -> str:
    return "numba" if _active is numba_impl else "numpy"


def _contig(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype)


def add_forward(table, tokens, offsets):
    return _active.add_forward(_contig(table, np.float64), _contig(tokens, np.int64), _contig(offsets, np.int64))


def add_backward(grad_table, tokens, offsets, delta):
    _active.add_backward(grad_table, _contig(tokens, np.int64), _contig(offsets, np.int64), _contig(delta, np.float64))


def bi_forward(table, tokens, offsets):
    return _active.bi_forward(_contig(table, np.float64), _contig(tokens, np.int64), _contig(offsets, np.int64))


def bi_backward(grad_table, tokens, offsets, act, delta):
    _active.bi_backward(
        grad_table, _contig(tokens, np.int64), _contig(offsets, np.int64),
        _contig(act, np.float64), _contig(delta, np.float64),
    )


def perceptron_epoch(weights, weight_sum, x, y, order, lr):
    return int(_active.perceptron_epoch(
        weights, weight_sum, _contig(x, np.float64), _contig(y, np.int64), _contig(order, np.int64), float(lr)
    ))
