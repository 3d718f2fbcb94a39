"""Primary acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line; the same lines are
repeated in the pytest terminal summary.  Run standalone with
``python3 tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

from cvsm.bicvm import BicvmModel, hinge_energy, bi_energy, train_bicvm
from cvsm.compose import (
    CcaeComposer,
    CcaeModel,
    CcgInventory,
    LabeledTree,
    add_compose,
    bi_compose,
    ccae_encode,
    predict_label,
    train_ccae,
)
from cvsm.evalkit import cldc_evaluate, euclidean, mahalanobis, perceptron_train
from cvsm.frameid import WsabieModel, estimate_rank, predict_frame_vector, sample_violation
from cvsm.gradsuite import OBJECTIVES, build_instance
from cvsm.lexicon import EmbeddingTable
from cvsm.optimize import AdaGrad, grad_check, lbfgs_minimize
from cvsm.shell.checkpoint import load_checkpoint, save_checkpoint
from cvsm.toydata import cipher_corpus, sentiment_trees
from cvsm.treegrad import parse_tree

RESULTS = []


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# 1 ----------------------------------------------------------------------------


def test_gradient_suite():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {}
    for name in OBJECTIVES:
        worst[name] = 0.0
        for _ in range(20):
            f, theta, coords = build_instance(name, rng, dim=4)
            worst[name] = max(worst[name], grad_check(f, theta, eps=1e-5, coords=coords))
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 120.0
    report("gradient-suite", ok,
           f"objectives={len(worst)} instances=20 dim=4 max_rel_error={worst[top]:.2e} ({top}) wall={elapsed:.1f}s")


# 2 ----------------------------------------------------------------------------


def _true_rank(pos_score, neg_scores, margin):
    return int(np.sum(margin + neg_scores - pos_score > 0))


def test_warp_oracle():
    rng = np.random.default_rng(7)
    F, m, kn, trials = 10, 6, 12, 10_000
    model = WsabieModel(rng.normal(size=(m, kn)), rng.normal(size=(F, m)), 0.5, [f"F{i}" for i in range(F)], {})
    u = model.M @ rng.normal(size=kn)
    s = model.Y @ u
    order = np.argsort(-s)
    means, ranks = [], []
    # picking each frame as gold gives every violation rank from 0 to F-1
    for gold in order:
        neg = np.delete(s, gold)
        r = _true_rank(s[gold], neg, model.margin)
        est = []
        for _ in range(trials):
            n, hit = sample_violation(s[gold], neg, model.margin, rng)
            est.append(estimate_rank(F, n) if hit is not None else 0)
        ranks.append(r)
        means.append(float(np.mean(est)))
    by_rank = sorted(zip(ranks, means))
    monotone = all(b[1] >= a[1] for a, b in zip(by_rank, by_rank[1:]))

    mismatches = 0
    for _ in range(1000):
        M, Y = rng.normal(size=(4, 8)), rng.normal(size=(F, 4))
        lex = {"lu": sorted(rng.choice(F, size=int(rng.integers(1, F + 1)), replace=False).tolist())}
        wm = WsabieModel(M, Y, 0.01, [f"F{i}" for i in range(F)], lex)
        x = rng.normal(size=8)
        scores = [float(Y[f] @ (M @ x)) for f in range(F)]
        for lu, cands in (("lu", lex["lu"]), ("unseen", list(range(F)))):
            best = max(cands, key=lambda f: (scores[f], -f))
            mismatches += predict_frame_vector(x, lu, wm) != best
    detail = "ranks=" + ",".join(str(r) for r, _ in by_rank) + " means=" + ",".join(f"{v:.2f}" for _, v in by_rank)
    report("warp-oracle", monotone and mismatches == 0, f"{detail} predict_mismatches={mismatches}/2000")


# 3 ----------------------------------------------------------------------------


def test_bicvm_toy_cldc():
    t0 = time.perf_counter()
    data = cipher_corpus(n_topics=2, docs_per_topic=100, sentences_per_doc=5, vocab_size=200, seed=1)
    docs = data.docs
    model = BicvmModel.create({"A": data.vocab_a, "B": data.vocab_b}, 16, np.random.default_rng(42),
                              margin=16.0, noise=5, lam=1.0, default_composer="add")
    train_bicvm(docs.sentence_pairs(), model, "single", AdaGrad(0.05), epochs=50, batch_size=10,
                rng=np.random.default_rng(43))
    labels = [ls[0] for ls in docs.labels]
    res = cldc_evaluate(docs.a_docs[:100], labels[:100], docs.b_docs[100:], labels[100:], model, "A", "B",
                        rng=np.random.default_rng(44))
    elapsed = time.perf_counter() - t0
    majority = max(labels[100:].count(l) for l in set(labels)) / 100
    ok = res.accuracy >= 0.90 and elapsed < 60.0
    report("bicvm-toy-cldc", ok, f"accuracy={res.accuracy:.3f} majority={majority:.2f} wall={elapsed:.1f}s")


# 4 ----------------------------------------------------------------------------


def test_ccae_toy_sentiment():
    trees, labels, vocab = sentiment_trees(200, vocab_size=40, seed=0)
    comp = CcaeComposer("B", 8)
    params = comp.init_params(np.random.default_rng(5), len(vocab))
    model = CcaeModel(comp, params, vocab)
    corpus = [LabeledTree(model.bind(t), y) for t, y in zip(trees, labels)]
    res = train_ccae(corpus, comp, params, alpha=0.2, lam=1e-4, max_iter=200)
    correct = sum(bool((predict_label(it.tree, comp, res.theta)[0] > 0.5) == (it.label[0] > 0.5)) for it in corpus)
    acc = correct / len(corpus)

    # same words and bracketing, different combinators
    rng = np.random.default_rng(6)
    inv = CcgInventory.default()
    t1 = parse_tree("(FA:NP (lex:N/N w1) (BA:N (lex:N w2) (lex:N\\N w3)))")
    t2 = parse_tree("(BA:NP (lex:N/N w1) (FA:N (lex:N w2) (lex:N\\N w3)))")
    enc = {}
    for name in "AB":
        c = CcaeComposer(name, 8, inv)
        m = CcaeModel(c, c.init_params(rng, len(vocab)), vocab)
        enc[name] = (m.encode(t1), m.encode(t2))
    a_same = np.array_equal(*enc["A"])
    b_differ = not np.allclose(*enc["B"])
    ok = acc >= 0.95 and res.n_iter <= 200 and a_same and b_differ
    report("ccae-toy-sentiment", ok,
           f"train_accuracy={acc:.3f} iterations={res.n_iter} rule_swap: A_equal={a_same} B_differs={b_differ}")


# 5 ----------------------------------------------------------------------------


def _invariants():
    rng = np.random.default_rng(11)
    checks = {}

    table = EmbeddingTable([f"w{i}" for i in range(10)], rng.normal(size=(10, 4)))
    sent = list(rng.integers(0, 10, size=6))
    checks["add-permutation"] = all(
        np.allclose(add_compose(list(rng.permutation(sent)), table), add_compose(sent, table), atol=1e-12)
        for _ in range(50))
    witness = [0, 1, 2, 3]
    checks["bi-order-witness"] = not np.allclose(bi_compose(witness, table), bi_compose([0, 2, 1, 3], table))

    ok = True
    for _ in range(200):
        vocab = {l: [f"{l}{i}" for i in range(6)] for l in "ab"}
        margin = float(rng.uniform(0.1, 5))
        m = BicvmModel.create(vocab, 3, rng, sigma2=1.0, margin=margin)
        a, b, n = (list(rng.integers(0, 6, size=3)) for _ in range(3))
        h = hinge_energy(a, b, n, m, "a", "b")
        gap = bi_energy(a, n, m, "a", "b") - bi_energy(a, b, m, "a", "b")
        ok &= h >= 0 and (h == 0) == (gap >= margin)
        ok &= abs(hinge_energy(a, b, b, m, "a", "b") - margin) <= 1e-12 * max(1.0, margin)
    checks["hinge-nonneg-clamp"] = bool(ok)

    g = rng.normal(size=20)
    g[3] = 0.0
    theta = rng.normal(size=20)
    step = AdaGrad(0.05).step(theta, g) - theta
    checks["adagrad-first-step"] = bool(np.array_equal(np.sign(step), -np.sign(g))
                                        and np.allclose(np.abs(step[g != 0]), 0.05, rtol=1e-6))

    bound = True
    for model in "ABCD":
        c = CcaeComposer(model, 5)
        p = c.init_params(rng, 2, sigma2=1.0)
        for _ in range(50):
            out = ccae_encode(3 * rng.normal(size=5), 3 * rng.normal(size=5), "FA", "NP", ("N", "S[dcl]"), model, p)
            bound &= bool(np.all(np.abs(out) <= 1.0))
    checks["ccae-tanh-range"] = bound

    checks["mahalanobis-identity"] = all(
        abs(mahalanobis(x, y, np.eye(4)) - euclidean(x, y)) <= 1e-12 * max(1.0, euclidean(x, y))
        for x, y in (rng.normal(size=(2, 4)) for _ in range(100)))

    X = np.array([[1, 2], [2, 1], [2, 3], [3, 2], [-1, -2], [-2, -1], [-2, -3], [-3, -1]], float)
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    checks["perceptron-separable"] = any(
        np.all(perceptron_train(X, y, epochs=e, rng=np.random.default_rng(0)).predict(X) == y) for e in range(1, 11))

    import tempfile
    import os

    model = BicvmModel.create({"a": ["x", "y"], "b": ["z"]}, 6, rng)
    model.tables["a"].vectors[:] = rng.normal(size=(3, 6)) * 10.0 ** rng.integers(-300, 300, size=(3, 6))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.ck")
        save_checkpoint(model, path)
        back, _ = load_checkpoint(path)
    checks["checkpoint-bit-exact"] = all(
        back.tables[l].vectors.tobytes() == model.tables[l].vectors.tobytes() for l in model.tables)
    return checks


def test_invariant_suite():
    first = _invariants()
    second = _invariants()
    failed = [k for k, v in first.items() if not v]
    deterministic = first == second
    report("invariant-suite", not failed and deterministic,
           f"checks={len(first)} failed={failed or 'none'} deterministic={deterministic}")


# 6 ----------------------------------------------------------------------------


def _rosenbrock(t):
    x, y = t
    f = (1 - x) ** 2 + 100 * (y - x * x) ** 2
    return f, np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])


def test_lbfgs_rosenbrock():
    res = lbfgs_minimize(_rosenbrock, np.array([-1.2, 1.0]), max_iter=200, tol=1e-10)
    err = float(np.max(np.abs(res.theta - 1.0)))
    report("lbfgs-rosenbrock", err < 1e-4 and res.n_iter <= 200,
           f"distance={err:.2e} iterations={res.n_iter} status={res.status}")


if __name__ == "__main__":
    import sys

    failures = 0
    for fn in (test_gradient_suite, test_warp_oracle, test_bicvm_toy_cldc, test_ccae_toy_sentiment,
               test_invariant_suite, test_lbfgs_rosenbrock):
        try:
            fn()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
