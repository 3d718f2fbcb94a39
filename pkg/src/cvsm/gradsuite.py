"""Random small instances of every trainable objective, for gradient checking.

Each builder returns ``(f, theta, coords)``: ``f`` maps a flat parameter
vector to ``(value, flat_gradient)``, ``theta`` is the point to check and
``coords`` the flat indices worth checking (every coordinate the data
touches plus a random sample of the rest).
"""

from __future__ import annotations

import numpy as np

from .bicvm import BicvmModel, bicvm_objective, doc_objective
from .compose import CcaeComposer, CcgInventory, LabeledTree, ccae_objective
from .frameid import loglinear_objective, warp_hinge
from .lexicon import EmbeddingTable
from .optimize import grad_check
from .toydata import _random_tree
from .treegrad import denoising_masks

RULES = ("FA", "BA", "CONJ", "RP")
CATEGORIES = ("N", "NP", "S[dcl]", "N/N", "NP\\NP")

OBJECTIVES = (
    "rae", "unfolding", "denoising",
    "ccae-a", "ccae-b", "ccae-c", "ccae-d",
    "warp", "loglinear", "bicvm", "doc",
)


def _coords(touched_mask, rng, n_extra=40):
    touched = np.flatnonzero(touched_mask)
    rest = np.flatnonzero(~touched_mask)
    extra = rng.choice(rest, size=min(n_extra, rest.size), replace=False) if rest.size else rest
    return np.sort(np.concatenate([touched, extra]))


def _ccae_instance(rng, dim, model, signal, alpha):
    # a reduced inventory keeps the parameter count (and the check) small
    inv = CcgInventory(RULES, CATEGORIES)
    composer = CcaeComposer(model, dim, inv)
    vocab = 12
    corpus = []
    for _ in range(2):
        n = int(rng.integers(2, 5))
        tree = _random_tree([f"w{i}" for i in rng.integers(0, vocab, size=n)], rng, RULES, CATEGORIES)
        for leaf in tree.leaves():
            leaf.word_id = int(leaf.word[1:])
        corpus.append(LabeledTree(tree, rng.random(1)))
    params = composer.init_params(rng, vocab, sigma2=0.1)
    # nonzero biases so the bias gradients are exercised away from zero
    for name, v in params.items():
        if ".b." in name:
            v += rng.normal(0, 0.1, size=v.shape)
    masks = None
    if signal == "denoising":
        masks = [denoising_masks(it.tree, dim, 0.3, rng) for it in corpus]
    lam = 1e-3
    template = params

    def f(x):
        J, g = ccae_objective(corpus, composer, template.unflatten(x), alpha, lam, signal, masks=masks)
        return J, g.flatten()

    x0 = params.flatten()
    # data-touched coordinates: those whose gradient differs from the pure L2 term
    _, g = ccae_objective(corpus, composer, params, alpha, 0.0, signal, masks=masks)
    return f, x0, _coords(g.flatten() != 0.0, rng)


def _warp_instance(rng, dim):
    F, m, kn = 6, dim, 2 * dim
    M = rng.normal(0, 0.3, size=(m, kn))
    Y = rng.normal(0, 0.3, size=(F, m))
    x = rng.normal(size=kn)
    pos, neg = rng.choice(F, size=2, replace=False)
    weight = float(rng.uniform(0.5, 3.0))
    # margin chosen so the hinge sits well inside its active region
    u = M @ x
    margin = 1.0 + abs(u @ Y[neg] - u @ Y[pos])

    def f(theta):
        Mt = theta[:m * kn].reshape(m, kn)
        Yt = theta[m * kn:].reshape(F, m)
        h, gM, gY = warp_hinge(x, pos, neg, Mt, Yt, margin, weight)
        return h, np.concatenate([gM.ravel(), gY.ravel()])

    theta = np.concatenate([M.ravel(), Y.ravel()])
    return f, theta, np.arange(theta.size)


def _loglinear_instance(rng, dim):
    n_feat = 3 * dim
    data = []
    for _ in range(4):
        n_cand = int(rng.integers(2, 5))
        rows = []
        for _ in range(n_cand):
            cols = rng.choice(n_feat, size=int(rng.integers(1, 5)), replace=False)
            rows.append((cols, rng.normal(size=cols.size)))
        data.append((int(rng.integers(n_cand)), rows))
    psi = rng.normal(0, 0.5, size=n_feat)
    return (lambda w: loglinear_objective(w, data, 0.1)), psi, np.arange(n_feat)


def _bicvm_model(rng, dim, composer):
    vocab = {lang: [f"{lang}{i}" for i in range(10)] for lang in ("a", "b")}
    model = BicvmModel.create(vocab, dim, rng, sigma2=0.1, noise=3, lam=0.5, default_composer=composer)
    model.margin = float(dim)
    return model


def _bind(model):
    pv = model.params()

    def load(x):
        for name, v in pv.unflatten(x).items():
            pv[name][...] = v

    return pv, load


def _bicvm_instance(rng, dim):
    model = _bicvm_model(rng, dim, str(rng.choice(["add", "bi"])))
    sent = lambda: rng.integers(0, 10, size=int(rng.integers(1, 5)))
    B, k = 3, model.noise
    a = [sent() for _ in range(B)]
    b = [sent() for _ in range(B)]
    n = [sent() for _ in range(B * k)]
    pv, load = _bind(model)

    def f(x):
        load(x)
        J, g = bicvm_objective(a, b, n, model, "a", "b", reg_scale=0.3)
        return J, g.flatten()

    return f, pv.flatten(), np.arange(pv.size)


def _doc_instance(rng, dim):
    model = _bicvm_model(rng, dim, str(rng.choice(["add", "bi"])))
    model.doc_composer = str(rng.choice(["add", "bi"]))
    sent = lambda: rng.integers(0, 10, size=int(rng.integers(1, 4)))
    doc = lambda: [sent() for _ in range(int(rng.integers(1, 4)))]
    B, k = 2, model.noise
    a = [doc() for _ in range(B)]
    b = [doc() for _ in range(B)]
    n = [doc() for _ in range(B * k)]
    pv, load = _bind(model)

    def f(x):
        load(x)
        J, g = doc_objective(a, b, n, model, "a", "b", reg_scale=0.3)
        return J, g.flatten()

    return f, pv.flatten(), np.arange(pv.size)


def build_instance(name: str, rng, dim: int = 4):
    """One random instance of objective ``name`` (see ``OBJECTIVES``)."""
    if name in ("rae", "unfolding", "denoising"):
        return _ccae_instance(rng, dim, "A", name, 1.0)
    if name.startswith("ccae-"):
        return _ccae_instance(rng, dim, name[-1].upper(), "rae", 0.5)
    builders = {"warp": _warp_instance, "loglinear": _loglinear_instance, "bicvm": _bicvm_instance, "doc": _doc_instance}
    if name not in builders:
        raise KeyError(f"unknown objective {name!r}")
    return builders[name](rng, dim)


def max_gradient_error(name: str, rng, dim: int = 4, instances: int = 1, eps: float = 1e-5) -> float:
    worst = 0.0
    for _ in range(instances):
        f, theta, coords = build_instance(name, rng, dim)
        worst = max(worst, grad_check(f, theta, eps=eps, coords=coords))
    return worst


__all__ = ["OBJECTIVES", "build_instance", "max_gradient_error", "EmbeddingTable"]
