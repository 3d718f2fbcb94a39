"""Composition functions: ADD, BI, two-level DOC, and the CCG-conditioned
autoencoders CCAE-A..D together with their semi-supervised objective."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import _kernels
from .errors import InvalidArgument, InvalidConfiguration, InvalidInput
from .numerics import gaussian_init
from .optimize import ParamVector
from .treegrad import (
    TreeNode,
    backprop_tree,
    denoising_masks,
    forward_tree,
    label_terms,
    rae_terms,
    unfolding_terms,
)

CATCH_ALL = "<other>"


def _read_tokens(name):
    text = (resources.files("cvsm") / "data" / name).read_text(encoding="utf-8")
    return [t.strip() for t in text.splitlines() if t.strip()]


@dataclass(frozen=True)
class CcgInventory:
    combinators: tuple
    categories: tuple  # frequent categories; CATCH_ALL is appended

    def __post_init__(self):
        object.__setattr__(self, "combinators", tuple(self.combinators))
        object.__setattr__(self, "categories", tuple(c for c in self.categories if c != CATCH_ALL))

    @classmethod
    def default(cls):
        return cls(tuple(_read_tokens("combinators.txt")), tuple(_read_tokens("categories.txt")))

    @property
    def all_categories(self):
        return self.categories + (CATCH_ALL,)

    def category(self, cat):
        return cat if cat in self.categories else CATCH_ALL

    def combinator(self, rule):
        if rule not in self.combinators:
            raise InvalidArgument(f"unknown combinator {rule!r}")
        return rule

    def write(self, path_combinators, path_categories):
        with open(path_combinators, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.combinators) + "\n")
        with open(path_categories, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.all_categories) + "\n")


# ---------------------------------------------------------------------------
# sequence composers


def _check_nonempty(seq, what="sentence"):
    if len(seq) == 0:
        raise InvalidInput(f"empty {what}")


def compose_rows(vectors, cvm="add"):
    """Compose a (n, d) array of input vectors with ADD or BI."""
    vectors = np.asarray(vectors, dtype=np.float64)
    _check_nonempty(vectors, "sequence")
    tokens = np.arange(vectors.shape[0])
    offsets = np.array([0, vectors.shape[0]])
    if cvm == "add":
        return _kernels.add_forward(vectors, tokens, offsets)[0]
    if cvm == "bi":
        return _kernels.bi_forward(vectors, tokens, offsets)[0][0]
    raise InvalidArgument(f"unknown composition {cvm!r}")


def add_compose(sentence, lexicon):
    """Sum of word vectors.  ``sentence`` holds word ids or words."""
    _check_nonempty(sentence)
    return compose_rows(lexicon.vectors[_ids(sentence, lexicon)], "add")


def bi_compose(sentence, lexicon):
    """Sum over positions of tanh(x_{i-1} + x_i), with a zero vector before the first word."""
    _check_nonempty(sentence)
    return compose_rows(lexicon.vectors[_ids(sentence, lexicon)], "bi")


def doc_compose(sentence_vectors, cvm="add"):
    """Second-level composition over a document's sentence vectors."""
    _check_nonempty(sentence_vectors, "document")
    return compose_rows(np.vstack(sentence_vectors), cvm)


def _ids(sentence, lexicon):
    if all(isinstance(w, str) for w in sentence):
        return lexicon.ids(list(sentence))
    return np.asarray(sentence, dtype=np.int64)


# ---------------------------------------------------------------------------
# CCAE


CCAE_MODELS = ("A", "B", "C", "D")


def _rule_key(rule):
    return f"c:{rule}"


def _cat_key(cat):
    return f"t:{cat}"


class CcaeComposer:
    """Encoder/decoder pair for one of the CCAE variants.

    Encodings (g = tanh, xy = concatenation of the children)::

        A: g(W xy + b)
        B: g(W^c xy + b^c)                       c = combinator
        C: g(W^c xy + b^c + W^t xy + b^t)        t = category of the node
        D: g(W^c (T^tx x + T^ty y) + b^c)        tx, ty = child categories

    Each decoder mirrors its encoder with its own (untied) weights.  For D
    the decoder maps e through R^c (2d x d), then applies the child-category
    transforms to the two halves before the bias and tanh.
    """

    def __init__(self, model="A", dim=8, inventory=None):
        model = model.upper().removeprefix("CCAE-")
        if model not in CCAE_MODELS:
            raise InvalidArgument(f"unknown CCAE model {model!r}")
        self.model = model
        self.dim = dim
        self.inventory = inventory or CcgInventory.default()

    # parameter layout -----------------------------------------------------

    def _keys(self):
        inv = self.inventory
        if self.model == "A":
            return ["*"], []
        rules = [_rule_key(c) for c in inv.combinators]
        if self.model == "B":
            return rules, []
        cats = [_cat_key(t) for t in inv.all_categories]
        return rules, cats

    def init_params(self, rng, vocab_size, label_dim=1, sigma2=0.1, embeddings=None) -> ParamVector:
        d = self.dim
        p = ParamVector()
        if embeddings is not None:
            embeddings = np.asarray(embeddings, dtype=np.float64)
            if embeddings.shape != (vocab_size, d):
                raise InvalidArgument(f"embeddings shape {embeddings.shape} != ({vocab_size}, {d})")
            p["L"] = embeddings.copy()
        else:
            p["L"] = gaussian_init(vocab_size, d, 0.0, sigma2, rng)
        main, cats = self._keys()
        for k in main:
            if self.model == "D":
                p[f"enc.W.{k}"] = gaussian_init(d, d, 0.0, sigma2, rng)
                p[f"rec.W.{k}"] = gaussian_init(2 * d, d, 0.0, sigma2, rng)
            else:
                p[f"enc.W.{k}"] = gaussian_init(d, 2 * d, 0.0, sigma2, rng)
                p[f"rec.W.{k}"] = gaussian_init(2 * d, d, 0.0, sigma2, rng)
            p[f"enc.b.{k}"] = np.zeros(d)
            p[f"rec.b.{k}"] = np.zeros(2 * d)
        for k in cats:
            if self.model == "C":
                p[f"enc.W.{k}"] = gaussian_init(d, 2 * d, 0.0, sigma2, rng)
                p[f"enc.b.{k}"] = np.zeros(d)
                p[f"rec.W.{k}"] = gaussian_init(2 * d, d, 0.0, sigma2, rng)
                p[f"rec.b.{k}"] = np.zeros(2 * d)
            else:
                # identity-centred so an untrained D behaves like B
                p[f"enc.T.{k}"] = np.eye(d) + gaussian_init(d, d, 0.0, sigma2, rng)
                p[f"rec.T.{k}"] = np.eye(d) + gaussian_init(d, d, 0.0, sigma2, rng)
        p["label.W"] = gaussian_init(label_dim, d, 0.0, sigma2, rng)
        p["label.b"] = np.zeros(label_dim)
        return p

    def _main_key(self, node):
        if self.model == "A":
            return "*"
        return _rule_key(self.inventory.combinator(node.rule))

    def _cat(self, category):
        return _cat_key(self.inventory.category(category))

    # encoder --------------------------------------------------------------

    def _check(self, x, y):
        if x.shape != (self.dim,) or y.shape != (self.dim,):
            raise InvalidArgument(f"child vectors must have shape ({self.dim},), got {x.shape} and {y.shape}")

    def encode(self, params, node, x, y):
        self._check(x, y)
        k = self._main_key(node)
        if self.model == "D":
            tx, ty = self._cat(node.left.category), self._cat(node.right.category)
            u = params[f"enc.T.{tx}"] @ x + params[f"enc.T.{ty}"] @ y
            e = np.tanh(params[f"enc.W.{k}"] @ u + params[f"enc.b.{k}"])
            return e, (x, y, u, e, k, tx, ty)
        xy = np.concatenate([x, y])
        z = params[f"enc.W.{k}"] @ xy + params[f"enc.b.{k}"]
        t = None
        if self.model == "C":
            t = self._cat(node.category)
            z = z + params[f"enc.W.{t}"] @ xy + params[f"enc.b.{t}"]
        e = np.tanh(z)
        return e, (xy, e, k, t)

    def encode_backward(self, params, grads, node, cache, de):
        d = self.dim
        if self.model == "D":
            x, y, u, e, k, tx, ty = cache
            dz = de * (1.0 - e * e)
            grads[f"enc.W.{k}"] += np.outer(dz, u)
            grads[f"enc.b.{k}"] += dz
            du = params[f"enc.W.{k}"].T @ dz
            grads[f"enc.T.{tx}"] += np.outer(du, x)
            grads[f"enc.T.{ty}"] += np.outer(du, y)
            return params[f"enc.T.{tx}"].T @ du, params[f"enc.T.{ty}"].T @ du
        xy, e, k, t = cache
        dz = de * (1.0 - e * e)
        grads[f"enc.W.{k}"] += np.outer(dz, xy)
        grads[f"enc.b.{k}"] += dz
        dxy = params[f"enc.W.{k}"].T @ dz
        if t is not None:
            grads[f"enc.W.{t}"] += np.outer(dz, xy)
            grads[f"enc.b.{t}"] += dz
            dxy += params[f"enc.W.{t}"].T @ dz
        return dxy[:d], dxy[d:]

    # decoder --------------------------------------------------------------

    def decode(self, params, node, e):
        d = self.dim
        k = self._main_key(node)
        if self.model == "D":
            tx, ty = self._cat(node.left.category), self._cat(node.right.category)
            v = params[f"rec.W.{k}"] @ e
            z = np.concatenate([params[f"rec.T.{tx}"] @ v[:d], params[f"rec.T.{ty}"] @ v[d:]]) + params[f"rec.b.{k}"]
            r = np.tanh(z)
            return r, (e, v, r, k, tx, ty)
        z = params[f"rec.W.{k}"] @ e + params[f"rec.b.{k}"]
        t = None
        if self.model == "C":
            t = self._cat(node.category)
            z = z + params[f"rec.W.{t}"] @ e + params[f"rec.b.{t}"]
        r = np.tanh(z)
        return r, (e, r, k, t)

    def decode_backward(self, params, grads, node, cache, dr):
        d = self.dim
        if self.model == "D":
            e, v, r, k, tx, ty = cache
            dz = dr * (1.0 - r * r)
            grads[f"rec.b.{k}"] += dz
            grads[f"rec.T.{tx}"] += np.outer(dz[:d], v[:d])
            grads[f"rec.T.{ty}"] += np.outer(dz[d:], v[d:])
            dv = np.concatenate([params[f"rec.T.{tx}"].T @ dz[:d], params[f"rec.T.{ty}"].T @ dz[d:]])
            grads[f"rec.W.{k}"] += np.outer(dv, e)
            return params[f"rec.W.{k}"].T @ dv
        e, r, k, t = cache
        dz = dr * (1.0 - r * r)
        grads[f"rec.W.{k}"] += np.outer(dz, e)
        grads[f"rec.b.{k}"] += dz
        de = params[f"rec.W.{k}"].T @ dz
        if t is not None:
            grads[f"rec.W.{t}"] += np.outer(dz, e)
            grads[f"rec.b.{t}"] += dz
            de += params[f"rec.W.{t}"].T @ dz
        return de


def ccae_encode(x, y, rule, cat, child_cats, model, params, inventory=None):
    """Encode one composition step outside of a tree."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    comp = CcaeComposer(model, x.size, inventory)
    node = TreeNode.internal(rule, TreeNode.leaf("x", child_cats[0]), TreeNode.leaf("y", child_cats[1]), cat)
    return comp.encode(params, node, x, y)[0]


# ---------------------------------------------------------------------------
# objective


@dataclass
class LabeledTree:
    tree: TreeNode
    label: np.ndarray | None = None


def _reg_lambda(lam, name):
    if isinstance(lam, dict):
        return float(lam.get(name, lam.get("*", 0.0)))
    return float(lam)


def ccae_objective(
    corpus,
    composer,
    params: ParamVector,
    alpha: float = 1.0,
    lam=1e-4,
    signal: str = "rae",
    label_nodes: str = "all",
    drop_prob: float = 0.0,
    rng=None,
    masks=None,
):
    """Mean node-wise mixed loss plus per-segment L2, with its gradient.

    Per tree: ``alpha * sum_n E_rec(n) + (1 - alpha) * E_lbl``, where E_rec is
    the plain RAE, unfolding or denoising reconstruction error (``signal``)
    and E_lbl the sigmoid classifier error applied at every internal node
    (default) or only at the root (``label_nodes="root"``).  The sum over the
    corpus is divided by the number of internal nodes; ``lam`` (scalar or {segment: value}) adds
    ``lam/2 * ||theta_seg||^2`` with gradient ``lam * theta_seg``.

    ``masks`` (a list with one mask dict per tree) fixes the denoising
    corruption; otherwise masks are drawn from ``rng``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgument("alpha must lie in [0, 1]")
    if signal not in ("rae", "unfolding", "denoising"):
        raise InvalidArgument(f"unknown reconstruction signal {signal!r}")
    if label_nodes not in ("root", "all"):
        raise InvalidArgument("label_nodes must be 'root' or 'all'")
    items = [c if isinstance(c, LabeledTree) else LabeledTree(*c) if isinstance(c, tuple) else LabeledTree(c) for c in corpus]
    if alpha < 1.0 and any(it.label is None for it in items):
        raise InvalidConfiguration("alpha < 1 requires a label for every tree")
    grads = params.zeros_like()
    total = 0.0
    n_nodes = 0
    for i, item in enumerate(items):
        tree = item.tree
        tree_masks = None
        if signal == "denoising":
            if masks is not None:
                tree_masks = masks[i]
            elif drop_prob > 0.0:
                if rng is None:
                    raise InvalidConfiguration("denoising with drop_prob > 0 needs an rng or fixed masks")
                tree_masks = denoising_masks(tree, composer.dim, drop_prob, rng)
        forward_tree(tree, composer, params, masks=tree_masks)
        internal = tree.internal_nodes()
        n_nodes += len(internal)
        deltas = {}
        if alpha > 0.0 and internal:
            if signal == "unfolding":
                total += unfolding_terms(tree, composer, params, grads, deltas, alpha)
            else:
                total += rae_terms(tree, composer, params, grads, deltas, alpha)
        if alpha < 1.0:
            targets = [tree] if label_nodes == "root" or not internal else internal
            for node in targets:
                total += label_terms(node, item.label, params, grads, deltas, 1.0 - alpha)
        backprop_tree(tree, deltas, composer, params, grads)
    scale = 1.0 / max(1, n_nodes)
    J = total * scale
    for name, g in grads.items():
        g *= scale
        lv = _reg_lambda(lam, name)
        if lv:
            theta = params[name]
            J += 0.5 * lv * float(np.vdot(theta, theta))
            g += lv * theta
    return J, grads


def predict_label(tree, composer, params) -> np.ndarray:
    """Sigmoid classifier output at the root."""
    from .treegrad import classifier_head

    e = forward_tree(tree, composer, params)
    return classifier_head(e, params["label.W"], params["label.b"])


def train_ccae(
    corpus,
    composer,
    params: ParamVector,
    alpha: float = 0.2,
    lam=1e-4,
    signal: str = "rae",
    label_nodes: str = "all",
    drop_prob: float = 0.0,
    rng=None,
    max_iter: int = 200,
    memory: int = 10,
    tol: float = 1e-9,
    callback=None,
):
    """Fit CCAE parameters with L-BFGS; returns the LbfgsResult.

    Denoising masks are drawn once so the objective stays deterministic
    during line searches.
    """
    from .optimize import lbfgs_minimize

    items = [c if isinstance(c, LabeledTree) else LabeledTree(*c) if isinstance(c, tuple) else LabeledTree(c) for c in corpus]
    masks = None
    if signal == "denoising" and drop_prob > 0.0:
        if rng is None:
            raise InvalidConfiguration("denoising training needs an rng")
        masks = [denoising_masks(it.tree, composer.dim, drop_prob, rng) for it in items]

    def f(theta):
        return ccae_objective(items, composer, theta, alpha, lam, signal, label_nodes, masks=masks)

    return lbfgs_minimize(f, params, M=memory, max_iter=max_iter, tol=tol, callback=callback)


@dataclass
class CcaeModel:
    """A trained composer with its parameters and the vocabulary indexing ``L``."""

    composer: CcaeComposer
    params: ParamVector
    words: list

    def lexicon(self):
        from .lexicon import EmbeddingTable

        return EmbeddingTable(self.words, self.params["L"])

    def bind(self, tree):
        from .treegrad import bind_words

        return bind_words(tree, self.lexicon())

    def encode(self, tree) -> np.ndarray:
        return forward_tree(self.bind(tree), self.composer, self.params).copy()

    def predict(self, tree) -> np.ndarray:
        self.bind(tree)
        return predict_label(tree, self.composer, self.params)
