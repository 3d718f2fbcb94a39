"""Binary composition trees: forward evaluation, backpropagation through
structure, and the autoencoder / classifier training signals.

A *composer* supplies the per-node functions.  It must provide::

    encode(params, node, x, y)            -> (e, cache)
    encode_backward(params, grads, node, cache, delta_e) -> (dx, dy)
    decode(params, node, e)               -> (r, cache)      # r has length 2*len(e)
    decode_backward(params, grads, node, cache, delta_r) -> delta_e

``*_backward`` methods accumulate parameter gradients into ``grads`` (a
ParamVector laid out like ``params``).  Word embeddings live in the segment
named ``"L"`` of the parameter vector.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InvalidArgument, ParseError
from .lexicon import EmbeddingTable
from .numerics import sigmoid_act

LEXICAL = "lex"


@dataclass(eq=False)
class TreeNode:
    """A leaf (``word`` set) or a binary internal node (``left``/``right`` set).

    ``rule`` is the combinator for internal nodes and ``"lex"`` for leaves;
    ``category`` is the CCG category of the span.
    """

    rule: str = LEXICAL
    category: str | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    word: str | None = None
    word_id: int = -1
    # forward caches
    x: np.ndarray | None = field(default=None, repr=False)
    y: np.ndarray | None = field(default=None, repr=False)
    e: np.ndarray | None = field(default=None, repr=False)
    enc_cache: object = field(default=None, repr=False)
    mask: tuple | None = field(default=None, repr=False)

    @classmethod
    def leaf(cls, word, category=None, word_id=-1):
        return cls(rule=LEXICAL, category=category, word=word, word_id=word_id)

    @classmethod
    def internal(cls, rule, left, right, category=None):
        return cls(rule=rule, category=category, left=left, right=right)

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def postorder(self):
        """Nodes bottom-up, children before parents (iterative, no recursion limit)."""
        out, stack = [], [(self, False)]
        while stack:
            node, seen = stack.pop()
            if node.is_leaf or seen:
                out.append(node)
            else:
                stack.append((node, True))
                stack.append((node.right, False))
                stack.append((node.left, False))
        return out

    def internal_nodes(self):
        return [n for n in self.postorder() if not n.is_leaf]

    def leaves(self):
        return [n for n in self.postorder() if n.is_leaf]

    def clear_cache(self):
        for n in self.postorder():
            n.x = n.y = n.e = n.enc_cache = None
            n.mask = None

    def to_string(self) -> str:
        if self.is_leaf:
            return f"({LEXICAL}:{self.category or ''} {self.word})"
        return f"({self.rule}:{self.category or ''} {self.left.to_string()} {self.right.to_string()})"


_WS = re.compile(r"\s+")


def parse_tree(text: str) -> TreeNode:
    """Parse ``(RULE:CATEGORY left right)`` / ``(lex:CATEGORY word)``.

    Categories may themselves contain parentheses (``(S\\NP)/NP``); the head
    token always runs up to the next whitespace.
    """
    s = text.strip()
    pos = 0
    n = len(s)

    def skip_ws(p):
        while p < n and s[p].isspace():
            p += 1
        return p

    def parse(p):
        p = skip_ws(p)
        if p >= n or s[p] != "(":
            raise ParseError(f"expected '(' at column {p}")
        p += 1
        start = p
        while p < n and not s[p].isspace():
            p += 1
        head = s[start:p]
        if ":" not in head:
            raise ParseError(f"node head {head!r} lacks RULE:CATEGORY")
        rule, cat = head.split(":", 1)
        if not rule or "(" in rule or ")" in rule:
            raise ParseError(f"bad rule name {rule!r} at column {start}")
        cat = cat or None
        p = skip_ws(p)
        if rule == LEXICAL:
            start = p
            while p < n and not s[p].isspace() and s[p] != ")":
                p += 1
            word = s[start:p]
            if not word:
                raise ParseError(f"leaf without word at column {start}")
            p = skip_ws(p)
            if p >= n or s[p] != ")":
                raise ParseError(f"unbalanced brackets: expected ')' at column {p}")
            return TreeNode.leaf(word, cat), p + 1
        left, p = parse(p)
        right, p = parse(p)
        p = skip_ws(p)
        if p >= n or s[p] != ")":
            raise ParseError(f"unbalanced brackets: expected ')' at column {p}")
        return TreeNode.internal(rule, left, right, cat), p + 1

    root, pos = parse(pos)
    if skip_ws(pos) != n:
        raise ParseError(f"unbalanced brackets: trailing text at column {pos}")
    return root


def bind_words(tree: TreeNode, lexicon: EmbeddingTable):
    """Resolve leaf words to row ids (unknown words follow the lexicon policy)."""
    for leaf in tree.leaves():
        leaf.word_id = lexicon.lookup_id(leaf.word)
    return tree


def tree_from_words(words, rule="FA", category=None, leaf_category=None):
    """Left-branching tree over ``words`` (handy for tests and plain RAEs)."""
    words = list(words)
    if not words:
        raise InvalidArgument("cannot build a tree over an empty word list")
    node = TreeNode.leaf(words[0], leaf_category)
    for w in words[1:]:
        node = TreeNode.internal(rule, node, TreeNode.leaf(w, leaf_category), category)
    return node


# ---------------------------------------------------------------------------
# forward / backward


def forward_tree(tree: TreeNode, composer, params, masks=None) -> np.ndarray:
    """Bottom-up encoding; caches x, y, e on every node and returns the root encoding.

    ``masks`` optionally maps internal nodes to ``(mask_x, mask_y)`` 0/1
    vectors applied to the children before encoding (denoising).  Cached
    ``x``/``y`` always hold the uncorrupted child encodings.
    """
    L = params["L"]
    for node in tree.postorder():
        if node.is_leaf:
            if node.word_id < 0:
                raise ContractViolation(f"leaf {node.word!r} has no word id; call bind_words first")
            node.e = L[node.word_id].copy()
            continue
        x, y = node.left.e, node.right.e
        node.x, node.y = x, y
        node.mask = None if masks is None else masks.get(node)
        if node.mask is not None:
            x, y = x * node.mask[0], y * node.mask[1]
        node.e, node.enc_cache = composer.encode(params, node, x, y)
    return tree.e


def backprop_tree(tree: TreeNode, deltas, composer, params, grads):
    """Backpropagate encoding deltas top-down, accumulating into ``grads``.

    ``deltas`` maps nodes to dE/de_n from loss terms; a node's total delta is
    the sum of its own term and those arriving from its successors.  Each node
    is visited once.
    """
    order = tree.postorder()
    total = {node: None for node in order}
    for node, d in deltas.items():
        total[node] = d.copy() if total.get(node) is None else total[node] + d
    gL = grads["L"]
    for node in reversed(order):
        d = total[node]
        if node.e is None:
            raise ContractViolation("backprop_tree called before forward_tree")
        if d is None:
            continue
        if node.is_leaf:
            gL[node.word_id] += d
            continue
        if node.enc_cache is None:
            raise ContractViolation("missing cached forward values")
        dx, dy = composer.encode_backward(params, grads, node, node.enc_cache, d)
        if node.mask is not None:
            dx, dy = dx * node.mask[0], dy * node.mask[1]
        for child, dc in ((node.left, dx), (node.right, dy)):
            total[child] = dc if total[child] is None else total[child] + dc
    return grads


def _add(deltas, node, d):
    prev = deltas.get(node)
    deltas[node] = d if prev is None else prev + d


# ---------------------------------------------------------------------------
# training signals
#
# Each *_terms function assumes forward_tree has run, returns the loss, adds
# encoding deltas into ``deltas`` (scaled by ``weight``) and accumulates any
# decoder/classifier parameter gradients into ``grads``.


def rae_node_loss(node: TreeNode, composer, params) -> float:
    """Half squared reconstruction error of the concatenated children at ``node``."""
    if node.is_leaf:
        raise InvalidArgument("reconstruction loss is defined on internal nodes")
    if node.e is None:
        raise ContractViolation("node has no cached encoding")
    r, _ = composer.decode(params, node, node.e)
    diff = r - np.concatenate([node.x, node.y])
    return 0.5 * float(diff @ diff)


def rae_loss(tree: TreeNode, composer, params) -> float:
    return sum(rae_node_loss(n, composer, params) for n in tree.internal_nodes())


def rae_terms(tree, composer, params, grads, deltas, weight=1.0) -> float:
    total = 0.0
    for node in tree.internal_nodes():
        r, cache = composer.decode(params, node, node.e)
        d = node.x.size
        diff = r - np.concatenate([node.x, node.y])
        total += 0.5 * float(diff @ diff)
        wd = weight * diff
        _add(deltas, node, composer.decode_backward(params, grads, node, cache, wd))
        # the targets are themselves child encodings
        _add(deltas, node.left, -wd[:d])
        _add(deltas, node.right, -wd[d:])
    return weight * total


def unfolding_terms(tree, composer, params, grads, deltas, weight=1.0) -> float:
    """Decode the root down to the leaves; error only against original leaf vectors."""
    if tree.is_leaf:
        raise InvalidArgument("unfolding loss needs an internal root")
    # top-down decode, remembering each step for the backward pass
    steps = []  # (node, input vector, cache)
    recon = {tree: tree.e}
    stack = [tree]
    while stack:
        node = stack.pop()
        r, cache = composer.decode(params, node, recon[node])
        steps.append((node, cache))
        d = r.size // 2
        recon[node.left] = r[:d]
        recon[node.right] = r[d:]
        for child in (node.right, node.left):
            if not child.is_leaf:
                stack.append(child)
    total = 0.0
    drec = {}
    for leaf in tree.leaves():
        diff = recon[leaf] - leaf.e
        total += 0.5 * float(diff @ diff)
        drec[leaf] = weight * diff
        _add(deltas, leaf, -weight * diff)
    for node, cache in reversed(steps):
        dr = np.concatenate([drec[node.left], drec[node.right]])
        de = composer.decode_backward(params, grads, node, cache, dr)
        if node is tree:
            _add(deltas, tree, de)
        else:
            drec[node] = de
    return weight * total


def unfolding_loss(tree, composer, params) -> float:
    grads = params.zeros_like()
    return unfolding_terms(tree, composer, params, grads, {}, 1.0)


def denoising_corrupt(x, drop_prob: float, rng) -> np.ndarray:
    """Zero each coordinate independently with probability ``drop_prob``."""
    if not 0.0 <= drop_prob <= 1.0:
        raise InvalidArgument("drop_prob must lie in [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    return x * (rng.random(x.shape) >= drop_prob)


def denoising_masks(tree, dim, drop_prob, rng):
    """Per-node 0/1 masks for both children; pass to ``forward_tree(masks=...)``."""
    if not 0.0 <= drop_prob <= 1.0:
        raise InvalidArgument("drop_prob must lie in [0, 1]")
    return {
        node: ((rng.random(dim) >= drop_prob).astype(np.float64), (rng.random(dim) >= drop_prob).astype(np.float64))
        for node in tree.internal_nodes()
    }


def classifier_head(e, W_label, b_label) -> np.ndarray:
    W_label = np.asarray(W_label, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if W_label.ndim != 2 or W_label.shape[1] != e.size or W_label.shape[0] != np.size(b_label):
        raise InvalidArgument(f"classifier shapes do not match: W{W_label.shape}, e{e.shape}, b{np.shape(b_label)}")
    return sigmoid_act(W_label @ e + b_label)


def label_loss(label, e, params) -> float:
    o = classifier_head(e, params["label.W"], params["label.b"])
    label = np.atleast_1d(np.asarray(label, dtype=np.float64))
    if label.shape != o.shape:
        raise InvalidArgument(f"label has shape {label.shape}, prediction {o.shape}")
    diff = label - o
    return 0.5 * float(diff @ diff)


def label_terms(node, label, params, grads, deltas, weight=1.0) -> float:
    W, b = params["label.W"], params["label.b"]
    o = classifier_head(node.e, W, b)
    label = np.atleast_1d(np.asarray(label, dtype=np.float64))
    diff = o - label
    dk = weight * diff * o * (1.0 - o)
    grads["label.W"] += np.outer(dk, node.e)
    grads["label.b"] += dk
    _add(deltas, node, W.T @ dk)
    return weight * 0.5 * float(diff @ diff)


class AdditiveComposer:
    """e = x + y with no parameters; reconstruction splits e in halves."""

    def encode(self, params, node, x, y):
        return x + y, None

    def encode_backward(self, params, grads, node, cache, de):
        return de.copy(), de.copy()

    def decode(self, params, node, e):
        return np.concatenate([e, e]) * 0.5, None

    def decode_backward(self, params, grads, node, cache, dr):
        d = dr.size // 2
        return 0.5 * (dr[:d] + dr[d:])
