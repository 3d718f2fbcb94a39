"""Synthetic corpora for smoke tests and the scaled-down end-to-end runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bicvm import DocumentCorpus
from .treegrad import TreeNode


@dataclass
class CipherCorpus:
    docs: DocumentCorpus  # sentence-aligned, word ids index the vocabularies below
    vocab_a: list
    vocab_b: list
    topics: np.ndarray  # topic id per document


def cipher_corpus(n_topics=2, docs_per_topic=100, sentences_per_doc=5, vocab_size=200,
                  shared_fraction=0.2, topic_prob=0.5, length=(6, 10), seed=0) -> CipherCorpus:
    """Bilingual corpus where language B is a fixed token renaming of language A.

    The vocabulary splits into per-topic blocks plus a shared block; each
    word of a sentence comes from its document's topic block with
    probability ``topic_prob`` and from the shared block otherwise.
    """
    rng = np.random.default_rng(seed)
    n_shared = int(round(vocab_size * shared_fraction))
    per_topic = (vocab_size - n_shared) // n_topics
    shared = np.arange(n_topics * per_topic, vocab_size)
    vocab_a = [f"a{i}" for i in range(vocab_size)]
    rename = rng.permutation(vocab_size)
    vocab_b = [f"b{i}" for i in range(vocab_size)]
    a_docs, b_docs, topics = [], [], []
    for t in range(n_topics):
        block = np.arange(t * per_topic, (t + 1) * per_topic)
        for _ in range(docs_per_topic):
            doc_a, doc_b = [], []
            for _ in range(sentences_per_doc):
                n = rng.integers(length[0], length[1] + 1)
                from_topic = rng.random(n) < topic_prob
                words = np.where(from_topic, rng.choice(block, n), rng.choice(shared, n))
                doc_a.append(words)
                doc_b.append(rename[words])
            a_docs.append(doc_a)
            b_docs.append(doc_b)
            topics.append(t)
    order = rng.permutation(len(a_docs))
    a_docs = [a_docs[i] for i in order]
    b_docs = [b_docs[i] for i in order]
    topics = np.asarray(topics)[order]
    labels = [[f"topic{t}"] for t in topics]
    docs = DocumentCorpus("A", "B", a_docs, b_docs, labels=labels, sentence_aligned=True)
    return CipherCorpus(docs, vocab_a, vocab_b, topics)


def _random_tree(words, rng, rules, categories):
    """Random binary bracketing over ``words`` with random rule/category annotations."""
    nodes = [TreeNode.leaf(w, categories[rng.integers(len(categories))]) for w in words]
    while len(nodes) > 1:
        i = int(rng.integers(len(nodes) - 1))
        rule = rules[rng.integers(len(rules))]
        cat = categories[rng.integers(len(categories))]
        nodes[i:i + 2] = [TreeNode.internal(rule, nodes[i], nodes[i + 1], cat)]
    return nodes[0]


def sentiment_trees(n_trees=200, vocab_size=40, n_markers=4, length=(3, 7), seed=0,
                    rules=("FA", "BA", "CONJ", "RP"), categories=("N", "NP", "S[dcl]", "N/N", "PP")):
    """Labeled toy trees; the label is 1 iff a marker word (w0..w{n_markers-1}) occurs.

    Returns (trees, labels, vocabulary).  Roughly half the trees contain a marker.
    """
    rng = np.random.default_rng(seed)
    vocab = [f"w{i}" for i in range(vocab_size)]
    trees, labels = [], []
    for i in range(n_trees):
        n = int(rng.integers(length[0], length[1] + 1))
        words = list(rng.integers(n_markers, vocab_size, size=n))
        positive = i % 2 == 0
        if positive:
            words[int(rng.integers(n))] = int(rng.integers(n_markers))
        trees.append(_random_tree([vocab[w] for w in words], rng, rules, categories))
        labels.append(np.array([1.0 if positive else 0.0]))
    return trees, labels, vocab


def frame_instances(n_instances=300, n_frames=6, n_units=8, frames_per_unit=3, dim=8,
                    labels=("nsubj", "dobj", "prep_in"), words_per_frame=4, seed=0):
    """Frame-labelled predicate instances whose context words depend on the gold frame.

    Returns (instances, frame_lexicon, embeddings) where the frame lexicon
    maps each lexical unit to its admissible frame names and ``embeddings`` is
    a random table covering every context word.
    """
    from .frameid import FrameInstance
    from .lexicon import EmbeddingTable

    rng = np.random.default_rng(seed)
    frames = [f"Frame{i}" for i in range(n_frames)]
    units = [f"lu{i}.v" for i in range(n_units)]
    lex = {u: sorted(rng.choice(frames, size=min(frames_per_unit, n_frames), replace=False).tolist()) for u in units}
    words = {(f, lab): [f"{f.lower()}_{lab}_{j}" for j in range(words_per_frame)] for f in frames for lab in labels}
    noise = [f"noise{j}" for j in range(10)]
    vocab = [w for ws in words.values() for w in ws] + noise
    out = []
    for _ in range(n_instances):
        u = units[rng.integers(n_units)]
        f = lex[u][rng.integers(len(lex[u]))]
        slots = []
        for lab in labels:
            if rng.random() < 0.8:
                slots.append((lab, [words[f, lab][rng.integers(words_per_frame)], noise[rng.integers(len(noise))]]))
        out.append(FrameInstance(u, f, slots))
    emb = EmbeddingTable.random(vocab, dim, rng, sigma2=1.0, with_unk=False)
    return out, lex, emb
