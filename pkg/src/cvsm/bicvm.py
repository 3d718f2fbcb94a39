"""Multilingual compositional embeddings trained with a noise-contrastive
large-margin objective on parallel sentences and documents."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidArgument, InvalidConfiguration, InvalidInput
from .lexicon import EmbeddingTable
from .optimize import AdaGrad, ParamVector

log = logging.getLogger(__name__)

COMPOSERS = ("add", "bi")


@dataclass
class ParallelCorpus:
    """Sentence-aligned corpus: ``a[i]`` translates ``b[i]`` (word-id arrays)."""

    lang_a: str
    lang_b: str
    a: list
    b: list

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise InvalidInput(f"unequal pair counts: {len(self.a)} vs {len(self.b)}")
        self.a = [np.asarray(s, dtype=np.int64) for s in self.a]
        self.b = [np.asarray(s, dtype=np.int64) for s in self.b]
        if any(len(s) == 0 for s in self.a) or any(len(s) == 0 for s in self.b):
            raise InvalidInput("parallel corpus contains empty sentences")

    def __len__(self):
        return len(self.a)


@dataclass
class DocumentCorpus:
    """Aligned documents; each document is a list of word-id arrays.

    ``sentence_aligned`` marks corpora whose aligned documents also pair up
    sentence by sentence.  ``labels`` holds per-document label lists.
    """

    lang_a: str
    lang_b: str
    a_docs: list
    b_docs: list
    labels: list | None = None
    sentence_aligned: bool = False

    def __post_init__(self):
        if len(self.a_docs) != len(self.b_docs):
            raise InvalidInput(f"unequal document counts: {len(self.a_docs)} vs {len(self.b_docs)}")
        for docs in (self.a_docs, self.b_docs):
            for i, doc in enumerate(docs):
                if len(doc) == 0:
                    raise InvalidInput(f"document {i} has no sentences")
                docs[i] = [np.asarray(s, dtype=np.int64) for s in doc]
                if any(len(s) == 0 for s in docs[i]):
                    raise InvalidInput(f"document {i} contains an empty sentence")
        if self.sentence_aligned:
            for i, (da, db) in enumerate(zip(self.a_docs, self.b_docs)):
                if len(da) != len(db):
                    raise InvalidInput(f"document {i} is marked sentence-aligned but sentence counts differ")

    def __len__(self):
        return len(self.a_docs)

    def sentence_pairs(self) -> ParallelCorpus:
        if not self.sentence_aligned:
            raise InvalidConfiguration("corpus is not sentence-aligned")
        a = [s for doc in self.a_docs for s in doc]
        b = [s for doc in self.b_docs for s in doc]
        return ParallelCorpus(self.lang_a, self.lang_b, a, b)


@dataclass
class BicvmModel:
    """One embedding table per language, all of dimension ``dim``.

    ``composers`` maps language to its sentence composer ("add"/"bi");
    languages not listed use ``default_composer``.  ``doc_composer`` is the
    second-level composer used by document training.
    """

    tables: dict
    margin: float = 128.0
    noise: int = 10
    lam: float = 1.0
    default_composer: str = "add"
    composers: dict = field(default_factory=dict)
    doc_composer: str = "add"

    def __post_init__(self):
        dims = {t.dim for t in self.tables.values()}
        if len(dims) > 1:
            raise InvalidConfiguration(f"embedding tables disagree on dimension: {sorted(dims)}")
        if self.margin <= 0:
            raise InvalidArgument("margin must be positive")
        if self.noise < 1:
            raise InvalidArgument("noise count must be >= 1")
        for c in list(self.composers.values()) + [self.default_composer, self.doc_composer]:
            if c not in COMPOSERS:
                raise InvalidArgument(f"unknown composer {c!r}")

    @classmethod
    def create(cls, vocabularies: dict, dim=128, rng=None, sigma2=0.1, **kw):
        rng = rng if rng is not None else np.random.default_rng(0)
        tables = {
            lang: EmbeddingTable.random(words, dim, rng, sigma2=sigma2, with_unk=True)
            for lang, words in vocabularies.items()
        }
        kw.setdefault("margin", float(dim))
        return cls(tables=tables, **kw)

    @property
    def dim(self) -> int:
        return next(iter(self.tables.values())).dim

    def composer(self, lang) -> str:
        return self.composers.get(lang, self.default_composer)

    def params(self) -> ParamVector:
        """Live view: segments alias the embedding matrices."""
        return ParamVector({f"emb.{lang}": t.vectors for lang, t in self.tables.items()})

    def encode(self, lang, sentences) -> np.ndarray:
        """Sentence vectors (rows) for a list of word-id sequences."""
        for s in sentences:
            if len(s) == 0:
                raise InvalidInput("empty sentence")
        out, _ = compose_batch(self.tables[lang].vectors, sentences, self.composer(lang))
        return out

    def encode_words(self, lang, words) -> np.ndarray:
        table = self.tables[lang]
        return self.encode(lang, [table.ids(list(words))])[0]

    def encode_documents(self, lang, docs, level="mean") -> np.ndarray:
        """Document vectors: mean of sentence vectors (``level="mean"``) or the DOC composer."""
        sents = [s for doc in docs for s in doc]
        S = self.encode(lang, sents)
        _, doff = _kernels.pack([range(len(d)) for d in docs])
        if level == "mean":
            return np.add.reduceat(S, doff[:-1], axis=0) / np.diff(doff)[:, None]
        tokens = np.arange(S.shape[0])
        out, _ = _compose_packed(S, tokens, doff, self.doc_composer)
        return out


# ---------------------------------------------------------------------------
# batched composition with backward


def _compose_packed(table, tokens, offsets, cvm):
    if cvm == "add":
        return _kernels.add_forward(table, tokens, offsets), (tokens, offsets, None)
    if cvm == "bi":
        out, act = _kernels.bi_forward(table, tokens, offsets)
        return out, (tokens, offsets, act)
    raise InvalidArgument(f"unknown composer {cvm!r}")


def compose_batch(table, seqs, cvm):
    tokens, offsets = _kernels.pack(seqs)
    return _compose_packed(table, tokens, offsets, cvm)


def compose_backward(grad_table, cache, delta, cvm):
    tokens, offsets, act = cache
    if cvm == "add":
        _kernels.add_backward(grad_table, tokens, offsets, delta)
    else:
        _kernels.bi_backward(grad_table, tokens, offsets, act, delta)


# ---------------------------------------------------------------------------
# energies


def bi_energy(a, b, model: BicvmModel, lang_a, lang_b) -> float:
    """Squared Euclidean distance between the composed sentences."""
    fa = model.encode(lang_a, [a])[0]
    gb = model.encode(lang_b, [b])[0]
    diff = fa - gb
    return float(diff @ diff)


def hinge_energy(a, b, n, model: BicvmModel, lang_a, lang_b) -> float:
    """[margin + E(a, b) - E(a, n)]_+ with ``n`` a noise sentence in ``lang_b``."""
    return max(0.0, model.margin + bi_energy(a, b, model, lang_a, lang_b) - bi_energy(a, n, model, lang_a, lang_b))


def _hinge_block(fa, gb, gn, k, margin):
    """Hinge value and vector gradients; ``gn`` rows are pair-major (k per pair)."""
    rep = np.repeat(np.arange(fa.shape[0]), k)
    dab = fa - gb
    e_ab = np.einsum("ij,ij->i", dab, dab)
    dan = fa[rep] - gn
    e_an = np.einsum("ij,ij->i", dan, dan)
    h = margin + e_ab[rep] - e_an
    active = h > 0
    J = float(h[active].sum())
    w = active.astype(np.float64)[:, None]
    dfa = np.zeros_like(fa)
    dgb = np.zeros_like(gb)
    # d/dfa: 2(fa-gb) - 2(fa-gn);  d/dgb: -2(fa-gb);  d/dgn: 2(fa-gn)
    np.add.at(dfa, rep, w * (2 * dab[rep] - 2 * dan))
    np.add.at(dgb, rep, w * (-2 * dab[rep]))
    dgn = w * (2 * dan)
    return J, dfa, dgb, dgn, int(active.sum())


def _regularize(model, grads, langs, scale):
    J = 0.0
    if model.lam and scale:
        for lang in dict.fromkeys(langs):
            T = model.tables[lang].vectors
            J += 0.5 * model.lam * scale * float(np.vdot(T, T))
            grads[f"emb.{lang}"] += model.lam * scale * T
    return J


def bicvm_objective(batch_a, batch_b, noise_b, model: BicvmModel, lang_a, lang_b, reg_scale=1.0):
    """Summed hinge terms plus ``reg_scale * lam/2 * ||theta||^2`` over both tables.

    ``noise_b`` lists the noise sentences pair-major: ``k`` consecutive
    entries for each pair.  Returns ``(J, grads)`` with grads laid out like
    ``model.params()``.
    """
    B = len(batch_a)
    if len(batch_b) != B:
        raise InvalidArgument("batch sides differ in length")
    if B == 0:
        raise InvalidArgument("empty batch")
    if len(noise_b) % B:
        raise InvalidArgument("noise list must hold the same number of samples for every pair")
    k = len(noise_b) // B
    grads = model.params().zeros_like()
    ca, cb = model.composer(lang_a), model.composer(lang_b)
    Ta, Tb = model.tables[lang_a].vectors, model.tables[lang_b].vectors
    fa, cache_a = compose_batch(Ta, batch_a, ca)
    gbn, cache_b = compose_batch(Tb, list(batch_b) + list(noise_b), cb)
    gb, gn = gbn[:B], gbn[B:]
    J, dfa, dgb, dgn, _ = _hinge_block(fa, gb, gn, k, model.margin)
    compose_backward(grads[f"emb.{lang_a}"], cache_a, dfa, ca)
    compose_backward(grads[f"emb.{lang_b}"], cache_b, np.vstack([dgb, dgn]), cb)
    J += _regularize(model, grads, (lang_a, lang_b), reg_scale)
    return J, grads


def doc_objective(docs_a, docs_b, noise_docs_b, model: BicvmModel, lang_a, lang_b, reg_scale=1.0):
    """Document-level hinge: sentence vectors composed by the DOC composer."""
    B = len(docs_a)
    if B == 0 or len(docs_b) != B or len(noise_docs_b) % B:
        raise InvalidArgument("document batch shapes are inconsistent")
    k = len(noise_docs_b) // B
    grads = model.params().zeros_like()
    ca, cb, cd = model.composer(lang_a), model.composer(lang_b), model.doc_composer
    Ta, Tb = model.tables[lang_a].vectors, model.tables[lang_b].vectors
    all_b = list(docs_b) + list(noise_docs_b)
    Sa, cache_a = compose_batch(Ta, [s for d in docs_a for s in d], ca)
    Sb, cache_b = compose_batch(Tb, [s for d in all_b for s in d], cb)
    _, offa = _kernels.pack([range(len(d)) for d in docs_a])
    _, offb = _kernels.pack([range(len(d)) for d in all_b])
    Da, dcache_a = _compose_packed(Sa, np.arange(Sa.shape[0]), offa, cd)
    Db, dcache_b = _compose_packed(Sb, np.arange(Sb.shape[0]), offb, cd)
    J, dDa, dgb, dgn, _ = _hinge_block(Da, Db[:B], Db[B:], k, model.margin)
    dSa = np.zeros_like(Sa)
    dSb = np.zeros_like(Sb)
    compose_backward(dSa, dcache_a, dDa, cd)
    compose_backward(dSb, dcache_b, np.vstack([dgb, dgn]), cd)
    compose_backward(grads[f"emb.{lang_a}"], cache_a, dSa, ca)
    compose_backward(grads[f"emb.{lang_b}"], cache_b, dSb, cb)
    J += _regularize(model, grads, (lang_a, lang_b), reg_scale)
    return J, grads


# ---------------------------------------------------------------------------
# sampling and training


def sample_noise(n_items, indices, k, rng) -> np.ndarray:
    """``k`` uniform draws per index from ``range(n_items)``, never the index itself.

    Returns an array of shape (len(indices), k).
    """
    if n_items < 2:
        raise InvalidConfiguration("noise sampling needs at least two items")
    indices = np.asarray(indices, dtype=np.int64)
    draws = rng.integers(0, n_items - 1, size=(indices.size, k))
    draws += draws >= indices[:, None]
    return draws


def _check_langs(model, corpora):
    for c in corpora:
        for lang in (c.lang_a, c.lang_b):
            if lang not in model.tables:
                raise InvalidConfiguration(f"model has no embedding table for language {lang!r}")


def _schedule(sizes, batch_size, rng):
    """Round-robin minibatches across corpora; each corpus shuffled independently."""
    per = []
    for n in sizes:
        perm = rng.permutation(n)
        per.append([perm[i:i + batch_size] for i in range(0, n, batch_size)])
    out = []
    for i in range(max((len(p) for p in per), default=0)):
        for c, batches in enumerate(per):
            if i < len(batches):
                out.append((c, batches[i]))
    return out


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)  # (epoch, objective, seconds)


def train_bicvm(
    corpora,
    model: BicvmModel,
    mode: str = "single",
    optimizer: AdaGrad | None = None,
    epochs: int = 10,
    batch_size: int = 50,
    rng=None,
    strict_reg: bool = False,
) -> TrainLog:
    """Minibatch AdaGrad on the sentence-level objective (updates ``model`` in place).

    ``mode="joint"`` trains several corpora simultaneously, alternating
    minibatches between them; tables shared between corpora (same language
    id) receive updates from every corpus.  The regularizer is applied per
    minibatch scaled by the batch's share of its corpus, or once per pair
    when ``strict_reg`` is set.
    """
    if isinstance(corpora, ParallelCorpus):
        corpora = [corpora]
    corpora = list(corpora)
    if mode not in ("single", "joint"):
        raise InvalidArgument(f"unknown mode {mode!r}")
    if mode == "single" and len(corpora) != 1:
        raise InvalidConfiguration("single mode trains exactly one corpus")
    _check_langs(model, corpora)
    optimizer = optimizer or AdaGrad(0.05)
    rng = rng if rng is not None else np.random.default_rng(0)
    theta = model.params()
    history = TrainLog()
    for epoch in range(epochs):
        t0 = time.perf_counter()
        total = 0.0
        for ci, idx in _schedule([len(c) for c in corpora], batch_size, rng):
            c = corpora[ci]
            noise = sample_noise(len(c), idx, model.noise, rng)
            scale = float(len(idx)) if strict_reg else len(idx) / len(c)
            J, grads = bicvm_objective(
                [c.a[i] for i in idx], [c.b[i] for i in idx], [c.b[j] for j in noise.ravel()],
                model, c.lang_a, c.lang_b, reg_scale=scale,
            )
            total += J
            optimizer.step_inplace(theta, grads, names=list(dict.fromkeys([f"emb.{c.lang_a}", f"emb.{c.lang_b}"])))
        dt = time.perf_counter() - t0
        history.epochs.append((epoch + 1, total, dt))
        log.info("epoch=%d objective=%.6g wall=%.3fs", epoch + 1, total, dt)
    return history


def train_doc(
    corpora,
    model: BicvmModel,
    optimizer: AdaGrad | None = None,
    epochs: int = 10,
    batch_size: int = 10,
    rng=None,
    sentence_level: bool | None = None,
    strict_reg: bool = False,
) -> TrainLog:
    """Document-level training, adding the sentence objective for sentence-aligned corpora.

    ``sentence_level=None`` enables the sentence term exactly when a corpus
    is sentence-aligned.  Noise documents never include the aligned document.
    """
    if isinstance(corpora, (DocumentCorpus, ParallelCorpus)):
        corpora = [corpora]
    corpora = list(corpora)
    for c in corpora:
        if not isinstance(c, DocumentCorpus):
            raise InvalidConfiguration("document training needs corpora with document boundaries")
        if sentence_level and not c.sentence_aligned:
            raise InvalidConfiguration("sentence-level signal requested for a corpus without sentence alignment")
    _check_langs(model, corpora)
    optimizer = optimizer or AdaGrad(0.05)
    rng = rng if rng is not None else np.random.default_rng(0)
    theta = model.params()
    history = TrainLog()
    # per corpus: flattened sentence pairs and each document's sentence range
    flat = []
    for c in corpora:
        use_sent = c.sentence_aligned if sentence_level is None else sentence_level
        if use_sent:
            pc = c.sentence_pairs()
            starts = np.cumsum([0] + [len(d) for d in c.a_docs])
            flat.append((pc, starts))
        else:
            flat.append(None)
    for epoch in range(epochs):
        t0 = time.perf_counter()
        total = 0.0
        for ci, idx in _schedule([len(c) for c in corpora], batch_size, rng):
            c = corpora[ci]
            noise = sample_noise(len(c), idx, model.noise, rng)
            n_docs = len(c)
            scale = float(len(idx)) if strict_reg else len(idx) / n_docs
            J, grads = doc_objective(
                [c.a_docs[i] for i in idx], [c.b_docs[i] for i in idx], [c.b_docs[j] for j in noise.ravel()],
                model, c.lang_a, c.lang_b, reg_scale=scale,
            )
            if flat[ci] is not None:
                pc, starts = flat[ci]
                sidx = np.concatenate([np.arange(starts[i], starts[i + 1]) for i in idx])
                snoise = sample_noise(len(pc), sidx, model.noise, rng)
                Js, gs = bicvm_objective(
                    [pc.a[i] for i in sidx], [pc.b[i] for i in sidx], [pc.b[j] for j in snoise.ravel()],
                    model, c.lang_a, c.lang_b, reg_scale=0.0,
                )
                J += Js
                for name, g in gs.items():
                    grads[name] += g
            total += J
            optimizer.step_inplace(theta, grads, names=list(dict.fromkeys([f"emb.{c.lang_a}", f"emb.{c.lang_b}"])))
        dt = time.perf_counter() - t0
        history.epochs.append((epoch + 1, total, dt))
        log.info("epoch=%d objective=%.6g wall=%.3fs", epoch + 1, total, dt)
    return history
