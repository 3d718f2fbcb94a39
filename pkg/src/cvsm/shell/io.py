"""Readers and writers for the plain-text corpus, embedding and tree formats."""

from __future__ import annotations

import logging
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from ..bicvm import DocumentCorpus, ParallelCorpus
from ..compose import LabeledTree
from ..errors import InvalidInput, ParseError
from ..frameid import FrameInstance
from ..lexicon import UNK, EmbeddingTable
from ..treegrad import parse_tree

log = logging.getLogger(__name__)


@contextmanager
def atomic_write(path):
    """Text handle on a temp file in the target directory, renamed over ``path`` on success."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            yield i, line.rstrip("\n").rstrip("\r")


# ---------------------------------------------------------------------------
# embeddings


def load_embeddings(path, unknown="unk") -> EmbeddingTable:
    """Header ``V d`` followed by ``V`` lines ``word v1 ... vd``."""
    it = _lines(path)
    try:
        _, header = next(it)
    except StopIteration:
        raise ParseError("missing header line", path, 1) from None
    parts = header.split()
    try:
        V, d = (int(p) for p in parts)
    except ValueError:
        raise ParseError(f"header must be 'V d', got {header!r}", path, 1) from None
    if V < 0 or d < 1:
        raise ParseError(f"invalid header sizes V={V} d={d}", path, 1)
    index: dict[str, int] = {}
    words: list[str] = []
    rows: list[np.ndarray] = []
    seen = 0
    for lineno, line in it:
        if not line.strip():
            continue
        seen += 1
        if seen > V:
            raise ParseError(f"more than the {V} vectors declared in the header", path, lineno)
        parts = line.split()
        if len(parts) != d + 1:
            raise ParseError(f"expected a word and {d} values, got {len(parts) - 1} values", path, lineno)
        try:
            vec = np.array([float(v) for v in parts[1:]])
        except ValueError:
            raise ParseError("non-numeric vector component", path, lineno) from None
        w = parts[0]
        if w in index:
            log.warning("duplicate_word=%s line=%d action=last_wins", w, lineno)
            rows[index[w]] = vec
        else:
            index[w] = len(words)
            words.append(w)
            rows.append(vec)
    if seen != V:
        raise ParseError(f"header declares {V} vectors but the file holds {seen}", path)
    mat = np.vstack(rows) if rows else np.zeros((0, d))
    return EmbeddingTable(words, mat, unknown=unknown)


def write_embeddings(table: EmbeddingTable, path):
    with atomic_write(path) as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for w, row in zip(table.words, table.vectors):
            fh.write(w + " " + " ".join("%.17g" % v for v in row) + "\n")


def write_vectors(rows, fh):
    for row in np.atleast_2d(rows):
        fh.write(" ".join("%.17g" % v for v in row) + "\n")


# ---------------------------------------------------------------------------
# vocabularies


class Vocabulary:
    """Word-to-id map; grows on lookup unless frozen, frozen maps fall back to ``<unk>``."""

    def __init__(self, words=(), frozen=False):
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(self.words)}
        self.frozen = frozen

    def id(self, word) -> int:
        i = self.index.get(word)
        if i is not None:
            return i
        if self.frozen:
            if UNK in self.index:
                return self.index[UNK]
            raise InvalidInput(f"unknown word {word!r}")
        self.index[word] = len(self.words)
        self.words.append(word)
        return self.index[word]

    def ids(self, tokens) -> np.ndarray:
        return np.array([self.id(t) for t in tokens], dtype=np.int64)

    def __len__(self):
        return len(self.words)


def tokenize(line, lowercase=True):
    return (line.lower() if lowercase else line).split()


# ---------------------------------------------------------------------------
# parallel and document corpora


@dataclass
class LoadedParallel:
    corpus: ParallelCorpus
    vocab_a: Vocabulary
    vocab_b: Vocabulary
    dropped: int


def read_parallel_tokens(path_a, path_b, lowercase=True):
    """Aligned token lists; empty sentences are dropped together with their partners."""
    with open(path_a, encoding="utf-8") as fa, open(path_b, encoding="utf-8") as fb:
        la = fa.read().splitlines()
        lb = fb.read().splitlines()
    if len(la) != len(lb):
        raise ParseError(f"alignment error: {len(la)} lines in {path_a} vs {len(lb)} lines in {path_b}")
    a, b, dropped = [], [], 0
    for x, y in zip(la, lb):
        ta, tb = tokenize(x, lowercase), tokenize(y, lowercase)
        if not ta or not tb:
            dropped += 1
            continue
        a.append(ta)
        b.append(tb)
    if dropped:
        log.info("dropped_empty_pairs=%d kept_pairs=%d", dropped, len(a))
    return a, b, dropped


def load_parallel(path_a, path_b, lang_a="src", lang_b="tgt", vocab_a=None, vocab_b=None, lowercase=True) -> LoadedParallel:
    a, b, dropped = read_parallel_tokens(path_a, path_b, lowercase)
    va = vocab_a if vocab_a is not None else Vocabulary()
    vb = vocab_b if vocab_b is not None else Vocabulary()
    corpus = ParallelCorpus(lang_a, lang_b, [va.ids(s) for s in a], [vb.ids(s) for s in b])
    return LoadedParallel(corpus, va, vb, dropped)


@dataclass
class TextDocuments:
    labels: list  # per document: list of label strings
    docs: list  # per document: list of token lists


def load_docs(path, lowercase=True) -> TextDocuments:
    """Blank-line separated documents; the first line holds tab-separated labels."""
    labels, docs = [], []
    cur_labels, cur, start = None, [], None

    def flush():
        if cur_labels is None:
            return
        if not cur:
            raise ParseError("document has a label line but no sentences", path, start)
        labels.append(cur_labels)
        docs.append(list(cur))

    for lineno, line in _lines(path):
        if not line.strip():
            flush()
            cur_labels, cur, start = None, [], None
            continue
        if cur_labels is None:
            cur_labels = [t for t in (p.strip() for p in line.split("\t")) if t]
            start = lineno
            continue
        cur.append(tokenize(line, lowercase))
    flush()
    return TextDocuments(labels, docs)


@dataclass
class LoadedDocuments:
    corpus: DocumentCorpus
    vocab_a: Vocabulary
    vocab_b: Vocabulary


def load_doc_pair(path_a, path_b, lang_a="src", lang_b="tgt", vocab_a=None, vocab_b=None,
                  sentence_aligned=False, lowercase=True) -> LoadedDocuments:
    """Two aligned document files; labels are taken from the first."""
    da, db = load_docs(path_a, lowercase), load_docs(path_b, lowercase)
    if len(da.docs) != len(db.docs):
        raise ParseError(f"alignment error: {len(da.docs)} documents in {path_a} vs {len(db.docs)} in {path_b}")
    va = vocab_a if vocab_a is not None else Vocabulary()
    vb = vocab_b if vocab_b is not None else Vocabulary()
    corpus = DocumentCorpus(
        lang_a, lang_b,
        [[va.ids(s) for s in d] for d in da.docs],
        [[vb.ids(s) for s in d] for d in db.docs],
        labels=da.labels, sentence_aligned=sentence_aligned,
    )
    return LoadedDocuments(corpus, va, vb)


# ---------------------------------------------------------------------------
# trees and frames


def load_trees(path) -> list:
    """One bracketed tree per line, optionally preceded by ``label<TAB>``.

    Labels are whitespace-separated reals.  Returns ``LabeledTree`` items
    (label ``None`` when absent).
    """
    out = []
    for lineno, line in _lines(path):
        if not line.strip():
            continue
        label = None
        if "\t" in line:
            head, line = line.split("\t", 1)
            try:
                label = np.array([float(v) for v in head.split()])
            except ValueError:
                raise ParseError(f"bad label {head!r}", path, lineno) from None
        try:
            tree = parse_tree(line)
        except ParseError as exc:
            raise ParseError(str(exc), path, lineno) from None
        out.append(LabeledTree(tree, label))
    return out


def load_frames(path) -> list:
    """``lexical_unit<TAB>gold_frame<TAB>label:word[,word...](;label:words)*`` per line.

    A gold frame of ``_`` or an empty field marks an unlabelled instance.
    """
    out = []
    for lineno, line in _lines(path):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ParseError(f"expected 2 or 3 tab-separated fields, got {len(parts)}", path, lineno)
        lu, frame = parts[0].strip(), parts[1].strip()
        if not lu:
            raise ParseError("empty lexical unit", path, lineno)
        slots = []
        if len(parts) == 3 and parts[2].strip():
            for chunk in parts[2].split(";"):
                label, sep, words = chunk.strip().partition(":")
                ws = [w for w in words.split(",") if w]
                if not sep or not label or not ws:
                    raise ParseError(f"malformed slot {chunk!r}", path, lineno)
                slots.append((label, ws))
        out.append(FrameInstance(lu, frame if frame not in ("", "_") else None, slots))
    return out


def load_frame_lexicon(path) -> dict:
    """``lexical_unit<TAB>frame[,frame...]`` per line; repeated units merge."""
    out: dict[str, list] = {}
    for lineno, line in _lines(path):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise ParseError("expected 'lexical_unit<TAB>frame[,frame...]'", path, lineno)
        frames = [f.strip() for f in parts[1].split(",") if f.strip()]
        if not frames:
            raise ParseError("lexical unit without frames", path, lineno)
        known = out.setdefault(parts[0].strip(), [])
        known.extend(f for f in frames if f not in known)
    return out
