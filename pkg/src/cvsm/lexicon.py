"""Word lexicon with a dense embedding matrix."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument, InvalidInput
from .numerics import gaussian_init

UNK = "<unk>"


class EmbeddingTable:
    """Maps word strings to rows of a ``(V, d)`` float64 matrix.

    If the vocabulary contains ``UNK`` it is used for out-of-vocabulary lookups
    when ``unknown="unk"``; otherwise unknown words raise.
    """

    def __init__(self, words, vectors, unknown="unk"):
        vectors = np.asarray(vectors, dtype=np.float64)
        words = list(words)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise InvalidArgument(f"expected {len(words)} rows, got array of shape {vectors.shape}")
        if unknown not in ("unk", "error"):
            raise InvalidArgument(f"unknown-word policy must be 'unk' or 'error', got {unknown!r}")
        self.words = words
        self.vectors = vectors
        self.index = {w: i for i, w in enumerate(words)}
        self.unknown = unknown

    @classmethod
    def random(cls, words, dim, rng, sigma2=0.1, with_unk=True, unknown="unk"):
        words = list(dict.fromkeys(words))
        if with_unk and UNK not in words:
            words.append(UNK)
        return cls(words, gaussian_init(len(words), dim, 0.0, sigma2, rng), unknown=unknown)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def lookup_id(self, word) -> int:
        i = self.index.get(word)
        if i is not None:
            return i
        if self.unknown == "unk" and UNK in self.index:
            return self.index[UNK]
        raise InvalidInput(f"unknown word {word!r}")

    def ids(self, words) -> np.ndarray:
        return np.fromiter((self.lookup_id(w) for w in words), dtype=np.int64, count=len(words))

    def __getitem__(self, word) -> np.ndarray:
        return self.vectors[self.lookup_id(word)]

    def copy(self):
        return EmbeddingTable(list(self.words), self.vectors.copy(), unknown=self.unknown)

    def nearest(self, query, k=5, exclude_self=True):
        """``k`` nearest words to ``query`` (word or vector) by cosine similarity."""
        if isinstance(query, str):
            qid = self.lookup_id(query)
            q = self.vectors[qid]
        else:
            qid = None
            q = np.asarray(query, dtype=np.float64)
        norms = np.linalg.norm(self.vectors, axis=1) * np.linalg.norm(q)
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(norms > 0, self.vectors @ q / np.where(norms > 0, norms, 1.0), -np.inf)
        if exclude_self and qid is not None:
            sims[qid] = -np.inf
        if UNK in self.index:
            sims[self.index[UNK]] = -np.inf
        # stable sort so equal similarities keep vocabulary order
        order = np.argsort(-sims, kind="stable")
        order = [i for i in order if np.isfinite(sims[i])][:k]
        return [(self.words[i], float(sims[i])) for i in order]
