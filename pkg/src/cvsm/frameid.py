"""Frame identification with a joint context/label embedding trained by WARP,
and the log-linear baseline."""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidState
from .numerics import gaussian_init
from .optimize import lbfgs_minimize

log = logging.getLogger(__name__)


@dataclass
class FrameInstance:
    """A predicate occurrence: lexical unit, gold frame (training only) and context slots.

    ``slots`` is a list of ``(position_label, [words])``; position labels are
    dependency labels or dependency-path strings.
    """

    lexical_unit: str
    frame: str | None
    slots: list = field(default_factory=list)


class BlockInventory:
    """Ordered position labels; block ``i`` occupies ``[i*n, (i+1)*n)`` of the context vector."""

    def __init__(self, labels, dim):
        labels = list(dict.fromkeys(labels))
        if dim < 1:
            raise InvalidArgument("embedding dimension must be positive")
        self.labels = tuple(labels)
        self.index = {lab: i for i, lab in enumerate(labels)}
        self.n = dim

    @classmethod
    def mine(cls, instances, dim, direct_labels=(), min_count=1):
        """Direct dependency labels followed by slot labels seen in training at least ``min_count`` times."""
        counts = Counter(label for inst in instances for label, words in inst.slots if words)
        mined = sorted(lab for lab, c in counts.items() if c >= min_count and lab not in set(direct_labels))
        return cls(list(direct_labels) + mined, dim)

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return self.k * self.n


def build_block_vector(inst: FrameInstance, inv: BlockInventory, lexicon, stats: Counter | None = None) -> np.ndarray:
    """Concatenated block context vector of length k*n.

    Each block holds the mean embedding of all words under its label
    (repeated labels pool their words); empty blocks stay zero.  Unknown
    labels and words out of the lexicon are skipped and counted in ``stats``.
    """
    if lexicon.dim != inv.n:
        raise InvalidArgument(f"lexicon dimension {lexicon.dim} != inventory block size {inv.n}")
    out = np.zeros(inv.size)
    sums: dict[int, np.ndarray] = {}
    counts: Counter = Counter()
    for label, words in inst.slots:
        b = inv.index.get(label)
        if b is None:
            if stats is not None:
                stats["unknown_label"] += 1
            continue
        for w in words:
            if w not in lexicon:
                if stats is not None:
                    stats["unknown_word"] += 1
                continue
            vec = lexicon.vectors[lexicon.index[w]]
            sums[b] = vec.copy() if b not in sums else sums[b] + vec
            counts[b] += 1
    n = inv.n
    for b, s in sums.items():
        out[b * n:(b + 1) * n] = s / counts[b]
    return out


@dataclass
class WsabieModel:
    """Projection ``M`` (m x kn), frame embeddings ``Y`` (F x m), margin and frame lexicon."""

    M: np.ndarray
    Y: np.ndarray
    margin: float
    frames: list
    lexicon: dict  # lexical unit -> sorted list of frame ids

    def __post_init__(self):
        if self.margin <= 0:
            raise InvalidArgument("margin must be positive")
        F = self.Y.shape[0]
        if len(self.frames) != F:
            raise InvalidArgument("frame name list does not match Y")
        if self.M.shape[0] != self.Y.shape[1]:
            raise InvalidArgument(f"M has {self.M.shape[0]} rows but Y has {self.Y.shape[1]} columns")
        for lu, ids in self.lexicon.items():
            if any(not 0 <= i < F for i in ids):
                raise InvalidArgument(f"frame lexicon entry for {lu!r} references an unknown frame id")
        self.frame_index = {f: i for i, f in enumerate(self.frames)}

    @classmethod
    def create(cls, input_dim, frames, lexicon, m=256, margin=0.01, rng=None, sigma2=0.01):
        rng = rng if rng is not None else np.random.default_rng(0)
        M = gaussian_init(m, input_dim, 0.0, sigma2, rng)
        Y = gaussian_init(len(frames), m, 0.0, sigma2, rng)
        return cls(M, Y, margin, list(frames), {k: sorted(v) for k, v in lexicon.items()})

    @property
    def n_frames(self) -> int:
        return self.Y.shape[0]

    def confusion_set(self, lexical_unit):
        """Frame ids admissible for ``lexical_unit``; all frames when it is unseen."""
        ids = self.lexicon.get(lexical_unit)
        if ids:
            return list(ids)
        return list(range(self.n_frames))

    def project(self, x_vec) -> np.ndarray:
        x_vec = np.asarray(x_vec, dtype=np.float64)
        if x_vec.shape != (self.M.shape[1],):
            raise InvalidArgument(f"context vector must have length {self.M.shape[1]}, got {x_vec.shape}")
        return self.M @ x_vec


def score(x_vec, frame: int, model: WsabieModel) -> float:
    """Dot product between the projected context and the frame embedding."""
    if not 0 <= frame < model.n_frames:
        raise InvalidArgument(f"frame id {frame} out of range")
    return float(model.project(x_vec) @ model.Y[frame])


def scores(x_vec, model: WsabieModel) -> np.ndarray:
    return model.Y @ model.project(x_vec)


def rank_weight(rank: int) -> float:
    """L(r) = sum_{i=1..r} 1/i."""
    return float(np.sum(1.0 / np.arange(1, rank + 1))) if rank > 0 else 0.0


def estimate_rank(n_candidates: int, n_sampled: int) -> int:
    """floor((|F_l| - 1) / N) for a violation found at the N-th draw."""
    return (n_candidates - 1) // n_sampled


def sample_violation(pos_score, neg_scores, margin, rng):
    """Draw negatives without replacement until ``margin + s_neg - s_pos > 0``.

    Returns ``(n_sampled, position)`` of the violator in ``neg_scores``, or
    ``(len(neg_scores), None)`` when the negatives are exhausted.
    """
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    order = rng.permutation(neg_scores.size)
    viol = margin + neg_scores[order] - pos_score > 0
    hit = np.flatnonzero(viol)
    if hit.size == 0:
        return neg_scores.size, None
    return int(hit[0]) + 1, int(order[hit[0]])


def warp_hinge(x_vec, pos: int, neg: int, M, Y, margin, weight=1.0):
    """weight * [margin + s(x, neg) - s(x, pos)]_+ and its gradients w.r.t. M and Y."""
    u = M @ x_vec
    h = margin + u @ Y[neg] - u @ Y[pos]
    gM = np.zeros_like(M)
    gY = np.zeros_like(Y)
    if h <= 0:
        return 0.0, gM, gY
    dy = Y[neg] - Y[pos]
    gM += weight * np.outer(dy, x_vec)
    gY[neg] += weight * u
    gY[pos] -= weight * u
    return weight * float(h), gM, gY


@dataclass
class WarpStep:
    violated: bool
    n_sampled: int = 0
    rank: int = 0
    weight: float = 0.0
    negative: int | None = None
    loss: float = 0.0


def warp_update_vector(x_vec, gold: int, confusion, model: WsabieModel, rng, lr: float) -> WarpStep:
    """One WARP step on a precomputed context vector; updates ``model`` in place."""
    confusion = list(confusion)
    if gold not in confusion:
        raise InvalidArgument(f"gold frame {gold} is not in the confusion set")
    if len(confusion) < 2:
        return WarpStep(False)
    negs = np.array([f for f in confusion if f != gold])
    u = model.project(x_vec)
    s_pos = float(u @ model.Y[gold])
    s_neg = model.Y[negs] @ u
    n, pos = sample_violation(s_pos, s_neg, model.margin, rng)
    if pos is None:
        return WarpStep(False, n)
    neg = int(negs[pos])
    rank = estimate_rank(len(confusion), n)
    w = rank_weight(rank)
    h = model.margin + float(s_neg[pos]) - s_pos
    dy = model.Y[neg] - model.Y[gold]
    # all gradients use pre-update values
    model.M -= lr * w * np.outer(dy, x_vec)
    model.Y[neg] -= lr * w * u
    model.Y[gold] += lr * w * u
    return WarpStep(True, n, rank, w, neg, w * h)


def warp_update(inst: FrameInstance, model: WsabieModel, inv: BlockInventory, lexicon, rng, lr: float) -> WarpStep:
    x = build_block_vector(inst, inv, lexicon)
    gold = model.frame_index[inst.frame]
    return warp_update_vector(x, gold, model.confusion_set(inst.lexical_unit), model, rng, lr)


def predict_frame_vector(x_vec, lexical_unit, model: WsabieModel) -> int:
    if model.n_frames == 0:
        raise InvalidState("model has no frames")
    cands = model.confusion_set(lexical_unit)
    if len(cands) == 1:
        return cands[0]
    s = model.Y[cands] @ model.project(x_vec)
    # argmax returns the first maximum; candidates are sorted so ties go to the lowest id
    return cands[int(np.argmax(s))]


def predict_frame(inst: FrameInstance, model: WsabieModel, inv: BlockInventory, lexicon) -> int:
    return predict_frame_vector(build_block_vector(inst, inv, lexicon), inst.lexical_unit, model)


def frame_lexicon_with_training(frame_lexicon: dict, instances):
    """Union of the given lexicon and (lexical unit, gold frame) pairs from training data."""
    out = {lu: list(frames) for lu, frames in frame_lexicon.items()}
    for inst in instances:
        if inst.frame is None:
            continue
        frames = out.setdefault(inst.lexical_unit, [])
        if inst.frame not in frames:
            frames.append(inst.frame)
    return out


def _frame_ids(frames, lexicon_names):
    index = {f: i for i, f in enumerate(frames)}
    return {lu: sorted(index[f] for f in fs) for lu, fs in lexicon_names.items()}


def train_wsabie(instances, inv: BlockInventory, lexicon, frame_lexicon: dict, m=256, lr=1e-4,
                 margin=0.01, epochs=10, rng=None, sigma2=0.01) -> WsabieModel:
    """SGD over shuffled instances with WARP updates.  ``frame_lexicon`` maps lexical units to frame names."""
    rng = rng if rng is not None else np.random.default_rng(0)
    lex_names = frame_lexicon_with_training(frame_lexicon, instances)
    frames = sorted({f for fs in lex_names.values() for f in fs})
    model = WsabieModel.create(inv.size, frames, _frame_ids(frames, lex_names), m=m, margin=margin, rng=rng, sigma2=sigma2)
    stats = Counter()
    X = np.vstack([build_block_vector(inst, inv, lexicon, stats) for inst in instances]) if instances else np.zeros((0, inv.size))
    if stats:
        log.warning("skipped_unknown_labels=%d skipped_unknown_words=%d", stats["unknown_label"], stats["unknown_word"])
    golds = [model.frame_index[inst.frame] for inst in instances]
    for epoch in range(epochs):
        t0 = time.perf_counter()
        loss, updates = 0.0, 0
        for i in rng.permutation(len(instances)):
            step = warp_update_vector(X[i], golds[i], model.confusion_set(instances[i].lexical_unit), model, rng, lr)
            loss += step.loss
            updates += step.violated
        log.info("epoch=%d objective=%.6g updates=%d wall=%.3fs", epoch + 1, loss, updates, time.perf_counter() - t0)
    return model


# ---------------------------------------------------------------------------
# log-linear baseline


def word_features(inst: FrameInstance):
    """Words conjoined with their position label, plus the bare words as backoff."""
    feats = Counter()
    for label, words in inst.slots:
        for w in words:
            feats[f"{label}|{w}"] += 1.0
            feats[f"w|{w}"] += 1.0
    return feats


def embedding_features(inst, inv, lexicon):
    x = build_block_vector(inst, inv, lexicon)
    return {f"e|{i}": float(v) for i, v in enumerate(x) if v != 0.0}


@dataclass
class LogLinearModel:
    """p(y | x, l) proportional to exp(psi . f(y, x, l)) over the confusion set.

    Features are input features conjoined with the candidate frame.
    """

    psi: np.ndarray
    feature_index: dict  # (frame id, input feature) -> column
    frames: list
    lexicon: dict  # lexical unit -> frame ids
    feature_fn: object = None

    def confusion_set(self, lexical_unit):
        ids = self.lexicon.get(lexical_unit)
        return list(ids) if ids else list(range(len(self.frames)))

    def _candidate_scores(self, feats, cands):
        out = np.zeros(len(cands))
        for j, f in enumerate(cands):
            for key, v in feats.items():
                col = self.feature_index.get((f, key))
                if col is not None:
                    out[j] += self.psi[col] * v
        return out

    def probabilities(self, inst):
        cands = self.confusion_set(inst.lexical_unit)
        s = self._candidate_scores(self.feature_fn(inst), cands)
        s -= s.max()
        p = np.exp(s)
        return cands, p / p.sum()


def _compile(instances, feature_fn, lex_ids, frame_index):
    """Per instance: gold position, and per candidate the (columns, values) arrays."""
    feat_index: dict = {}
    data = []
    for inst in instances:
        cands = lex_ids.get(inst.lexical_unit) or list(range(len(frame_index)))
        gold = cands.index(frame_index[inst.frame])
        feats = feature_fn(inst)
        rows = []
        for f in cands:
            cols = np.array([feat_index.setdefault((f, k), len(feat_index)) for k in feats], dtype=np.int64)
            rows.append((cols, np.fromiter(feats.values(), dtype=np.float64, count=len(feats))))
        data.append((gold, rows))
    return feat_index, data


def loglinear_objective(psi, data, C):
    """Negative regularized log-likelihood  -sum log p + C ||psi||^2  and its gradient."""
    J = C * float(psi @ psi)
    g = 2.0 * C * psi
    for gold, rows in data:
        s = np.array([vals @ psi[cols] for cols, vals in rows])
        top = s.max()
        p = np.exp(s - top)
        Z = p.sum()
        p /= Z
        J -= s[gold] - (top + np.log(Z))
        for j, (cols, vals) in enumerate(rows):
            coef = p[j] - (1.0 if j == gold else 0.0)
            if coef:
                np.add.at(g, cols, coef * vals)
    return J, g


def loglinear_train(instances, frame_lexicon: dict, C=0.1, feature_fn=word_features, max_iter=100, tol=1e-6) -> LogLinearModel:
    """Fit the L2-regularized log-linear model with L-BFGS."""
    lex_names = frame_lexicon_with_training(frame_lexicon, instances)
    frames = sorted({f for fs in lex_names.values() for f in fs})
    frame_index = {f: i for i, f in enumerate(frames)}
    lex_ids = _frame_ids(frames, lex_names)
    feat_index, data = _compile(instances, feature_fn, lex_ids, frame_index)
    psi0 = np.zeros(len(feat_index))
    res = lbfgs_minimize(lambda w: loglinear_objective(w, data, C), psi0, max_iter=max_iter, tol=tol)
    return LogLinearModel(res.theta, feat_index, frames, lex_ids, feature_fn)


def loglinear_predict(model: LogLinearModel, inst: FrameInstance) -> int:
    cands = model.confusion_set(inst.lexical_unit)
    if len(cands) == 1:
        return cands[0]
    s = model._candidate_scores(model.feature_fn(inst), cands)
    return cands[int(np.argmax(s))]


@dataclass
class FrameIdentifier:
    """WSABIE model bundled with the context inventory and input embeddings it was trained on."""

    model: WsabieModel
    inventory: BlockInventory
    lexicon: object

    def predict(self, inst: FrameInstance) -> str:
        return self.model.frames[predict_frame(inst, self.model, self.inventory, self.lexicon)]
