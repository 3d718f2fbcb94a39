"""Versioned plain-text checkpoints.

Layout, one record per line::

    cvsm-checkpoint 1
    kind <model kind>
    seed <int or none>
    hyper <name> <json value>
    strings <name> <count>      followed by <count> lines
    vector <name> <n>           followed by one line of n values
    tensor <name> <rows> <cols> followed by <rows> lines of <cols> values
    end

Reals are written with 17 significant digits so a round trip is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..bicvm import BicvmModel
from ..compose import CcaeComposer, CcaeModel, CcgInventory
from ..errors import ParseError
from ..frameid import BlockInventory, FrameIdentifier, LogLinearModel, WsabieModel, word_features
from ..lexicon import EmbeddingTable
from ..optimize import ParamVector
from .io import atomic_write

MAGIC = "cvsm-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    seed: int | None = None
    hyper: dict = field(default_factory=dict)
    strings: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)  # name -> 1-D or 2-D float64 array


def _fmt(values) -> str:
    return " ".join("%.17g" % v for v in values)


def write_checkpoint(ck: Checkpoint, path):
    with atomic_write(path) as fh:
        fh.write(f"{MAGIC} {VERSION}\n")
        fh.write(f"kind {ck.kind}\n")
        fh.write(f"seed {ck.seed if ck.seed is not None else 'none'}\n")
        for k, v in ck.hyper.items():
            fh.write(f"hyper {k} {json.dumps(v, sort_keys=True)}\n")
        for k, items in ck.strings.items():
            items = list(items)
            for s in items:
                if "\n" in s or "\r" in s:
                    raise ValueError(f"string in section {k!r} contains a line break")
            fh.write(f"strings {k} {len(items)}\n")
            for s in items:
                fh.write(s + "\n")
        for k, arr in ck.tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim == 1:
                fh.write(f"vector {k} {arr.size}\n{_fmt(arr)}\n")
            elif arr.ndim == 2:
                fh.write(f"tensor {k} {arr.shape[0]} {arr.shape[1]}\n")
                for row in arr:
                    fh.write(_fmt(row) + "\n")
            else:
                raise ValueError(f"tensor {k!r} has {arr.ndim} dimensions")
        fh.write("end\n")


def read_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("truncated checkpoint", path, pos + 1)
        pos += 1
        return lines[pos - 1]

    def floats(line, n):
        vals = line.split()
        if len(vals) != n:
            raise ParseError(f"expected {n} values, got {len(vals)}", path, pos)
        return [float(v) for v in vals]

    def record(ck) -> bool:
        tag, _, rest = take().partition(" ")
        if tag == "end":
            return True
        if tag == "kind":
            ck.kind = rest.strip()
        elif tag == "seed":
            ck.seed = None if rest.strip() == "none" else int(rest)
        elif tag == "hyper":
            name, _, val = rest.partition(" ")
            ck.hyper[name] = json.loads(val)
        elif tag == "strings":
            name, n = rest.rsplit(" ", 1)
            ck.strings[name] = [take() for _ in range(int(n))]
        elif tag == "vector":
            name, n = rest.rsplit(" ", 1)
            ck.tensors[name] = np.array(floats(take(), int(n)))
        elif tag == "tensor":
            name, r, c = rest.rsplit(" ", 2)
            r, c = int(r), int(c)
            ck.tensors[name] = np.array([floats(take(), c) for _ in range(r)]).reshape(r, c)
        else:
            raise ParseError(f"unknown record {tag!r}", path, pos)
        return False

    head = take().split()
    if len(head) != 2 or head[0] != MAGIC:
        raise ParseError("not a checkpoint file", path, 1)
    if head[1] != str(VERSION):
        raise ParseError(f"checkpoint version {head[1]} is not supported (expected {VERSION})", path, 1)
    ck = Checkpoint(kind="")
    finished = False
    while not finished:
        try:
            finished = record(ck)
        except ParseError:
            raise
        except ValueError as exc:
            # json.JSONDecodeError is a ValueError as well
            raise ParseError(f"malformed record: {exc}", path, pos) from None
    if any(line.strip() for line in lines[pos:]):
        raise ParseError("content after end marker", path, pos + 1)
    if not ck.kind:
        raise ParseError("checkpoint lacks a kind record", path)
    return ck


# ---------------------------------------------------------------------------
# model <-> checkpoint


def _require(ck: Checkpoint, tensors, strings=()):
    extra = set(ck.tensors) - set(tensors)
    if extra:
        raise ParseError(f"unknown tensor section {sorted(extra)[0]!r} in {ck.kind} checkpoint")
    missing = [t for t in tensors if t not in ck.tensors] + [s for s in strings if s not in ck.strings]
    if missing:
        raise ParseError(f"{ck.kind} checkpoint lacks section {missing[0]!r}")
    extra = set(ck.strings) - set(strings)
    if extra:
        raise ParseError(f"unknown string section {sorted(extra)[0]!r} in {ck.kind} checkpoint")


def _bicvm_to(model: BicvmModel) -> Checkpoint:
    hyper = {
        "languages": list(model.tables),
        "margin": model.margin,
        "noise": model.noise,
        "lambda": model.lam,
        "default_composer": model.default_composer,
        "composers": dict(model.composers),
        "doc_composer": model.doc_composer,
    }
    strings = {f"vocab.{lang}": t.words for lang, t in model.tables.items()}
    tensors = {f"emb.{lang}": t.vectors for lang, t in model.tables.items()}
    return Checkpoint("bicvm", hyper=hyper, strings=strings, tensors=tensors)


def _bicvm_from(ck: Checkpoint) -> BicvmModel:
    langs = ck.hyper["languages"]
    _require(ck, [f"emb.{l}" for l in langs], [f"vocab.{l}" for l in langs])
    tables = {}
    for lang in langs:
        words, vecs = ck.strings[f"vocab.{lang}"], ck.tensors[f"emb.{lang}"]
        if vecs.ndim != 2 or vecs.shape[0] != len(words):
            raise ParseError(f"section 'emb.{lang}' does not match its vocabulary")
        tables[lang] = EmbeddingTable(words, vecs)
    h = ck.hyper
    return BicvmModel(tables, margin=h["margin"], noise=h["noise"], lam=h["lambda"],
                      default_composer=h["default_composer"], composers=h["composers"], doc_composer=h["doc_composer"])


def _ccae_to(m: CcaeModel) -> Checkpoint:
    c = m.composer
    hyper = {"model": c.model, "dim": c.dim, "label_dim": int(m.params["label.W"].shape[0])}
    strings = {"vocab": m.words, "combinators": list(c.inventory.combinators), "categories": list(c.inventory.categories)}
    return Checkpoint("ccae", hyper=hyper, strings=strings, tensors=dict(m.params.items()))


def _ccae_from(ck: Checkpoint) -> CcaeModel:
    h = ck.hyper
    inv = CcgInventory(ck.strings["combinators"], ck.strings["categories"])
    comp = CcaeComposer(h["model"], h["dim"], inv)
    words = ck.strings["vocab"]
    layout = comp.init_params(np.random.default_rng(0), len(words), label_dim=h["label_dim"])
    _require(ck, layout.names(), ["vocab", "combinators", "categories"])
    params = ParamVector()
    for name in layout.names():
        arr = ck.tensors[name]
        if arr.shape != layout[name].shape:
            raise ParseError(f"section {name!r} has shape {arr.shape}, expected {layout[name].shape}")
        params[name] = arr
    return CcaeModel(comp, params, words)


def _frameid_to(fi: FrameIdentifier) -> Checkpoint:
    m = fi.model
    hyper = {"margin": m.margin, "block_dim": fi.inventory.n}
    strings = {
        "frames": m.frames,
        "labels": list(fi.inventory.labels),
        "vocab": fi.lexicon.words,
        "frame_lexicon": [f"{lu}\t{','.join(map(str, ids))}" for lu, ids in m.lexicon.items()],
    }
    return Checkpoint("wsabie", hyper=hyper, strings=strings, tensors={"M": m.M, "Y": m.Y, "emb": fi.lexicon.vectors})


def _lexicon_lines(lines):
    out = {}
    for line in lines:
        lu, _, ids = line.partition("\t")
        out[lu] = [int(i) for i in ids.split(",") if i]
    return out


def _frameid_from(ck: Checkpoint) -> FrameIdentifier:
    _require(ck, ["M", "Y", "emb"], ["frames", "labels", "vocab", "frame_lexicon"])
    model = WsabieModel(ck.tensors["M"], ck.tensors["Y"], ck.hyper["margin"], ck.strings["frames"],
                        _lexicon_lines(ck.strings["frame_lexicon"]))
    inv = BlockInventory(ck.strings["labels"], ck.hyper["block_dim"])
    return FrameIdentifier(model, inv, EmbeddingTable(ck.strings["vocab"], ck.tensors["emb"]))


def _loglinear_to(m: LogLinearModel) -> Checkpoint:
    if m.feature_fn is not word_features:
        raise ValueError("only the word-feature log-linear model can be checkpointed")
    by_col = sorted(m.feature_index.items(), key=lambda kv: kv[1])
    strings = {
        "frames": m.frames,
        "features": [f"{f}\t{key}" for (f, key), _ in by_col],
        "frame_lexicon": [f"{lu}\t{','.join(map(str, ids))}" for lu, ids in m.lexicon.items()],
    }
    return Checkpoint("loglinear", hyper={"features": "words"}, strings=strings, tensors={"psi": m.psi})


def _loglinear_from(ck: Checkpoint) -> LogLinearModel:
    _require(ck, ["psi"], ["frames", "features", "frame_lexicon"])
    index = {}
    for col, line in enumerate(ck.strings["features"]):
        f, _, key = line.partition("\t")
        index[(int(f), key)] = col
    if len(index) != ck.tensors["psi"].size:
        raise ParseError("feature list does not match section 'psi'")
    return LogLinearModel(ck.tensors["psi"], index, ck.strings["frames"], _lexicon_lines(ck.strings["frame_lexicon"]), word_features)


_WRITERS = [(BicvmModel, _bicvm_to), (CcaeModel, _ccae_to), (FrameIdentifier, _frameid_to), (LogLinearModel, _loglinear_to)]
_READERS = {"bicvm": _bicvm_from, "ccae": _ccae_from, "wsabie": _frameid_from, "loglinear": _loglinear_from}


def to_checkpoint(model, seed=None) -> Checkpoint:
    for cls, fn in _WRITERS:
        if isinstance(model, cls):
            ck = fn(model)
            ck.seed = seed
            return ck
    raise TypeError(f"cannot checkpoint objects of type {type(model).__name__}")


def from_checkpoint(ck: Checkpoint):
    reader = _READERS.get(ck.kind)
    if reader is None:
        raise ParseError(f"unknown model kind {ck.kind!r}")
    try:
        return reader(ck)
    except KeyError as exc:
        raise ParseError(f"{ck.kind} checkpoint lacks {exc.args[0]!r}") from None


def save_checkpoint(model, path, seed=None):
    write_checkpoint(to_checkpoint(model, seed), path)


def load_checkpoint(path):
    """Returns ``(model, checkpoint record)``."""
    ck = read_checkpoint(path)
    return from_checkpoint(ck), ck
