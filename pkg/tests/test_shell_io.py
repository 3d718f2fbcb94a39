import logging

import numpy as np
import pytest

from cvsm.errors import InvalidConfiguration, InvalidInput, ParseError
from cvsm.lexicon import UNK, EmbeddingTable
from cvsm.shell.config import RunConfig, resolve_seed
from cvsm.shell.io import (
    Vocabulary,
    atomic_write,
    load_doc_pair,
    load_docs,
    load_embeddings,
    load_frame_lexicon,
    load_frames,
    load_parallel,
    load_trees,
    tokenize,
    write_embeddings,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# embeddings ----------------------------------------------------------------------


def test_embeddings_examples(tmp_path):
    t = load_embeddings(_write(tmp_path / "e.txt", "2 3\nfoo 1 2 3\nbar 0.5 -1 1e-3\n"))
    assert t.words == ["foo", "bar"] and t.dim == 3
    np.testing.assert_array_equal(t["bar"], [0.5, -1, 1e-3])
    empty = load_embeddings(_write(tmp_path / "z.txt", "0 5\n"))
    assert len(empty) == 0 and empty.dim == 5


def test_embeddings_short_line_names_line(tmp_path):
    p = _write(tmp_path / "e.txt", "2 3\nfoo 1 2 3\nbar 1 2\n")
    with pytest.raises(ParseError, match=r"e\.txt:3:") as exc:
        load_embeddings(p)
    assert exc.value.line == 3


@pytest.mark.parametrize("text", ["2 3\nfoo 1 2 3\n", "1 2\na 1 2\nb 3 4\n", "x y\n", "1 2\na 1 zz\n", ""])
def test_embeddings_malformed(tmp_path, text):
    with pytest.raises(ParseError):
        load_embeddings(_write(tmp_path / "e.txt", text))


def test_embeddings_duplicate_last_wins(tmp_path, caplog):
    p = _write(tmp_path / "e.txt", "2 2\na 1 1\na 2 2\n")
    with caplog.at_level(logging.WARNING):
        t = load_embeddings(p)
    np.testing.assert_array_equal(t["a"], [2, 2])
    assert "duplicate_word=a line=3 action=last_wins" in caplog.text


def test_embeddings_round_trip_bit_exact(tmp_path, rng):
    t = EmbeddingTable(["x", "y", UNK], rng.normal(size=(3, 4)) * 10.0 ** rng.integers(-20, 20, size=(3, 4)))
    write_embeddings(t, tmp_path / "e.txt")
    back = load_embeddings(tmp_path / "e.txt")
    assert back.words == t.words
    assert back.vectors.tobytes() == t.vectors.tobytes()


# vocabularies and tokens ---------------------------------------------------------


def test_vocabulary():
    v = Vocabulary()
    np.testing.assert_array_equal(v.ids(["a", "b", "a"]), [0, 1, 0])
    frozen = Vocabulary(["a", UNK], frozen=True)
    assert frozen.id("zzz") == 1 and len(frozen) == 2
    with pytest.raises(InvalidInput):
        Vocabulary(["a"], frozen=True).id("zzz")
    assert tokenize("The Cat  sat") == ["the", "cat", "sat"]
    assert tokenize("The Cat", lowercase=False) == ["The", "Cat"]


# parallel corpora ----------------------------------------------------------------


def test_parallel_three_lines(tmp_path):
    a = _write(tmp_path / "a.txt", "the cat\na dog\nhello\n")
    b = _write(tmp_path / "b.txt", "die katze\nein hund\nhallo\n")
    lp = load_parallel(a, b, "en", "de")
    assert len(lp.corpus) == 3 and lp.dropped == 0
    assert lp.vocab_a.words == ["the", "cat", "a", "dog", "hello"]
    np.testing.assert_array_equal(lp.corpus.b[1], [2, 3])


@pytest.mark.parametrize("side", ["a", "b"])
def test_parallel_empty_line_dropped_from_both(tmp_path, side, caplog):
    lines = {"a": ["one", "two", "three"], "b": ["eins", "zwei", "drei"]}
    lines[side][1] = "   "
    a = _write(tmp_path / "a.txt", "\n".join(lines["a"]) + "\n")
    b = _write(tmp_path / "b.txt", "\n".join(lines["b"]) + "\n")
    with caplog.at_level(logging.INFO):
        lp = load_parallel(a, b)
    assert len(lp.corpus) == 2 and lp.dropped == 1
    assert [lp.vocab_a.words[s[0]] for s in lp.corpus.a] == ["one", "three"]
    assert [lp.vocab_b.words[s[0]] for s in lp.corpus.b] == ["eins", "drei"]
    assert "dropped_empty_pairs=1 kept_pairs=2" in caplog.text


def test_parallel_unequal_lengths(tmp_path):
    a = _write(tmp_path / "a.txt", "x\ny\n")
    b = _write(tmp_path / "b.txt", "x\n")
    with pytest.raises(ParseError, match="alignment"):
        load_parallel(a, b)


# documents -------------------------------------------------------------------------


def test_docs(tmp_path):
    p = _write(tmp_path / "d.txt", "econ\tpolitics\nFirst sentence .\nsecond one\n\n\nsport\nGoal !\n")
    d = load_docs(p)
    assert d.labels == [["econ", "politics"], ["sport"]]
    assert d.docs[0] == [["first", "sentence", "."], ["second", "one"]]
    with pytest.raises(ParseError):
        load_docs(_write(tmp_path / "bad.txt", "econ\n\nsport\nx\n"))


def test_doc_pair(tmp_path):
    a = _write(tmp_path / "a.txt", "l1\nx y\n\nl2\nz\n")
    b = _write(tmp_path / "b.txt", "l1\nu\n\nl2\nv w\n")
    ld = load_doc_pair(a, b, "en", "de")
    assert len(ld.corpus) == 2 and ld.corpus.labels == [["l1"], ["l2"]]
    with pytest.raises(ParseError, match="alignment"):
        load_doc_pair(a, _write(tmp_path / "c.txt", "l1\nu\n"))


# trees and frames -------------------------------------------------------------------


def test_trees(tmp_path):
    p = _write(tmp_path / "t.txt", "1\t(FA:NP (lex:N/N big) (lex:N dog))\n\n(BA:S (lex:NP it) (lex:S\\NP runs))\n")
    trees = load_trees(p)
    assert len(trees) == 2
    np.testing.assert_array_equal(trees[0].label, [1.0])
    assert trees[1].label is None and trees[1].tree.rule == "BA"


def test_trees_bracket_error_names_line(tmp_path):
    p = _write(tmp_path / "t.txt", "(FA:NP (lex:N a) (lex:N b))\n((FA:NP (lex:N a) (lex:N b))\n")
    with pytest.raises(ParseError, match=r"t\.txt:2:"):
        load_trees(p)


def test_frames(tmp_path):
    p = _write(tmp_path / "f.txt", "run.v\tMotion\tnsubj:dog;prep_to:park,lake\nrun.v\t_\n")
    insts = load_frames(p)
    assert insts[0].frame == "Motion"
    assert insts[0].slots == [("nsubj", ["dog"]), ("prep_to", ["park", "lake"])]
    assert insts[1].frame is None and insts[1].slots == []
    for bad in ["run.v\n", "run.v\tX\tnsubj\n", "run.v\tX\tnsubj:\n", "\tX\tnsubj:a\n"]:
        with pytest.raises(ParseError):
            load_frames(_write(tmp_path / "bad.txt", bad))


def test_frame_lexicon(tmp_path):
    p = _write(tmp_path / "l.txt", "run.v\tMotion,Business\nrun.v\tMotion,Race\n")
    assert load_frame_lexicon(p) == {"run.v": ["Motion", "Business", "Race"]}
    with pytest.raises(ParseError):
        load_frame_lexicon(_write(tmp_path / "bad.txt", "run.v\t\n"))


# atomic writes and configuration -------------------------------------------------------


def test_atomic_write_leaves_old_file_on_failure(tmp_path):
    p = _write(tmp_path / "out.txt", "old\n")
    with pytest.raises(RuntimeError):
        with atomic_write(p) as fh:
            fh.write("partial")
            raise RuntimeError("boom")
    assert p.read_text() == "old\n"
    assert [x.name for x in tmp_path.iterdir()] == ["out.txt"]


def test_resolve_seed():
    assert resolve_seed(5, env={}) == 5
    assert resolve_seed(None, env={}) == 0
    assert resolve_seed(5, env={"CVSM_SEED": "11"}) == 11
    with pytest.raises(InvalidConfiguration):
        resolve_seed(5, env={"CVSM_SEED": "x"})


def test_run_config_validation(tmp_path):
    ok = _write(tmp_path / "a.txt", "x\n")
    RunConfig("bicvm", {"dim": 4, "margin": 1.0, "alpha": 0.5}, {"src": [ok]}).validate()
    for hyper in [{"dim": 0}, {"margin": 0.0}, {"step": -1.0}, {"alpha": 1.5}, {"noise": 0}, {"batch": 0}]:
        with pytest.raises(InvalidConfiguration):
            RunConfig("bicvm", hyper).validate()
    with pytest.raises(InvalidConfiguration, match="not found"):
        RunConfig("bicvm", {}, {"src": str(tmp_path / "missing.txt")}).validate()
