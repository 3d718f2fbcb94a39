import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cvsm.compose import (
    CATCH_ALL,
    CcaeComposer,
    CcaeModel,
    CcgInventory,
    LabeledTree,
    add_compose,
    bi_compose,
    ccae_encode,
    ccae_objective,
    compose_rows,
    doc_compose,
    train_ccae,
)
from cvsm.errors import InvalidArgument, InvalidConfiguration, InvalidInput
from cvsm.lexicon import EmbeddingTable
from cvsm.optimize import grad_check
from cvsm.treegrad import parse_tree

finite = st.floats(-3, 3, allow_nan=False)


def _table(vectors):
    vectors = np.asarray(vectors, dtype=float)
    return EmbeddingTable([f"w{i}" for i in range(len(vectors))], vectors)


def _ids(tree):
    for leaf in tree.leaves():
        leaf.word_id = int(leaf.word[1:])
    return tree


# inventory --------------------------------------------------------------------


def test_default_inventory_sizes():
    inv = CcgInventory.default()
    assert len(inv.combinators) == 14
    assert {"FA", "BA", "LEX", "CONJ", "RP", "LP", "BX", "TR", "FC", "BC", "FUNNY", "RTC", "LTC", "GBX"} == set(inv.combinators)
    assert len(inv.categories) == 25
    assert inv.all_categories[-1] == CATCH_ALL
    assert inv.category("S/(S\\NP)/never-seen") == CATCH_ALL
    assert inv.category(inv.categories[0]) == inv.categories[0]
    with pytest.raises(InvalidArgument):
        inv.combinator("XYZ")


def test_inventory_write_one_token_per_line(tmp_path):
    inv = CcgInventory.default()
    inv.write(tmp_path / "c.txt", tmp_path / "t.txt")
    assert (tmp_path / "c.txt").read_text().split("\n")[:-1] == list(inv.combinators)
    assert (tmp_path / "t.txt").read_text().split("\n")[:-1] == list(inv.all_categories)


def test_every_inventory_entry_has_parameters(rng):
    inv = CcgInventory.default()
    for model in "BCD":
        p = CcaeComposer(model, 2, inv).init_params(rng, 3)
        for c in inv.combinators:
            assert f"enc.W.c:{c}" in p.names()
        if model != "B":
            for t in inv.all_categories:
                key = "enc.W" if model == "C" else "enc.T"
                assert f"{key}.t:{t}" in p.names()


# ADD / BI / DOC -----------------------------------------------------------------


def test_add_examples():
    table = _table([[1, 0], [0, 2]])
    np.testing.assert_array_equal(add_compose([0, 1], table), [1, 2])
    np.testing.assert_array_equal(add_compose([1], table), [0, 2])
    np.testing.assert_array_equal(add_compose(["w0", "w1"], table), [1, 2])
    with pytest.raises(InvalidInput):
        add_compose([], table)


@given(hnp.arrays(np.float64, (5, 3), elements=finite), st.permutations(range(5)))
def test_add_permutation_invariant(vectors, perm):
    table = _table(vectors)
    np.testing.assert_allclose(add_compose(list(perm), table), add_compose(list(range(5)), table), atol=1e-12)


def test_bi_examples():
    table = _table([[0.5, -0.5], [0.0, 0.0]])
    # tanh(0.5) to 1e-6
    np.testing.assert_allclose(bi_compose([0], table), [0.462117, -0.462117], atol=1e-6)
    np.testing.assert_array_equal(bi_compose([1, 1, 1], table), [0.0, 0.0])
    with pytest.raises(InvalidInput):
        bi_compose([], table)


def test_bi_matches_definition(rng):
    vecs = rng.normal(size=(6, 4))
    sent = [3, 0, 5, 2]
    prev = np.zeros(4)
    expected = np.zeros(4)
    for i in sent:
        expected += np.tanh(prev + vecs[i])
        prev = vecs[i]
    np.testing.assert_allclose(bi_compose(sent, _table(vecs)), expected, atol=1e-14)


def test_bi_order_sensitivity_witness():
    rng = np.random.default_rng(4)
    table = _table(rng.normal(size=(4, 4)))
    sent = [0, 1, 2, 3]
    swapped = [0, 2, 1, 3]
    assert not np.allclose(bi_compose(sent, table), bi_compose(swapped, table))


def test_doc_compose_examples(rng):
    s = rng.normal(size=3)
    np.testing.assert_array_equal(doc_compose([s], "add"), s)
    table = _table(rng.normal(size=(6, 3)))
    sents = [[0, 1], [2], [3, 4, 5]]
    nested = doc_compose([add_compose(x, table) for x in sents], "add")
    flat = add_compose([w for x in sents for w in x], table)
    np.testing.assert_allclose(nested, flat, atol=1e-12)
    with pytest.raises(InvalidInput):
        doc_compose([], "add")


def test_doc_bi_order_sensitive():
    rng = np.random.default_rng(9)
    sv = list(rng.normal(size=(3, 4)))
    assert not np.allclose(doc_compose(sv, "bi"), doc_compose([sv[1], sv[0], sv[2]], "bi"))


def test_compose_rows_rejects_unknown():
    with pytest.raises(InvalidArgument):
        compose_rows(np.ones((2, 2)), "tensor")


# CCAE encoders ---------------------------------------------------------------------


def test_model_a_zero_params(rng):
    comp = CcaeComposer("A", 3)
    p = comp.init_params(rng, 2)
    p["enc.W.*"][...] = 0
    out = ccae_encode(rng.normal(size=3), rng.normal(size=3), "FA", "NP", ("N", "N"), "A", p)
    np.testing.assert_array_equal(out, 0.0)


def test_model_b_rule_isolation(rng):
    comp = CcaeComposer("B", 3)
    p = comp.init_params(rng, 2)
    x, y = rng.normal(size=3), rng.normal(size=3)
    before = ccae_encode(x, y, "FA", "NP", ("N", "N"), "B", p)
    p["enc.W.c:BA"] += 5.0
    p["enc.b.c:BA"] -= 1.0
    after = ccae_encode(x, y, "FA", "NP", ("N", "N"), "B", p)
    assert before.tobytes() == after.tobytes()
    # identical tables give identical outputs
    p["enc.W.c:BA"][...] = p["enc.W.c:FA"]
    p["enc.b.c:BA"][...] = p["enc.b.c:FA"]
    np.testing.assert_array_equal(ccae_encode(x, y, "BA", "NP", ("N", "N"), "B", p), before)


def test_model_c_collapses_to_b_without_category_term(rng):
    comp_c = CcaeComposer("C", 3)
    pc = comp_c.init_params(rng, 2)
    for name in pc.names():
        if ".t:" in name:
            pc[name][...] = 0.0
    pb = CcaeComposer("B", 3).init_params(rng, 2)
    for name in pb.names():
        pb[name] = pc[name]
    x, y = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_array_equal(
        ccae_encode(x, y, "FA", "NP", ("N", "N"), "C", pc),
        ccae_encode(x, y, "FA", "NP", ("N", "N"), "B", pb),
    )


def test_model_d_matches_formula(rng):
    comp = CcaeComposer("D", 3)
    p = comp.init_params(rng, 2)
    x, y = rng.normal(size=3), rng.normal(size=3)
    out = ccae_encode(x, y, "BA", "S[dcl]", ("NP", "zzz"), "D", p)
    expected = np.tanh(p["enc.W.c:BA"] @ (p["enc.T.t:NP"] @ x + p[f"enc.T.t:{CATCH_ALL}"] @ y) + p["enc.b.c:BA"])
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_encoder_dimension_mismatch(rng):
    p = CcaeComposer("A", 3).init_params(rng, 2)
    with pytest.raises(InvalidArgument):
        ccae_encode(np.ones(3), np.ones(2), "FA", "NP", ("N", "N"), "A", p)


def test_unknown_model():
    with pytest.raises(InvalidArgument):
        CcaeComposer("E", 3)


@given(st.sampled_from("ABCD"), st.integers(0, 10_000), st.floats(0.1, 30))
def test_tanh_range(model, seed, scale):
    rng = np.random.default_rng(seed)
    comp = CcaeComposer(model, 4)
    p = comp.init_params(rng, 2, sigma2=1.0)
    x, y = scale * rng.normal(size=4), scale * rng.normal(size=4)
    out = ccae_encode(x, y, "FA", "NP", ("N", "NP"), model, p)
    assert np.all(np.abs(out) <= 1.0)
    # strict bound whenever the pre-activation is moderate
    small = ccae_encode(x / (100 * scale), y / (100 * scale), "FA", "NP", ("N", "NP"), model, p)
    assert np.all(np.abs(small) < 1.0)


# objective ------------------------------------------------------------------------


def _corpus(rng, labels=True):
    trees = [
        "(FA:S[dcl] (lex:NP w0) (BA:S\\NP (lex:(S\\NP)/NP w1) (lex:NP w2)))",
        "(BA:NP (lex:N w3) (lex:NP\\NP w1))",
    ]
    return [LabeledTree(_ids(parse_tree(t)), rng.random(1) if labels else None) for t in trees]


def test_alpha_one_equals_rae_and_ignores_labels(rng):
    comp = CcaeComposer("B", 3)
    p = comp.init_params(rng, 4)
    corpus = _corpus(rng)
    j1, g1 = ccae_objective(corpus, comp, p, alpha=1.0, lam=0.0)
    other = [LabeledTree(it.tree, 1.0 - it.label) for it in corpus]
    j2, g2 = ccae_objective(other, comp, p, alpha=1.0, lam=0.0)
    j3, _ = ccae_objective([it.tree for it in corpus], comp, p, alpha=1.0, lam=0.0)
    assert j1 == j2 == j3
    np.testing.assert_array_equal(g1.flatten(), g2.flatten())


def test_label_loss_zero_at_half(rng):
    comp = CcaeComposer("A", 3)
    p = comp.init_params(rng, 4)
    for name in p.names():
        p[name][...] = 0.0
    corpus = [LabeledTree(it.tree, np.array([0.5])) for it in _corpus(rng)]
    J, _ = ccae_objective(corpus, comp, p, alpha=0.0, lam=0.0)
    assert J == 0.0


def test_alpha_below_one_needs_labels(rng):
    comp = CcaeComposer("A", 3)
    p = comp.init_params(rng, 4)
    with pytest.raises(InvalidConfiguration):
        ccae_objective(_corpus(rng, labels=False), comp, p, alpha=0.5)
    with pytest.raises(InvalidArgument):
        ccae_objective(_corpus(rng), comp, p, alpha=1.5)


def test_regularizer_value_and_gradient(rng):
    comp = CcaeComposer("A", 2)
    p = comp.init_params(rng, 4)
    corpus = _corpus(rng)
    j0, g0 = ccae_objective(corpus, comp, p, alpha=0.5, lam=0.0)
    j1, g1 = ccae_objective(corpus, comp, p, alpha=0.5, lam=0.3)
    assert j1 - j0 == pytest.approx(0.15 * p.sqnorm(), rel=1e-12)
    np.testing.assert_allclose(g1.flatten() - g0.flatten(), 0.3 * p.flatten(), atol=1e-14)


@pytest.mark.parametrize("label_nodes", ["all", "root"])
@pytest.mark.parametrize("model", ["A", "B", "C", "D"])
def test_objective_gradient(model, label_nodes):
    rng = np.random.default_rng(3)
    comp = CcaeComposer(model, 4)
    p = comp.init_params(rng, 4)
    corpus = _corpus(rng)

    def f(x):
        J, g = ccae_objective(corpus, comp, p.unflatten(x), alpha=0.4, lam=1e-3, label_nodes=label_nodes)
        return J, g.flatten()

    _, g = ccae_objective(corpus, comp, p, alpha=0.4, lam=0.0, label_nodes=label_nodes)
    touched = np.flatnonzero(g.flatten())
    assert grad_check(f, p.flatten(), coords=touched) < 1e-4


def test_label_nodes_root_differs_from_all(rng):
    comp = CcaeComposer("A", 3)
    p = comp.init_params(rng, 4)
    corpus = _corpus(rng)
    j_all, _ = ccae_objective(corpus, comp, p, alpha=0.0, lam=0.0)
    j_root, _ = ccae_objective(corpus, comp, p, alpha=0.0, lam=0.0, label_nodes="root")
    assert j_all != j_root
    with pytest.raises(InvalidArgument):
        ccae_objective(corpus, comp, p, alpha=0.5, label_nodes="leaves")


def test_training_and_model_wrapper(rng):
    from cvsm.toydata import sentiment_trees

    trees, labels, vocab = sentiment_trees(40, seed=2)
    comp = CcaeComposer("B", 6)
    p = comp.init_params(rng, len(vocab))
    model = CcaeModel(comp, p, vocab)
    data = [LabeledTree(model.bind(t), y) for t, y in zip(trees, labels)]
    start, _ = ccae_objective(data, comp, p, alpha=0.2)
    res = train_ccae(data, comp, p, alpha=0.2, max_iter=60)
    assert res.fun < start
    model = CcaeModel(comp, res.theta, vocab)
    tree = parse_tree(trees[0].to_string())
    assert model.encode(tree).shape == (6,)
    assert model.predict(tree).shape == (1,)
