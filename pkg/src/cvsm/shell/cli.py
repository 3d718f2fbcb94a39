"""``cvsm`` command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from .. import gradsuite
from ..bicvm import BicvmModel, train_bicvm, train_doc
from ..compose import CcaeComposer, CcaeModel, predict_label, train_ccae
from ..errors import CvsmError, InvalidConfiguration, InvalidInput
from ..evalkit import cldc_evaluate, cldc_evaluate_multilabel, write_predictions
from ..frameid import (
    BlockInventory,
    FrameIdentifier,
    loglinear_predict,
    loglinear_train,
    train_wsabie,
)
from ..lexicon import UNK
from ..optimize import AdaGrad, grad_check
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, resolve_seed
from .io import (
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
    write_vectors,
)

log = logging.getLogger("cvsm")

CCAE_CHOICES = ["ccae-a", "ccae-b", "ccae-c", "ccae-d"]


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="RNG seed (CVSM_SEED overrides)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvsm", description="Compositional vector space models.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train-bicvm", help="train bilingual embeddings on parallel text")
    p.add_argument("--src", nargs="+", required=True, help="source-side file(s)")
    p.add_argument("--tgt", nargs="+", required=True, help="target-side file(s), aligned with --src")
    p.add_argument("--src-lang", nargs="+", default=None)
    p.add_argument("--tgt-lang", nargs="+", default=None)
    p.add_argument("--model", choices=["add", "bi"], default="add", help="sentence composer")
    p.add_argument("--doc-model", choices=["add", "bi"], default="add", help="document composer for --level doc")
    p.add_argument("--level", choices=["sentence", "doc"], default="sentence")
    p.add_argument("--sentence-aligned", action="store_true", help="documents also align sentence by sentence")
    p.add_argument("--mode", choices=["single", "joint"], default="single")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--margin", type=float, default=None, help="hinge margin (default: --dim)")
    p.add_argument("--noise", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--strict-reg", action="store_true", help="apply the regularizer once per pair")
    p.add_argument("--no-lowercase", action="store_true")
    p.add_argument("--out", required=True, help="checkpoint to write")
    _common(p)

    p = sub.add_parser("train-ccae", help="train a CCG-conditioned autoencoder on bracketed trees")
    p.add_argument("--trees", required=True)
    p.add_argument("--model", choices=CCAE_CHOICES, default="ccae-b")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--alpha", type=float, default=0.2, help="reconstruction weight")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--signal", choices=["rae", "unfolding", "denoising"], default="rae")
    p.add_argument("--drop", type=float, default=0.0, help="denoising drop probability")
    p.add_argument("--label-nodes", choices=["all", "root"], default="all", help="nodes that carry the label loss")
    p.add_argument("--epochs", type=int, default=200, help="L-BFGS iterations")
    p.add_argument("--embeddings", "--lexicon", dest="embeddings", default=None, help="initial word embeddings")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("train-frameid", help="train a frame identifier")
    p.add_argument("--frames", required=True, help="training frame instances")
    p.add_argument("--lexicon", "--embeddings", dest="lexicon", default=None, help="input word embeddings")
    p.add_argument("--frame-lexicon", default=None)
    p.add_argument("--model", choices=["wsabie", "loglinear"], default="wsabie")
    p.add_argument("--dim", type=int, default=256, help="joint space dimension")
    p.add_argument("--margin", type=float, default=0.01)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="log-linear L2 constant")
    p.add_argument("--test", default=None, help="frame instances to report accuracy on")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("eval-cldc", help="cross-lingual document classification")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True, help="training documents")
    p.add_argument("--tgt", required=True, help="test documents")
    p.add_argument("--src-lang", default=None)
    p.add_argument("--tgt-lang", default=None)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--multilabel", action="store_true")
    p.add_argument("--no-lowercase", action="store_true")
    p.add_argument("--out", default=None, help="prediction dump")
    _common(p)

    p = sub.add_parser("encode", help="compose sentences or trees into vectors")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", default=None, help="sentences, one per line (BiCVM)")
    p.add_argument("--trees", default=None, help="bracketed trees (CCAE)")
    p.add_argument("--lang", default=None)
    p.add_argument("--no-lowercase", action="store_true")
    p.add_argument("--out", default=None)
    _common(p)

    p = sub.add_parser("nn", help="nearest neighbours by cosine")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--lexicon", help="embedding file")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--lang", default=None, help="language of the query")
    p.add_argument("--tgt-lang", default=None, help="language to search (default: --lang)")
    _common(p)

    p = sub.add_parser("grad-check", help="finite-difference gradient check")
    p.add_argument("--model", choices=list(gradsuite.OBJECTIVES) + ["all"], required=True)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    _common(p)
    return parser


# ---------------------------------------------------------------------------
# commands


def _lang_names(given, n, default):
    if given is None:
        return [default] * n
    if len(given) != n:
        raise InvalidConfiguration(f"expected {n} language names, got {len(given)}")
    return given


def cmd_train_bicvm(args, seed):
    if len(args.src) != len(args.tgt):
        raise InvalidConfiguration("--src and --tgt need the same number of files")
    if args.mode == "single" and len(args.src) != 1:
        raise InvalidConfiguration("single mode takes one --src/--tgt pair; use --mode joint")
    RunConfig("bicvm", {"dim": args.dim, "margin": args.margin, "noise": args.noise, "lambda": args.lam,
                        "step": args.step, "batch": args.batch, "epochs": args.epochs},
              {"--src": args.src, "--tgt": args.tgt}, seed).validate()
    src_langs = _lang_names(args.src_lang, len(args.src), "src")
    tgt_langs = _lang_names(args.tgt_lang, len(args.tgt), "tgt")
    vocabs: dict[str, Vocabulary] = {}
    corpora = []
    lower = not args.no_lowercase
    for pa, pb, la, lb in zip(args.src, args.tgt, src_langs, tgt_langs):
        if la == lb:
            raise InvalidConfiguration(f"a pair needs two distinct languages, got {la!r} twice")
        va, vb = vocabs.setdefault(la, Vocabulary()), vocabs.setdefault(lb, Vocabulary())
        if args.level == "doc":
            corpora.append(load_doc_pair(pa, pb, la, lb, va, vb, args.sentence_aligned, lower).corpus)
        else:
            loaded = load_parallel(pa, pb, la, lb, va, vb, lower)
            corpora.append(loaded.corpus)
        log.info("corpus=%d pairs=%d lang_a=%s lang_b=%s", len(corpora), len(corpora[-1]), la, lb)
    rng = np.random.default_rng(seed)
    model = BicvmModel.create(
        {lang: v.words for lang, v in vocabs.items()}, args.dim, rng,
        margin=args.margin if args.margin is not None else float(args.dim),
        noise=args.noise, lam=args.lam, default_composer=args.model, doc_composer=args.doc_model,
    )
    opt = AdaGrad(args.step)
    if args.level == "doc":
        train_doc(corpora, model, opt, args.epochs, args.batch, rng, strict_reg=args.strict_reg)
    else:
        train_bicvm(corpora, model, args.mode, opt, args.epochs, args.batch, rng, strict_reg=args.strict_reg)
    save_checkpoint(model, args.out, seed=seed)
    log.info("event=saved path=%s", args.out)
    return 0


def cmd_train_ccae(args, seed):
    RunConfig("ccae", {"dim": args.dim, "lambda": args.lam, "alpha": args.alpha, "epochs": args.epochs},
              {"--trees": args.trees, "--embeddings": args.embeddings}, seed).validate()
    if not 0.0 <= args.drop < 1.0:
        raise InvalidConfiguration("--drop must lie in [0, 1)")
    corpus = load_trees(args.trees)
    if not corpus:
        raise InvalidInput(f"no trees in {args.trees}")
    if args.alpha < 1.0 and any(it.label is None for it in corpus):
        raise InvalidConfiguration("--alpha < 1 needs a label on every tree (label<TAB>tree)")
    rng = np.random.default_rng(seed)
    composer = CcaeComposer(args.model, args.dim)
    init = None
    if args.embeddings:
        emb = load_embeddings(args.embeddings)
        if emb.dim != args.dim:
            raise InvalidConfiguration(f"embeddings have dimension {emb.dim}, --dim is {args.dim}")
        words = list(emb.words)
        extra = sorted({leaf.word for it in corpus for leaf in it.tree.leaves()} - set(words))
        init = np.vstack([emb.vectors, rng.normal(0, np.sqrt(0.1), size=(len(extra), args.dim))]) if extra else emb.vectors
        words += extra
    else:
        words = sorted({leaf.word for it in corpus for leaf in it.tree.leaves()})
    if UNK not in words:
        words.append(UNK)
        if init is not None:
            init = np.vstack([init, rng.normal(0, np.sqrt(0.1), size=(1, args.dim))])
    label_dim = next((it.label.size for it in corpus if it.label is not None), 1)
    params = composer.init_params(rng, len(words), label_dim=label_dim, embeddings=init)
    model = CcaeModel(composer, params, words)
    for it in corpus:
        model.bind(it.tree)
    t0 = time.perf_counter()

    def progress(it, fx, gnorm):
        log.info("iteration=%d objective=%.6g grad_norm=%.3g wall=%.3fs", it, fx, gnorm, time.perf_counter() - t0)

    res = train_ccae(corpus, composer, params, alpha=args.alpha, lam=args.lam, signal=args.signal,
                     drop_prob=args.drop, label_nodes=args.label_nodes, rng=rng, max_iter=args.epochs, callback=progress)
    model = CcaeModel(composer, res.theta, words)
    log.info("status=%s iterations=%d objective=%.6g", res.status, res.n_iter, res.fun)
    if all(it.label is not None for it in corpus):
        correct = sum(
            bool(np.all((predict_label(it.tree, composer, model.params) > 0.5) == (it.label > 0.5))) for it in corpus
        )
        print(f"train_accuracy={correct / len(corpus):.6f}")
    save_checkpoint(model, args.out, seed=seed)
    log.info("event=saved path=%s", args.out)
    return 0


def cmd_train_frameid(args, seed):
    RunConfig("frameid", {"dim": args.dim, "margin": args.margin, "step": args.step, "epochs": args.epochs,
                          "lambda": args.lam},
              {"--frames": args.frames, "--lexicon": args.lexicon, "--frame-lexicon": args.frame_lexicon,
               "--test": args.test}, seed).validate()
    train = load_frames(args.frames)
    unlabeled = [i for i, inst in enumerate(train, 1) if inst.frame is None]
    if unlabeled:
        raise InvalidInput(f"training instance {unlabeled[0]} has no gold frame")
    frame_lex = load_frame_lexicon(args.frame_lexicon) if args.frame_lexicon else {}
    test = load_frames(args.test) if args.test else None
    rng = np.random.default_rng(seed)
    if args.model == "loglinear":
        if args.lam <= 0:
            raise InvalidConfiguration("--lambda must be positive for the log-linear model")
        model = loglinear_train(train, frame_lex, C=args.lam)
        predict = lambda inst: model.frames[loglinear_predict(model, inst)]  # noqa: E731
    else:
        if not args.lexicon:
            raise InvalidConfiguration("the wsabie model needs --lexicon (input embeddings)")
        emb = load_embeddings(args.lexicon)
        inv = BlockInventory.mine(train, emb.dim)
        wsabie = train_wsabie(train, inv, emb, frame_lex, m=args.dim, lr=args.step, margin=args.margin,
                              epochs=args.epochs, rng=rng)
        model = FrameIdentifier(wsabie, inv, emb)
        predict = model.predict
    if test:
        gold = [inst.frame for inst in test]
        acc = np.mean([predict(inst) == g for inst, g in zip(test, gold)])
        print(f"accuracy={acc:.6f}")
    save_checkpoint(model, args.out, seed=seed)
    log.info("event=saved path=%s", args.out)
    return 0


def _bicvm_checkpoint(path):
    model, _ = load_checkpoint(path)
    if not isinstance(model, BicvmModel):
        raise InvalidConfiguration(f"{path} does not hold a BiCVM model")
    return model


def _doc_ids(model, lang, docs):
    vocab = Vocabulary(model.tables[lang].words, frozen=True)
    return [[vocab.ids(s) for s in d] for d in docs]


def cmd_eval_cldc(args, seed):
    RunConfig("cldc", {"epochs": args.epochs}, {"--checkpoint": args.checkpoint, "--src": args.src,
                                                "--tgt": args.tgt}, seed).validate()
    model = _bicvm_checkpoint(args.checkpoint)
    langs = list(model.tables)
    la = args.src_lang or langs[0]
    lb = args.tgt_lang or (langs[1] if len(langs) > 1 else langs[0])
    for lang in (la, lb):
        if lang not in model.tables:
            raise InvalidConfiguration(f"checkpoint has no language {lang!r} (has {langs})")
    lower = not args.no_lowercase
    tr, te = load_docs(args.src, lower), load_docs(args.tgt, lower)
    rng = np.random.default_rng(seed)
    xtr, xte = _doc_ids(model, la, tr.docs), _doc_ids(model, lb, te.docs)
    if args.multilabel:
        per, macro = cldc_evaluate_multilabel(xtr, tr.labels, xte, te.labels, model, la, lb, epochs=args.epochs, rng=rng)
        for kw, v in per.items():
            print(f"f1[{kw}]={v:.6f}")
        print(f"macro_f1={macro:.6f}")
        return 0
    for name, labels in (("training", tr.labels), ("test", te.labels)):
        bad = [i for i, ls in enumerate(labels, 1) if len(ls) != 1]
        if bad:
            raise InvalidInput(f"{name} document {bad[0]} needs exactly one label (use --multilabel)")
    res = cldc_evaluate(xtr, [ls[0] for ls in tr.labels], xte, [ls[0] for ls in te.labels], model, la, lb,
                        epochs=args.epochs, rng=rng)
    for line in res.summary_lines():
        print(line)
    if args.out:
        write_predictions(args.out, res.predictions)
    return 0


def _emit(rows, out):
    if out:
        with atomic_write(out) as fh:
            write_vectors(rows, fh)
    else:
        write_vectors(rows, sys.stdout)


def cmd_encode(args, seed):
    if (args.src is None) == (args.trees is None):
        raise InvalidConfiguration("encode takes exactly one of --src (BiCVM) or --trees (CCAE)")
    model, _ = load_checkpoint(args.checkpoint)
    if args.trees is not None:
        if not isinstance(model, CcaeModel):
            raise InvalidConfiguration("--trees needs a CCAE checkpoint")
        rows = [model.encode(it.tree) for it in load_trees(args.trees)]
        _emit(np.array(rows).reshape(len(rows), model.composer.dim), args.out)
        return 0
    if not isinstance(model, BicvmModel):
        raise InvalidConfiguration("--src needs a BiCVM checkpoint")
    lang = args.lang or next(iter(model.tables))
    if lang not in model.tables:
        raise InvalidConfiguration(f"checkpoint has no language {lang!r}")
    vocab = Vocabulary(model.tables[lang].words, frozen=True)
    sents = []
    with open(args.src, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            toks = tokenize(line, not args.no_lowercase)
            if not toks:
                raise InvalidInput(f"{args.src}:{lineno}: empty sentence")
            sents.append(vocab.ids(toks))
    _emit(model.encode(lang, sents) if sents else np.zeros((0, model.dim)), args.out)
    return 0


def cmd_nn(args, seed):
    if args.k < 1:
        raise InvalidConfiguration("--k must be >= 1")
    if args.lexicon:
        src = tgt = load_embeddings(args.lexicon)
    else:
        model, _ = load_checkpoint(args.checkpoint)
        if isinstance(model, BicvmModel):
            tables = model.tables
        elif isinstance(model, CcaeModel):
            tables = {"_": model.lexicon()}
        elif isinstance(model, FrameIdentifier):
            tables = {"_": model.lexicon}
        else:
            raise InvalidConfiguration("checkpoint holds no word embeddings")
        lang = args.lang or next(iter(tables))
        tgt_lang = args.tgt_lang or lang
        for l in (lang, tgt_lang):
            if l not in tables:
                raise InvalidConfiguration(f"checkpoint has no language {l!r} (has {list(tables)})")
        src, tgt = tables[lang], tables[tgt_lang]
    if args.query not in src:
        raise InvalidInput(f"query word {args.query!r} is not in the vocabulary")
    if src is tgt:
        hits = src.nearest(args.query, k=args.k)
    else:
        hits = tgt.nearest(src.vectors[src.index[args.query]], k=args.k)
    for word, sim in hits:
        print(f"{word}\t{sim:.6f}")
    return 0


def cmd_grad_check(args, seed):
    if args.dim < 1 or args.instances < 1:
        raise InvalidConfiguration("--dim and --instances must be positive")
    rng = np.random.default_rng(seed)
    names = gradsuite.OBJECTIVES if args.model == "all" else [args.model]
    worst = 0.0
    for name in names:
        err = 0.0
        for _ in range(args.instances):
            f, theta, coords = gradsuite.build_instance(name, rng, args.dim)
            err = max(err, grad_check(f, theta, eps=args.eps, coords=coords))
        log.info("objective=%s max_rel_error=%.3e", name, err)
        worst = max(worst, err)
    print(f"max_rel_error={worst:.6e}")
    return 0 if worst < args.tol else 1


COMMANDS = {
    "train-bicvm": cmd_train_bicvm,
    "train-ccae": cmd_train_ccae,
    "train-frameid": cmd_train_frameid,
    "eval-cldc": cmd_eval_cldc,
    "encode": cmd_encode,
    "nn": cmd_nn,
    "grad-check": cmd_grad_check,
}


def _setup_logging():
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger("cvsm")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)
    root.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        seed = resolve_seed(args.seed)
        log.info("command=%s seed=%d", args.command, seed)
        t0 = time.perf_counter()
        status = COMMANDS[args.command](args, seed)
        log.info("command=%s status=%d wall=%.3fs", args.command, status, time.perf_counter() - t0)
        return status
    except InvalidConfiguration as exc:
        parser.print_usage(sys.stderr)
        print(f"cvsm: error: {exc}", file=sys.stderr)
        return 2
    except (CvsmError, OSError) as exc:
        print(f"cvsm: error: {exc}", file=sys.stderr)
        return 1


def cli_dispatch(argv) -> int:
    """Run one command; usage errors return 2 instead of exiting."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
