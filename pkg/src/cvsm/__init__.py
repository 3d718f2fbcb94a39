"""Compositional vector space models: optimizers, tree autoencoders,
bilingual sentence models and frame identification."""

from .bicvm import BicvmModel, DocumentCorpus, ParallelCorpus, bicvm_objective, doc_objective, train_bicvm, train_doc
from .compose import (
    CcaeComposer,
    CcaeModel,
    CcgInventory,
    LabeledTree,
    add_compose,
    bi_compose,
    ccae_encode,
    ccae_objective,
    doc_compose,
    train_ccae,
)
from .errors import (
    ContractViolation,
    CvsmError,
    InvalidArgument,
    InvalidConfiguration,
    InvalidInput,
    InvalidState,
    ParseError,
    UndefinedSimilarity,
)
from .evalkit import cldc_evaluate, cosine, euclidean, mahalanobis, perceptron_predict, perceptron_train
from .frameid import (
    BlockInventory,
    FrameInstance,
    WsabieModel,
    build_block_vector,
    loglinear_predict,
    loglinear_train,
    predict_frame,
    score,
    train_wsabie,
    warp_update,
)
from .lexicon import EmbeddingTable
from .optimize import AdaGrad, ParamVector, grad_check, lbfgs_minimize
from .treegrad import TreeNode, backprop_tree, forward_tree, parse_tree

__version__ = "0.1.0"
