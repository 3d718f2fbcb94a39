"""File formats, checkpoints and the command-line interface."""

from .checkpoint import Checkpoint, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint
from .cli import cli_dispatch, main
from .config import RunConfig, resolve_seed
from .io import (
    Vocabulary,
    load_doc_pair,
    load_docs,
    load_embeddings,
    load_frame_lexicon,
    load_frames,
    load_parallel,
    load_trees,
    write_embeddings,
)

__all__ = [
    "Checkpoint", "RunConfig", "Vocabulary",
    "cli_dispatch", "main", "resolve_seed",
    "load_checkpoint", "save_checkpoint", "read_checkpoint", "write_checkpoint",
    "load_doc_pair", "load_docs", "load_embeddings", "load_frame_lexicon", "load_frames",
    "load_parallel", "load_trees", "write_embeddings",
]
