"""Source-dependent essay scoring with sentence-level co-attention."""

__version__ = "0.1.0"

from .data import (
    EncodedDocument,
    EssayRecord,
    FoldSplit,
    ScoreScale,
    Vocabulary,
    build_vocab,
    encode_document,
    load_corpus,
    load_embeddings,
    make_folds,
    scale_score,
    split_sentences,
    tokenize,
    unscale_score,
)
from .errors import CoattnError
from .evaluation import (
    AttentionReportRow,
    CrossValReport,
    RatingPair,
    attention_report,
    cross_validate,
    paired_t_test,
    qwk,
    write_summary,
)
from .layers import ForwardTrace, ModelConfig, ModelParams, forward_full, init_params
from .tensor import GradTape, Tensor, grad_check
from .training import (
    RmspropOptimizer,
    ScoringModel,
    TrainReport,
    fit_with_selection,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
    train_epoch,
)

__all__ = [name for name in dir() if not name.startswith("_")]
