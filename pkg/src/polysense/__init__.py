"""Multi-sense word embeddings from word-aligned parallel corpora.

A nonparametric skip-gram model: every English word owns a variable, data-driven
number of sense vectors under a stick-breaking prior, trained with stochastic
variational inference against both monolingual and crosslingual contexts from
one or more aligned corpora. Includes sense disambiguation, similarity queries,
word-sense-induction evaluation, and a synthetic-corpus generator with gold
senses for end-to-end validation.
"""

from .corpus import (
    AlignedSentencePair,
    AlignmentError,
    CorpusError,
    CorpusFile,
    NoiseTable,
    Token,
    Vocabulary,
    build_noise_table,
    build_vocabulary,
    load_manifest,
    load_parallel_corpus,
    neighborhood,
    parse_alignment_line,
)
from .disambig import contextual_similarity, disambiguate, nearest_neighbors
from .evaluation import (
    WsiInstance,
    adjusted_rand_index,
    read_similarity_tsv,
    read_wsi_tsv,
    similarity_evaluate,
    spearman,
    wsi_evaluate,
)
from .inference import (
    NumericsError,
    TrainStats,
    build_english_context,
    build_foreign_context,
    learning_rate,
    log_sigmoid_score,
    renormalize,
    sense_gradient_step,
    sense_update,
    skip_gram_update,
    train,
)
from .model import (
    ModelFormatError,
    SenseModel,
    TrainConfig,
    active_senses,
    expected_log_prior,
    expected_log_priors,
    expected_sense_prior,
    export_text,
    init_model,
    load_model,
    models_equal,
    polysemy_rate,
    save_model,
    sense_prior_matrix,
)
from .synth import PlantedWord, SynthData, SynthLanguage, SynthSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AlignedSentencePair", "AlignmentError", "CorpusError", "CorpusFile", "NoiseTable",
    "Token", "Vocabulary", "build_noise_table", "build_vocabulary", "load_manifest",
    "load_parallel_corpus", "neighborhood", "parse_alignment_line",
    "contextual_similarity", "disambiguate", "nearest_neighbors",
    "WsiInstance", "adjusted_rand_index", "read_similarity_tsv", "read_wsi_tsv",
    "similarity_evaluate", "spearman", "wsi_evaluate",
    "NumericsError", "TrainStats", "build_english_context", "build_foreign_context",
    "learning_rate", "log_sigmoid_score", "renormalize", "sense_gradient_step",
    "sense_update", "skip_gram_update", "train",
    "ModelFormatError", "SenseModel", "TrainConfig", "active_senses",
    "expected_log_prior", "expected_log_priors", "expected_sense_prior", "export_text",
    "init_model", "load_model", "models_equal", "polysemy_rate", "save_model",
    "sense_prior_matrix",
    "PlantedWord", "SynthData", "SynthLanguage", "SynthSpec", "generate_synthetic",
    "__version__",
]
