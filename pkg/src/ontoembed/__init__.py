"""Ontology-grounded concept embeddings at desk scale.

The pipeline: load an ontology (ontograph), verbalize its relations into
grounded one-sentence descriptions (descgen), assemble a contrastive
name/description pair dataset (pairset), train a small bi-encoder with
in-batch negatives (trainer), index and search the resulting vectors
(vecindex), and score the model on similarity, retrieval, and linking
benchmarks (evalsuite). The cli module chains these as subcommands.
"""

from .descgen import (
    DEFAULT_LEXICON,
    Description,
    GroundingError,
    NoRelationsError,
    VerbLexicon,
    check_description,
    generate_corpus,
    generate_description,
    load_lexicon,
    read_descriptions,
    render_description,
    verbalize_relation,
    write_descriptions,
)
from .evalsuite import (
    EvalReport,
    L2PTask,
    build_l2p,
    eval_concept_similarity,
    eval_l2p,
    eval_nel,
    eval_nli_triplets,
    eval_sts,
    pearson,
    similarity_matrix_report,
    spearman,
)
from .ontograph import (
    Concept,
    OntologyGraph,
    Relationship,
    load_graph,
    read_concepts,
    save_graph,
)
from .pairset import (
    DatasetManifest,
    TrainingPair,
    build_pairs,
    read_pairs,
    split,
    write_pairs,
)
from .trainer import (
    AdamState,
    Encoder,
    TrainConfig,
    TrainResult,
    adamw_step,
    finetune_sts,
    infonce_loss,
    lr_at,
    train,
)
from .vecindex import EmbeddingMatrix, SearchResult, topk, topk_batch

__version__ = "0.1.0"

__all__ = [
    "Concept", "Relationship", "OntologyGraph", "load_graph", "read_concepts", "save_graph",
    "VerbLexicon", "Description", "GroundingError", "NoRelationsError", "DEFAULT_LEXICON",
    "verbalize_relation", "render_description", "generate_description", "generate_corpus",
    "check_description", "load_lexicon", "read_descriptions", "write_descriptions",
    "TrainingPair", "DatasetManifest", "build_pairs", "read_pairs", "write_pairs", "split",
    "Encoder", "TrainConfig", "TrainResult", "AdamState",
    "infonce_loss", "adamw_step", "lr_at", "train", "finetune_sts",
    "EmbeddingMatrix", "SearchResult", "topk", "topk_batch",
    "EvalReport", "L2PTask", "pearson", "spearman",
    "eval_concept_similarity", "build_l2p", "eval_l2p", "eval_sts",
    "eval_nli_triplets", "eval_nel", "similarity_matrix_report",
    "__version__",
]
