from .index import (
    RetrievalEntry,
    RetrievalIndex,
    build_index,
    load_index,
    query,
    query_batch,
    query_embeddings,
    save_index,
)
from .training import RetrievalSettings, RetrievalStep, RetrievalTrainer, triplet_loss
from .triplets import (
    STRATEGY_MIXES,
    EmbedderInput,
    NegativeStrategy,
    Triplet,
    TripletBatch,
    TripletBuilder,
    draw_strategy,
)

__all__ = [
    "STRATEGY_MIXES",
    "EmbedderInput",
    "NegativeStrategy",
    "RetrievalEntry",
    "RetrievalIndex",
    "RetrievalSettings",
    "RetrievalStep",
    "RetrievalTrainer",
    "Triplet",
    "TripletBatch",
    "TripletBuilder",
    "build_index",
    "draw_strategy",
    "load_index",
    "query",
    "query_batch",
    "query_embeddings",
    "save_index",
    "triplet_loss",
]
