"""Simulate recommendation feedback loops and measure the risks they amplify."""

from .errors import EchoLoopError
from .ingest import AttributeTable, Dataset, Interaction, build_dataset, load_dataset, parse_attribute_table, parse_interaction_log
from .loop import LoopTrace, PipelineConfig, inject, load_trace, run_feedback_loop, save_trace
from .recommenders import ItemKNN, MatrixFactorization, MostPopular, RecommenderConfig, make_recommender
from .riskgen import GeneratorConfig, augment_interactions, infer_profile, repeat_invocation, rerank_or_generate
from .timeline import PeriodSchedule, SplitConfig, build_period_schedule, common_users, temporal_split

__version__ = "0.1.0"

__all__ = [
    "EchoLoopError",
    "AttributeTable", "Dataset", "Interaction", "build_dataset", "load_dataset", "parse_attribute_table",
    "parse_interaction_log",
    "LoopTrace", "PipelineConfig", "inject", "load_trace", "run_feedback_loop", "save_trace",
    "ItemKNN", "MatrixFactorization", "MostPopular", "RecommenderConfig", "make_recommender",
    "GeneratorConfig", "augment_interactions", "infer_profile", "repeat_invocation", "rerank_or_generate",
    "PeriodSchedule", "SplitConfig", "build_period_schedule", "common_users", "temporal_split",
]
