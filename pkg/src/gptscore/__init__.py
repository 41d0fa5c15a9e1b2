"""GPTScore: evaluate generated text by the log-likelihood a language model assigns it."""

from __future__ import annotations

from ._accel import IMPLEMENTATION
from .aspects import AspectRegistry, AspectSpec, builtin_registry, compose_definition
from .backends import BackendConfig, BackendKind, TokenScore, cached, make_backend, token_logprobs
from .baselines import RougeScore, rouge_l, rouge_n
from .datasets import Dataset, GenSample, Strategy, SystemOutput, load, subsample
from .metaeval import CorrelationKind, PairedScores, aggregate, bootstrap_compare, pearson, spearman
from .prompt import Direction, PromptTemplate, Setting, TemplateRegistry, builtin_templates, render
from .scoring import ScoreRecord, gptscore, score_dataset, score_output
from .tasks import TaskKind

__version__ = "0.1.0"

__all__ = [
    "IMPLEMENTATION",
    "AspectRegistry",
    "AspectSpec",
    "BackendConfig",
    "BackendKind",
    "CorrelationKind",
    "Dataset",
    "Direction",
    "GenSample",
    "PairedScores",
    "PromptTemplate",
    "RougeScore",
    "ScoreRecord",
    "Setting",
    "Strategy",
    "SystemOutput",
    "TaskKind",
    "TemplateRegistry",
    "TokenScore",
    "aggregate",
    "bootstrap_compare",
    "builtin_registry",
    "builtin_templates",
    "cached",
    "compose_definition",
    "gptscore",
    "load",
    "make_backend",
    "pearson",
    "render",
    "rouge_l",
    "rouge_n",
    "score_dataset",
    "score_output",
    "spearman",
    "subsample",
    "token_logprobs",
]
