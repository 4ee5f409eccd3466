"""Automated relevance judgment for image-text retrieval evaluation.

Pipeline: pool retrieval runs, score the pooled pairs with a vision-language
backend (generative or embedding), convert raw scores to graded qrels with a
quantile rule, evaluate runs with NDCG@k and MAP, and meta-evaluate the model
qrels against reference judgments (rank correlations, Cohen's kappa,
evaluation bias, score distributions).
"""

from .backends import (
    BackendClient,
    BackendConfig,
    BackendResponse,
    JudgmentCache,
    RetryPolicy,
    complete,
    embed,
    judge_batch,
)
from .collection import (
    DepthPolicy,
    ImageDoc,
    Pool,
    Qrels,
    Run,
    RunEntry,
    Topic,
    load_corpus,
    load_topics,
    parse_qrels,
    parse_run,
    pool,
    write_qrels,
    write_run,
)
from .errors import (
    AutojudgeError,
    BackendError,
    ConfigError,
    DataError,
    DegenerateInputError,
    ParseError,
    RelevanceParseError,
    UndefinedStatisticError,
    ValidationError,
)
from .grading import GradeThresholds, grade_records, map_to_grades, quantile_thresholds
from .metaeval import (
    ConfusionMatrix3,
    MetaReport,
    cohen_kappa,
    compare,
    confusion_matrix,
    kendall_tau,
    pearson_rho,
    relative_delta,
    score_cdf,
    spearman_rho,
)
from .metrics import RunEvaluation, TopicScore, average_precision, evaluate_run, ndcg_at_k
from .prompting import PromptTemplate, RenderedPrompt, render_context_only, render_full
from .scoring import ScoreRecord, clip_score, parse_relevance, score_pool

__version__ = "0.1.0"
