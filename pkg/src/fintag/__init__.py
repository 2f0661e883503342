"""fintag: error-tag markup toolkit for financial QA.

Parses and renders the inline error-tag markup, synthesizes tagged
training data via controlled error insertion, enforces a four-criteria
quality gate, and scores detection and editing outputs with per-type
metrics.
"""

from .markup import (
    Edit,
    ErrorType,
    Form,
    ParseError,
    ParseResult,
    ParseWarning,
    Segment,
    Statement,
    TaggedDocument,
    TagSpan,
    Text,
    derive_erroneous,
    derive_original,
    parse,
    serialize,
    to_target_output,
)
from .quality import (
    FixOutcome,
    IssueKind,
    QualityIssue,
    QualityTally,
    TaggedRecord,
    check,
    classify_span_type,
    fix,
)
from .insertion import (
    InserterConfig,
    InsertionFailure,
    InsertionPlan,
    InsertionResult,
    InsertionSkip,
    build_insertion_prompt,
    insert_llm,
    insert_rule_based,
    plan_errors,
)
from .corpus import (
    DistributionReport,
    QARecord,
    TrainingPair,
    distribution_report,
    emit_training_pair,
    filter_grounded,
    ingest,
    split,
)
from .detect_eval import (
    DetectionReport,
    MatchSet,
    align,
    evaluate_corpus,
    f1_from_pr,
    parse_prediction,
    score,
)
from .edit_eval import (
    FactScore,
    JudgeVerdict,
    VerdictLabel,
    containment_judge,
    score_editing,
    split_facts,
)
from .llm_client import (
    ClientError,
    ClientProfile,
    CompletionReply,
    CompletionRequest,
    LlmClient,
    cached_complete,
    complete,
)

__version__ = "0.1.0"
