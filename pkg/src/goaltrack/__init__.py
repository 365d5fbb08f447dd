"""Track conversational goals across multi-turn LLM dialogue.

The pipeline infers goals from user messages, merges them with the
running goal set, and evaluates every LLM response against the active
goals, producing grounded explanations, timelines, and text highlights
a human can steer by.
"""

from .backends import (
    Backend,
    BackendConfig,
    BackendSet,
    ChatMessage,
    OpenAICompatBackend,
    ScriptedMockBackend,
    complete_structured,
)
from .goals import (
    Evaluation,
    EvaluationCategory,
    EvaluationExample,
    Goal,
    GoalLedger,
    GoalOrigin,
    GoalType,
    InferredGoal,
    MergeKind,
    MergeOperation,
)
from .grounding import ground_span, normalize_text
from .pipeline import (
    ConversationState,
    InferredClause,
    Message,
    PipelineConfig,
    PipelineEvent,
    StreamChunk,
    TurnComplete,
    TurnRecord,
    run_turn,
)
from .store import PreloadedGoal, Session, SessionConfig, SessionStore
from .replay import ConversationStats, compute_stats, replay_transcript
from .service import create_app

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "BackendConfig",
    "BackendSet",
    "ChatMessage",
    "ConversationState",
    "ConversationStats",
    "Evaluation",
    "EvaluationCategory",
    "EvaluationExample",
    "Goal",
    "GoalLedger",
    "GoalOrigin",
    "GoalType",
    "InferredClause",
    "InferredGoal",
    "MergeKind",
    "MergeOperation",
    "Message",
    "OpenAICompatBackend",
    "PipelineConfig",
    "PipelineEvent",
    "PreloadedGoal",
    "ScriptedMockBackend",
    "Session",
    "SessionConfig",
    "SessionStore",
    "StreamChunk",
    "TurnComplete",
    "TurnRecord",
    "complete_structured",
    "compute_stats",
    "create_app",
    "ground_span",
    "normalize_text",
    "replay_transcript",
    "run_turn",
]
