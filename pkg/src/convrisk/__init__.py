"""Deterministic simulator and RL harness for risk-aware conversational search.

A simulated user with a tolerance for irrelevant clarifying questions and a
patience budget drives episodes over a fixed candidate pool; policies decide
each round whether to answer or ask, and a small value network can be trained
to manage that risk. Everything is seeded and reproducible.
"""

from .corpus import (
    Candidate,
    CandidatePool,
    Conversation,
    Corpus,
    PoolConfig,
    Speaker,
    Turn,
    build_pools,
    filter_corpus,
    normalize_conversation,
    parse_corpus,
    split_folds,
    write_corpus,
)
from .encoding import Embedder, IdfTable, fit_embedder, fnv1a_64, tokenize
from .errors import ConfigError, ConvriskError
from .policy import (
    Action,
    Answer,
    AskQuestion,
    DqnAgent,
    DqnParams,
    FeatureMask,
    StateLayout,
    featurize_state,
    is_worse_decision,
    load_dqn,
    oracle_action,
    save_dqn,
)
from .ranker import (
    BridgeClient,
    DotRanker,
    ExternalRanker,
    RankerTrainConfig,
    load_ranker,
    reciprocal_rank,
    save_ranker,
    train_dot_ranker,
)
from .rl import RLConfig, compute_target, train_policy
from .simeval import (
    EpisodeResult,
    LabeledSummary,
    Rankers,
    RunSummary,
    compute_metrics,
    run_episode,
    significance_test,
    write_report,
)
from .usersim import UserProfile, initial_user_state, user_respond

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Answer",
    "AskQuestion",
    "BridgeClient",
    "Candidate",
    "CandidatePool",
    "ConfigError",
    "Conversation",
    "ConvriskError",
    "Corpus",
    "DotRanker",
    "DqnAgent",
    "DqnParams",
    "Embedder",
    "EpisodeResult",
    "ExternalRanker",
    "FeatureMask",
    "IdfTable",
    "LabeledSummary",
    "PoolConfig",
    "RLConfig",
    "Rankers",
    "RankerTrainConfig",
    "RunSummary",
    "Speaker",
    "StateLayout",
    "Turn",
    "UserProfile",
    "build_pools",
    "compute_metrics",
    "compute_target",
    "featurize_state",
    "filter_corpus",
    "fit_embedder",
    "fnv1a_64",
    "initial_user_state",
    "is_worse_decision",
    "load_dqn",
    "load_ranker",
    "normalize_conversation",
    "oracle_action",
    "parse_corpus",
    "reciprocal_rank",
    "run_episode",
    "save_dqn",
    "save_ranker",
    "significance_test",
    "split_folds",
    "tokenize",
    "train_dot_ranker",
    "train_policy",
    "user_respond",
    "write_corpus",
    "write_report",
]
