"""Decision-makers for the ask-or-answer choice.

The learned policy is a 2-layer feed-forward network over a fixed-layout
feature vector [q; h; a1; cq1..cq_kq; s_ans 1..m; s_cq 1..m]: query,
history, top answer, and top k_q question embeddings followed by the top m
raw scores of each ranked list. Feature masks zero either the text slots or
the score slots without changing the layout, giving the text-only and
score-only policy variants.

Baselines: fixed ask budgets (ask exactly k relevant questions, then
answer), a logistic context classifier, and a ground-truth oracle that
never takes a worse decision.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

import numpy as np

from .encoding import Embedder
from .errors import (
    DegenerateLabelsError,
    DimensionMismatchError,
    EmptyRankingError,
    NoSafeActionError,
)

HIDDEN_WIDTH = 256


@dataclass(frozen=True)
class Answer:
    pass


@dataclass(frozen=True)
class AskQuestion:
    candidate_id: str


Action = Answer | AskQuestion


class FeatureMask(Enum):
    FULL = "full"
    TEXT_ONLY = "text_only"
    SCORE_ONLY = "score_only"


@dataclass(frozen=True)
class StateLayout:
    """Fixed geometry of the decision feature vector."""
    dim: int
    k_q: int = 1
    score_slots: int = 3
    mask: FeatureMask = FeatureMask.FULL

    def __post_init__(self) -> None:
        if self.k_q < 1:
            raise ValueError("k_q must be >= 1")
        if self.score_slots < 1:
            raise ValueError("score_slots must be >= 1")

    @property
    def total_dim(self) -> int:
        return self.dim * (3 + self.k_q) + 2 * self.score_slots


@dataclass(frozen=True)
class DecisionState:
    vector: np.ndarray
    layout: StateLayout


def featurize_state(
    query: str,
    history: str,
    ranked_answers: Sequence[tuple[str, float]],
    ranked_questions: Sequence[tuple[str, float]],
    embedder: Embedder,
    layout: StateLayout,
) -> DecisionState:
    """Build the decision feature vector from ranked (text, score) lists.

    ranked_answers must be nonempty; the question list may be empty (all
    question slots zero-padded), which happens when the pool runs out.
    Empty history embeds to the zero vector.
    """
    if not ranked_answers:
        raise EmptyRankingError("answer ranking is empty")
    if embedder.dim != layout.dim:
        raise DimensionMismatchError(
            f"layout dim {layout.dim} != embedder dim {embedder.dim}"
        )

    text_parts = [
        embedder.embed(query),
        embedder.embed(history),
        embedder.embed(ranked_answers[0][0]),
    ]
    for i in range(layout.k_q):
        if i < len(ranked_questions):
            text_parts.append(embedder.embed(ranked_questions[i][0]))
        else:
            text_parts.append(embedder.zero())

    def score_slots(ranked: Sequence[tuple[str, float]]) -> np.ndarray:
        out = np.zeros(layout.score_slots, dtype=np.float64)
        for i in range(min(layout.score_slots, len(ranked))):
            out[i] = ranked[i][1]
        return out

    score_parts = [score_slots(ranked_answers), score_slots(ranked_questions)]

    if layout.mask is FeatureMask.SCORE_ONLY:
        text_parts = [np.zeros_like(p) for p in text_parts]
    elif layout.mask is FeatureMask.TEXT_ONLY:
        score_parts = [np.zeros_like(p) for p in score_parts]

    return DecisionState(
        vector=np.concatenate(text_parts + score_parts),
        layout=layout,
    )


@dataclass(frozen=True)
class DqnParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        if self.w2.shape[0] != 2 or self.b2.shape != (2,):
            raise ValueError("output layer must have exactly 2 units")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]


def dqn_forward(state: DecisionState, params: DqnParams) -> tuple[float, float]:
    """Estimated rewards (r_ans, r_cq); linear output, ReLU hidden layer."""
    vec = state.vector
    if params.input_dim != vec.shape[0]:
        raise DimensionMismatchError(
            f"network expects dim {params.input_dim}, state has {vec.shape[0]}"
        )
    hidden = np.maximum(params.w1 @ vec + params.b1, 0.0)
    out = params.w2 @ hidden + params.b2
    return float(out[0]), float(out[1])


def dqn_forward_batch(vectors: np.ndarray, params: DqnParams) -> np.ndarray:
    """(B, input_dim) -> (B, 2) batched evaluation of the same network."""
    if vectors.shape[1] != params.input_dim:
        raise DimensionMismatchError(
            f"network expects dim {params.input_dim}, batch has {vectors.shape[1]}"
        )
    hidden = np.maximum(vectors @ params.w1.T + params.b1, 0.0)
    return hidden @ params.w2.T + params.b2


@dataclass(frozen=True)
class Greedy:
    pass


@dataclass(frozen=True)
class EpsilonGreedy:
    epsilon: float
    rng: random.Random


Mode = Greedy | EpsilonGreedy


def select_action(
    q_values: tuple[float, float],
    mode: Mode,
    ask_candidate_id: str,
) -> Action:
    """Greedy argmax over (r_ans, r_cq); ties answer. Exploration is a coin
    flip between the two actions with probability epsilon."""
    r_ans, r_cq = q_values
    if isinstance(mode, EpsilonGreedy) and mode.rng.random() < mode.epsilon:
        if mode.rng.random() < 0.5:
            return Answer()
        return AskQuestion(ask_candidate_id)
    if r_ans >= r_cq:  # answering has guaranteed non-negative reward
        return Answer()
    return AskQuestion(ask_candidate_id)


def baseline_action(
    ask_budget: int,
    answered_cq_count: int,
    ask_candidate_id: str,
) -> Action:
    """Ask until ask_budget questions were answered, then answer.

    Tolerated irrelevant asks do not raise answered_cq_count, so retries
    stay in ask mode.
    """
    if answered_cq_count < ask_budget:
        return AskQuestion(ask_candidate_id)
    return Answer()


@dataclass(frozen=True)
class CtxPredParams:
    w: np.ndarray
    b: float


@dataclass(frozen=True)
class CtxPredTrainConfig:
    learning_rate: float = 1.0
    epochs: int = 200


def _sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def train_ctxpred(
    history_vecs: np.ndarray,
    ask_labels: Sequence[bool],
    cfg: CtxPredTrainConfig = CtxPredTrainConfig(),
) -> CtxPredParams:
    """Full-batch logistic regression: history embedding -> P(ask).

    Labels come from corpus prefixes: ask iff the ground-truth conversation
    still had a clarifying question after the prefix.
    """
    y = np.asarray(ask_labels, dtype=np.float64)
    if y.size == 0 or y.min() == y.max():
        raise DegenerateLabelsError("need at least one example of each label")
    x = np.asarray(history_vecs, dtype=np.float64)
    if x.shape[0] != y.size:
        raise ValueError("one label per feature row required")
    w = np.zeros(x.shape[1], dtype=np.float64)
    b = 0.0
    n = y.size
    for _ in range(cfg.epochs):
        residual = _sigmoid(x @ w + b) - y
        w -= cfg.learning_rate * (x.T @ residual) / n
        b -= cfg.learning_rate * float(residual.mean())
    return CtxPredParams(w=w, b=b)


def ctxpred_probability(history_vec: np.ndarray, params: CtxPredParams) -> float:
    return float(_sigmoid(float(params.w @ history_vec) + params.b))


def ctxpred_action(
    history_vec: np.ndarray,
    params: CtxPredParams,
    ask_candidate_id: str,
) -> Action:
    """Ask iff the predicted ask probability is at least 0.5 (inclusive)."""
    if ctxpred_probability(history_vec, params) >= 0.5:
        return AskQuestion(ask_candidate_id)
    return Answer()


def worse_answer_threshold(tau: int) -> float:
    # 1/max(tau, 1) keeps the threshold defined at tau = 0.
    return 1.0 / max(tau, 1)


def is_worse_decision(
    action: Action,
    answer_rr: float,
    top_question_relevant: bool,
    tau: int,
) -> bool:
    """Asking an irrelevant question is always worse; answering is worse
    only when a relevant question was available and the answer's reciprocal
    rank fell below 1/max(tau, 1)."""
    if isinstance(action, AskQuestion):
        return not top_question_relevant
    return top_question_relevant and answer_rr < worse_answer_threshold(tau)


def oracle_action(
    answer_rr: float,
    top_question_relevant: bool,
    tau: int,
    ask_candidate_id: str | None,
) -> Action:
    """Pick any action that is not a worse decision, preferring Answer."""
    if not is_worse_decision(Answer(), answer_rr, top_question_relevant, tau):
        return Answer()
    if top_question_relevant and ask_candidate_id is not None:
        return AskQuestion(ask_candidate_id)
    raise NoSafeActionError(
        "predicate inconsistency: answering is worse yet no relevant question"
    )


@dataclass(frozen=True)
class DecisionContext:
    """Everything a policy may look at when deciding one round."""
    state: DecisionState
    history_vec: np.ndarray
    answer_rr: float
    top_question_relevant: bool
    top_question_id: str
    answered_cq_count: int
    tau: int


class Agent(Protocol):
    def decide(self, ctx: DecisionContext, mode: Mode) -> Action:
        ...


@dataclass
class DqnAgent:
    """Greedy or epsilon-greedy wrapper around the value network.

    params is rebound by the training loop between updates; inference
    treats it as immutable.
    """
    params: DqnParams

    def decide(self, ctx: DecisionContext, mode: Mode) -> Action:
        q_values = dqn_forward(ctx.state, self.params)
        return select_action(q_values, mode, ctx.top_question_id)


@dataclass(frozen=True)
class FixedAskAgent:
    ask_budget: int

    def decide(self, ctx: DecisionContext, mode: Mode) -> Action:
        return baseline_action(self.ask_budget, ctx.answered_cq_count, ctx.top_question_id)


@dataclass(frozen=True)
class CtxPredAgent:
    params: CtxPredParams

    def decide(self, ctx: DecisionContext, mode: Mode) -> Action:
        return ctxpred_action(ctx.history_vec, self.params, ctx.top_question_id)


@dataclass(frozen=True)
class OracleAgent:
    def decide(self, ctx: DecisionContext, mode: Mode) -> Action:
        return oracle_action(
            ctx.answer_rr, ctx.top_question_relevant, ctx.tau, ctx.top_question_id
        )


@dataclass
class ScriptedAgent:
    """Replays a fixed ask/answer sequence; answers once the script ends."""
    script: Sequence[str]
    _cursor: int = 0

    def decide(self, ctx: DecisionContext, mode: Mode) -> Action:
        if self._cursor >= len(self.script):
            return Answer()
        step = self.script[self._cursor]
        self._cursor += 1
        if step == "ask":
            return AskQuestion(ctx.top_question_id)
        if step == "answer":
            return Answer()
        raise ValueError(f"unknown scripted step {step!r}")


def save_dqn(params: DqnParams, layout: StateLayout, path: str) -> None:
    """Write a versioned JSON checkpoint with the layout header."""
    payload = {
        "format": "convrisk-dqn",
        "version": 1,
        "dim": layout.dim,
        "k_q": layout.k_q,
        "score_slots": layout.score_slots,
        "mask": layout.mask.value,
        "hidden_width": params.hidden_width,
        "w1": params.w1.tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.tolist(),
        "b2": params.b2.tolist(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True)
        handle.write("\n")


def load_dqn(path: str) -> tuple[DqnParams, StateLayout]:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != "convrisk-dqn" or payload.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 policy checkpoint")
    layout = StateLayout(
        dim=payload["dim"],
        k_q=payload["k_q"],
        score_slots=payload["score_slots"],
        mask=FeatureMask(payload["mask"]),
    )
    params = DqnParams(
        w1=np.asarray(payload["w1"], dtype=np.float64),
        b1=np.asarray(payload["b1"], dtype=np.float64),
        w2=np.asarray(payload["w2"], dtype=np.float64),
        b2=np.asarray(payload["b2"], dtype=np.float64),
    )
    if params.input_dim != layout.total_dim:
        raise ValueError(f"{path}: weight shape does not match layout header")
    if params.hidden_width != payload["hidden_width"]:
        raise ValueError(f"{path}: hidden_width header does not match weights")
    return params, layout
