"""Simulated user with bounded tolerance and patience.

The user tolerates up to `tolerance` irrelevant clarifying questions: the
first `tolerance` are silently rejected, the (tolerance+1)-th ends the
conversation. `patience` caps how many questions the user will answer; by
default only answered questions consume patience (tolerated rejections do
not), and `asks_consume_patience=True` switches to counting every ask.

Relevance is identity matching on candidate_id against the not-yet-asked
ground-truth clarifying questions of the source conversation: any unasked
ground-truth question is relevant regardless of its original order, and an
already-answered one is no longer relevant. Feedback for a matched question
is the user turn that followed it in the source conversation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .corpus import CandidatePool, Conversation, candidate_id_for
from .errors import TerminalStateError, UnknownCandidateIdError
from .policy import Action, Answer, AskQuestion


@dataclass(frozen=True)
class UserProfile:
    tolerance: int
    patience: int | None  # None means unbounded
    asks_consume_patience: bool = False

    def __post_init__(self) -> None:
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 or None")


class LeaveReason(Enum):
    TOLERANCE_EXHAUSTED = "tolerance_exhausted"
    PATIENCE_EXHAUSTED = "patience_exhausted"


@dataclass(frozen=True)
class Feedback:
    text: str


@dataclass(frozen=True)
class Leave:
    reason: LeaveReason


@dataclass(frozen=True)
class AnswerReceived:
    pass


@dataclass(frozen=True)
class Rejected:
    """Silent rejection of a tolerated irrelevant question; carries no text."""


UserResponse = Feedback | Leave | AnswerReceived | Rejected


@dataclass(frozen=True)
class UserState:
    profile: UserProfile
    remaining_cq_ids: frozenset[str]
    pool_question_ids: frozenset[str]
    feedback_by_id: dict[str, str]
    irrelevant_seen: int = 0
    answered_questions: int = 0
    asked_total: int = 0
    terminal: bool = False


def initial_user_state(
    pool: CandidatePool,
    conversation: Conversation,
    profile: UserProfile,
) -> UserState:
    if pool.conversation_id != conversation.conversation_id:
        raise ValueError("pool was built for a different conversation")
    feedback = {
        candidate_id_for(conversation, i): conversation.feedback_text(i)
        for i in conversation.question_indices
    }
    return UserState(
        profile=profile,
        remaining_cq_ids=frozenset(pool.positive_question_ids),
        pool_question_ids=frozenset(c.candidate_id for c in pool.questions),
        feedback_by_id=feedback,
    )


def judge_question(candidate_id: str, state: UserState) -> bool:
    """True iff the candidate is a not-yet-asked ground-truth question."""
    if candidate_id not in state.pool_question_ids:
        raise UnknownCandidateIdError(candidate_id)
    return candidate_id in state.remaining_cq_ids


def _patience_spent(state: UserState) -> int:
    if state.profile.asks_consume_patience:
        return state.asked_total
    return state.answered_questions


def user_respond(action: Action, state: UserState) -> tuple[UserResponse, UserState]:
    """Advance the user one step; deterministic in (action, state)."""
    if state.terminal:
        raise TerminalStateError("user already ended this conversation")

    if isinstance(action, Answer):
        return AnswerReceived(), replace(state, terminal=True)

    if not isinstance(action, AskQuestion):
        raise TypeError(f"unsupported action {action!r}")

    patience = state.profile.patience
    if patience is not None and _patience_spent(state) >= patience:
        return (
            Leave(LeaveReason.PATIENCE_EXHAUSTED),
            replace(state, asked_total=state.asked_total + 1, terminal=True),
        )

    if judge_question(action.candidate_id, state):
        return (
            Feedback(state.feedback_by_id[action.candidate_id]),
            replace(
                state,
                remaining_cq_ids=state.remaining_cq_ids - {action.candidate_id},
                answered_questions=state.answered_questions + 1,
                asked_total=state.asked_total + 1,
            ),
        )

    irrelevant_seen = state.irrelevant_seen + 1
    if irrelevant_seen > state.profile.tolerance:
        return (
            Leave(LeaveReason.TOLERANCE_EXHAUSTED),
            replace(
                state,
                irrelevant_seen=irrelevant_seen,
                asked_total=state.asked_total + 1,
                terminal=True,
            ),
        )
    return (
        Rejected(),
        replace(
            state,
            irrelevant_seen=irrelevant_seen,
            asked_total=state.asked_total + 1,
        ),
    )
