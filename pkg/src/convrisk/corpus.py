"""Conversation corpus: parsing, cleaning, fold splits, and candidate pools.

A corpus is a JSONL file, one conversation per line:

    {"id": "qa-001", "turns": [{"speaker": "user", "text": "..."}, ...]}

Conversations are cleaned into strictly alternating user/agent turns. The
final agent turn is the answer; every earlier agent turn is a ground-truth
clarifying question whose feedback is the user turn that follows it.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    EmptyConversationError,
    FormatError,
    InsufficientNegativesError,
    TooFewConversationsError,
)

# Cleaning thresholds: turns per conversation and tokens per turn.
MAX_TURN_TOKENS = 512
MIN_TURNS = 4
MAX_TURNS = 10


class Speaker(Enum):
    USER = "user"
    AGENT = "agent"


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str

    @property
    def token_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Conversation:
    conversation_id: str
    turns: tuple[Turn, ...]

    @property
    def query(self) -> str:
        """Text of the opening user turn."""
        if not self.turns:
            raise EmptyConversationError(self.conversation_id)
        return self.turns[0].text

    @property
    def answer_index(self) -> int:
        """Index of the final agent turn (the answer)."""
        for i in range(len(self.turns) - 1, -1, -1):
            if self.turns[i].speaker is Speaker.AGENT:
                return i
        raise EmptyConversationError(f"{self.conversation_id}: no agent turn")

    @property
    def question_indices(self) -> tuple[int, ...]:
        """Indices of agent turns before the answer (clarifying questions)."""
        answer = self.answer_index
        return tuple(
            i for i, t in enumerate(self.turns)
            if t.speaker is Speaker.AGENT and i < answer
        )

    def feedback_text(self, question_index: int) -> str:
        """User reply that follows the clarifying question at question_index."""
        if question_index + 1 >= len(self.turns):
            raise IndexError(question_index)
        turn = self.turns[question_index + 1]
        if turn.speaker is not Speaker.USER:
            raise ValueError(f"turn {question_index + 1} is not a user turn")
        return turn.text


@dataclass(frozen=True)
class Corpus:
    conversations: tuple[Conversation, ...]

    def __post_init__(self) -> None:
        index: dict[str, Conversation] = {}
        for conv in self.conversations:
            if conv.conversation_id in index:
                raise ValueError(f"duplicate conversation id {conv.conversation_id!r}")
            index[conv.conversation_id] = conv
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.conversations)

    def __iter__(self):
        return iter(self.conversations)

    def get(self, conversation_id: str) -> Conversation:
        return self._index[conversation_id]


def _parse_turn(raw: object, line_no: int) -> Turn:
    if not isinstance(raw, dict):
        raise FormatError(line_no, "turn is not an object")
    speaker = raw.get("speaker")
    text = raw.get("text")
    if speaker not in ("user", "agent"):
        raise FormatError(line_no, f"bad speaker {speaker!r}")
    if not isinstance(text, str):
        raise FormatError(line_no, "turn text is not a string")
    return Turn(Speaker(speaker), text)


def parse_corpus_lines(lines: Iterable[str]) -> Corpus:
    """Parse JSONL records into a raw (un-normalized) corpus."""
    conversations: list[Conversation] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(record, dict):
            raise FormatError(line_no, "record is not an object")
        conv_id = record.get("id")
        turns = record.get("turns")
        if not isinstance(conv_id, str) or not conv_id:
            raise FormatError(line_no, "missing or empty id")
        if conv_id in seen:
            raise FormatError(line_no, f"duplicate id {conv_id!r}")
        if not isinstance(turns, list):
            raise FormatError(line_no, "turns is not a list")
        seen.add(conv_id)
        conversations.append(Conversation(
            conversation_id=conv_id,
            turns=tuple(_parse_turn(t, line_no) for t in turns),
        ))
    return Corpus(tuple(conversations))


def parse_corpus(path: str) -> Corpus:
    with open(path, encoding="utf-8") as handle:
        return parse_corpus_lines(handle)


def write_corpus(corpus: Corpus, path: str) -> None:
    """Write a corpus back out as JSONL (UTF-8, LF line endings)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for conv in corpus:
            record = {
                "id": conv.conversation_id,
                "turns": [
                    {"speaker": t.speaker.value, "text": t.text} for t in conv.turns
                ],
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _truncate(text: str) -> str:
    return " ".join(text.split()[:MAX_TURN_TOKENS])


def normalize_conversation(conv: Conversation) -> Conversation:
    """Merge consecutive same-speaker turns and cap each turn at 512 tokens.

    Whitespace-only turns are dropped before merging. Idempotent.
    """
    kept = [t for t in conv.turns if t.text.strip()]
    if not kept:
        raise EmptyConversationError(conv.conversation_id)
    merged: list[Turn] = []
    for turn in kept:
        if merged and merged[-1].speaker is turn.speaker:
            merged[-1] = Turn(turn.speaker, merged[-1].text + " " + turn.text)
        else:
            merged.append(turn)
    return Conversation(
        conversation_id=conv.conversation_id,
        turns=tuple(Turn(t.speaker, _truncate(t.text)) for t in merged),
    )


def drop_reason(conv: Conversation) -> str | None:
    """Why a normalized conversation would be excluded, or None if kept."""
    if len(conv.turns) < MIN_TURNS:
        return "too_short"
    if len(conv.turns) > MAX_TURNS:
        return "too_long"
    if conv.turns[0].speaker is not Speaker.USER:
        return "starts_with_agent"
    if conv.turns[-1].speaker is not Speaker.AGENT:
        return "ends_on_user"
    for prev, cur in zip(conv.turns, conv.turns[1:]):
        if prev.speaker is cur.speaker:
            return "not_alternating"
    return None


def filter_corpus(corpus: Corpus) -> Corpus:
    """Keep conversations with 4..10 alternating turns, user first, agent last."""
    return Corpus(tuple(c for c in corpus if drop_reason(c) is None))


def split_folds(corpus: Corpus, n_folds: int, seed: int) -> list[list[str]]:
    """Assign conversation ids to n_folds folds, sizes differing by at most 1.

    Deterministic: a seeded shuffle followed by round-robin assignment.
    """
    if n_folds < 1:
        raise ValueError("n_folds must be >= 1")
    if len(corpus) < n_folds:
        raise TooFewConversationsError(
            f"{len(corpus)} conversations cannot fill {n_folds} folds"
        )
    ids = [c.conversation_id for c in corpus]
    random.Random(seed).shuffle(ids)
    folds: list[list[str]] = [[] for _ in range(n_folds)]
    for i, conv_id in enumerate(ids):
        folds[i % n_folds].append(conv_id)
    return folds


@dataclass(frozen=True)
class Candidate:
    candidate_id: str
    text: str
    is_positive: bool


@dataclass(frozen=True)
class CandidatePool:
    """Fixed retrieval pools for one target conversation.

    answers holds exactly one positive (the target's final answer) plus
    sampled foreign answers. questions holds every ground-truth clarifying
    question of the target plus foreign clarifying questions, pool_size total.
    """
    conversation_id: str
    answers: tuple[Candidate, ...]
    questions: tuple[Candidate, ...]

    @property
    def positive_answer_id(self) -> str:
        for cand in self.answers:
            if cand.is_positive:
                return cand.candidate_id
        raise ValueError("pool has no positive answer")

    @property
    def positive_question_ids(self) -> tuple[str, ...]:
        return tuple(c.candidate_id for c in self.questions if c.is_positive)


@dataclass(frozen=True)
class PoolConfig:
    pool_size: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pool_size < 2:
            raise ValueError("pool_size must be >= 2")


def candidate_id_for(conv: Conversation, turn_index: int) -> str:
    return f"{conv.conversation_id}:a{turn_index}"


def build_pools(corpus: Corpus, target: Conversation, cfg: PoolConfig) -> CandidatePool:
    """Build the answer and question pools for one target conversation.

    Negatives are drawn without replacement from a seeded shuffle of all
    foreign candidates, so identical (corpus, target, seed) inputs yield
    identical pools regardless of call order.
    """
    rng = random.Random(f"{cfg.seed}:{target.conversation_id}")

    positive_answer = Candidate(
        candidate_id_for(target, target.answer_index),
        target.turns[target.answer_index].text,
        is_positive=True,
    )
    positive_questions = [
        Candidate(candidate_id_for(target, i), target.turns[i].text, is_positive=True)
        for i in target.question_indices
    ]
    if len(positive_questions) + 1 > cfg.pool_size:
        raise InsufficientNegativesError(
            f"pool_size {cfg.pool_size} cannot hold "
            f"{len(positive_questions)} ground-truth questions"
        )

    foreign_answers: list[Candidate] = []
    foreign_questions: list[Candidate] = []
    for conv in corpus:
        if conv.conversation_id == target.conversation_id:
            continue
        foreign_answers.append(Candidate(
            candidate_id_for(conv, conv.answer_index),
            conv.turns[conv.answer_index].text,
            is_positive=False,
        ))
        for i in conv.question_indices:
            foreign_questions.append(Candidate(
                candidate_id_for(conv, i), conv.turns[i].text, is_positive=False,
            ))

    need_answers = cfg.pool_size - 1
    need_questions = cfg.pool_size - len(positive_questions)
    if len(foreign_answers) < need_answers:
        raise InsufficientNegativesError(
            f"need {need_answers} foreign answers, corpus offers {len(foreign_answers)}"
        )
    if len(foreign_questions) < need_questions:
        raise InsufficientNegativesError(
            f"need {need_questions} foreign questions, "
            f"corpus offers {len(foreign_questions)}"
        )
    rng.shuffle(foreign_answers)
    rng.shuffle(foreign_questions)
    return CandidatePool(
        conversation_id=target.conversation_id,
        answers=(positive_answer, *foreign_answers[:need_answers]),
        questions=(*positive_questions, *foreign_questions[:need_questions]),
    )
