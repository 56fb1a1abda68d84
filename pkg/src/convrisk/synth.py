"""Seeded synthetic corpora and scripted rankers.

These exist so the simulator can be exercised end to end without real
dialogue data: corpora are generated from a seeded RNG, and scripted
rankers place positives at controlled ranks so episode outcomes are known
in advance. Scripted rankers key off candidate provenance (is_positive and
the conversation id embedded in candidate ids), never off text.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Candidate, CandidatePool, Conversation, Corpus, Speaker, Turn
from .encoding import fnv1a_64
from .ranker import RankerScores, rank_candidates

_SEP_MARK = " [SEP] "


def _words(rng: random.Random, count: int) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    return " ".join(
        "".join(rng.choice(alphabet) for _ in range(rng.randint(3, 7)))
        for _ in range(count)
    )


def synthetic_corpus(
    n_conversations: int,
    seed: int = 0,
    prefix: str = "synth",
    min_questions: int = 1,
    max_questions: int = 4,
) -> Corpus:
    """Random alternating conversations, one answer and 1..4 questions each."""
    rng = random.Random(seed)
    conversations = []
    for i in range(n_conversations):
        n_questions = rng.randint(min_questions, max_questions)
        turns: list[Turn] = [Turn(Speaker.USER, _words(rng, rng.randint(4, 9)))]
        for _ in range(n_questions):
            turns.append(Turn(Speaker.AGENT, _words(rng, rng.randint(3, 7))))
            turns.append(Turn(Speaker.USER, _words(rng, rng.randint(3, 7))))
        turns.append(Turn(Speaker.AGENT, _words(rng, rng.randint(4, 9))))
        conversations.append(Conversation(f"{prefix}-{i:04d}", tuple(turns)))
    return Corpus(tuple(conversations))


def single_question_corpus(
    n_conversations: int, seed: int = 0, prefix: str = "synth"
) -> Corpus:
    """Four-turn conversations: query, clarifying question, feedback, answer."""
    return synthetic_corpus(
        n_conversations, seed=seed, prefix=prefix,
        min_questions=1, max_questions=1,
    )


def _conv_of(candidate_id: str) -> str:
    return candidate_id.rsplit(":a", 1)[0]


def _jitter(candidate_id: str) -> float:
    # Stable per-identity perturbation in [0, 0.001); keeps negative scores
    # distinct across calls even as the candidate list shrinks.
    return (fnv1a_64(candidate_id.encode("utf-8")) % 997) / 997000.0


@dataclass(frozen=True)
class ScriptedAnswerRanker:
    """Places the positive answer at a fixed initial rank, lifting it to
    rank 1 once the context contains any separator (i.e. after feedback).

    initial_rank 2 puts exactly one negative above the positive; rank 1
    puts the positive on top from the start. The answer pool never shrinks,
    so positional negative scores are stable.
    """
    initial_rank_by_conv: Mapping[str, int] = field(default_factory=dict)
    default_initial_rank: int = 2

    def score(self, context_text: str, candidates: Sequence[Candidate]) -> RankerScores:
        helped = _SEP_MARK in context_text
        raw: list[float] = []
        negatives_seen = 0
        for cand in candidates:
            if cand.is_positive:
                rank = self.initial_rank_by_conv.get(
                    _conv_of(cand.candidate_id), self.default_initial_rank
                )
                raw.append(0.9 if helped or rank == 1 else 0.45)
            elif negatives_seen == 0:
                raw.append(0.5)
                negatives_seen += 1
            else:
                raw.append(0.4 - _jitter(cand.candidate_id))
                negatives_seen += 1
        return rank_candidates([c.candidate_id for c in candidates], raw)


@dataclass(frozen=True)
class ScriptedQuestionRanker:
    """Controls whether the ground-truth question ranks on top.

    The target conversation is read off the positives present in the pool.
    In relevant-top mode positives outscore every negative. Otherwise the
    conversation's designated decoy negative outranks them, and once that
    decoy is rejected the positives surface (so a tolerant user can
    recover). bury_positives instead pins positives below all negatives,
    keeping the top question irrelevant no matter what gets rejected.
    """
    relevant_top_by_conv: Mapping[str, bool] = field(default_factory=dict)
    decoy_by_conv: Mapping[str, str] = field(default_factory=dict)
    default_relevant_top: bool = True
    bury_positives: bool = False

    def score(self, context_text: str, candidates: Sequence[Candidate]) -> RankerScores:
        target: str | None = None
        for cand in candidates:
            if cand.is_positive:
                target = _conv_of(cand.candidate_id)
                break
        relevant_top = (
            self.relevant_top_by_conv.get(target, self.default_relevant_top)
            if target is not None else False
        )
        decoy = self.decoy_by_conv.get(target) if target is not None else None

        raw: list[float] = []
        for cand in candidates:
            if cand.is_positive:
                raw.append(0.1 if self.bury_positives else 0.9)
            elif not relevant_top and cand.candidate_id == decoy:
                raw.append(0.95)
            else:
                raw.append(0.4 - _jitter(cand.candidate_id))
        return rank_candidates([c.candidate_id for c in candidates], raw)


def first_negative_decoys(pools: Mapping[str, CandidatePool]) -> dict[str, str]:
    """Designate each pool's first negative question as its decoy."""
    decoys: dict[str, str] = {}
    for conv_id, pool in pools.items():
        for cand in pool.questions:
            if not cand.is_positive:
                decoys[conv_id] = cand.candidate_id
                break
    return decoys


def always_helpful_rankers() -> tuple[ScriptedAnswerRanker, ScriptedQuestionRanker]:
    """Answer starts at rank 2, feedback lifts it to rank 1, and the
    ground-truth question is always on top while it remains unasked."""
    return ScriptedAnswerRanker(), ScriptedQuestionRanker()


def poisoned_rankers(
    pools: Mapping[str, CandidatePool],
) -> tuple[ScriptedAnswerRanker, ScriptedQuestionRanker]:
    """Answer starts at rank 2 but the top question is never relevant."""
    return (
        ScriptedAnswerRanker(),
        ScriptedQuestionRanker(
            default_relevant_top=False,
            decoy_by_conv=first_negative_decoys(pools),
            bury_positives=True,
        ),
    )


def crossover_rankers(
    corpus: Corpus,
    pools: Mapping[str, CandidatePool],
    seed: int = 0,
) -> tuple[ScriptedAnswerRanker, ScriptedQuestionRanker]:
    """Rankers for the ask-vs-answer trade-off corpus.

    Exactly half the conversations (seeded assignment) get a relevant top
    question; independently, half start with the true answer at rank 1 and
    half at rank 2. Feedback always lifts the answer to rank 1, and every
    no-relevant-top conversation has a single decoy, so one tolerated
    rejection uncovers the ground-truth question.
    """
    ids = [c.conversation_id for c in corpus]
    rng = random.Random(seed)

    relevant_ids = sorted(ids)
    rng.shuffle(relevant_ids)
    relevant_top = {cid: i < len(ids) // 2 for i, cid in enumerate(relevant_ids)}

    rank_ids = sorted(ids)
    rng.shuffle(rank_ids)
    initial_rank = {cid: 1 if i < len(ids) // 2 else 2 for i, cid in enumerate(rank_ids)}

    return (
        ScriptedAnswerRanker(initial_rank_by_conv=initial_rank),
        ScriptedQuestionRanker(
            relevant_top_by_conv=relevant_top,
            decoy_by_conv=first_negative_decoys(pools),
        ),
    )
