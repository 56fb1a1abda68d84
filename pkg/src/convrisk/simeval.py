"""Episode simulation, metrics, significance testing, and reports.

An episode walks one conversation: rank the fixed answer pool and the
shrinking question pool against the running context, featurize, let the
policy pick ask-or-answer, and apply the simulated user's reaction. The
context grows by " [SEP] " ++ question ++ " [SEP] " ++ feedback for every
answered clarifying question; asked or rejected questions never reappear.

Metrics follow the evaluation protocol: Recall@1 is the fraction of
episodes ending in a rank-1 answer, MRR averages per-episode reciprocal
rank with leaves counting 0, and the decision error rate pools worse
decisions over all decisions of the run.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Candidate, CandidatePool, Conversation
from .encoding import Embedder
from .errors import EmptyResultsError, LengthMismatchError
from .policy import (
    Action,
    Agent,
    Answer,
    AskQuestion,
    DecisionContext,
    DecisionState,
    Greedy,
    Mode,
    StateLayout,
    featurize_state,
    is_worse_decision,
)
from .ranker import Ranker, RankerScores, reciprocal_rank
from .usersim import (
    AnswerReceived,
    Feedback,
    Leave,
    LeaveReason,
    Rejected,
    UserProfile,
    initial_user_state,
    user_respond,
)

SEP = " [SEP] "

# transition_sink outcome kinds (see rl.Transition)
OUTCOME_ANSWER = "answer"
OUTCOME_ASKED_RELEVANT = "asked_relevant"
OUTCOME_ASKED_IRRELEVANT = "asked_irrelevant"

TransitionSink = Callable[
    # (state, action, outcome kind, rr, next_state)
    [DecisionState, Action, str, float, "DecisionState | None"],
    None,
]


@dataclass(frozen=True)
class Rankers:
    answers: Ranker
    questions: Ranker


@dataclass(frozen=True)
class DecisionRecord:
    round: int
    action: Action
    was_worse: bool
    answer_rr_at_decision: float
    top_question_relevant: bool


class TerminalKind(Enum):
    ANSWERED_CORRECTLY = "answered_correctly"
    ANSWERED_INCORRECTLY = "answered_incorrectly"
    USER_LEFT = "user_left"


@dataclass(frozen=True)
class EpisodeResult:
    conversation_id: str
    terminal: TerminalKind
    leave_reason: LeaveReason | None
    rr: float
    decisions: tuple[DecisionRecord, ...]
    questions_answered: int
    irrelevant_seen: int


def _ranked_texts(
    scores: RankerScores, candidates: Sequence[Candidate]
) -> list[tuple[str, float]]:
    return [(candidates[i].text, scores.scores[i][1]) for i in scores.ranking]


def run_episode(
    conversation: Conversation,
    pool: CandidatePool,
    agent: Agent,
    rankers: Rankers,
    profile: UserProfile,
    mode: Mode = Greedy(),
    *,
    embedder: Embedder,
    layout: StateLayout,
    transition_sink: TransitionSink | None = None,
) -> EpisodeResult:
    """Simulate one conversation to termination.

    With a transition_sink, every completed decision is reported once:
    answers immediately with their reciprocal rank, irrelevant asks
    immediately, and relevant asks as soon as the next round's state is
    built. Asks that hit the patience limit produce no transition (the
    reward model does not define one).
    """
    user = initial_user_state(pool, conversation, profile)
    query = conversation.query
    history_parts: list[str] = []
    remaining = list(pool.questions)
    decisions: list[DecisionRecord] = []
    round_no = 1
    pending: tuple[DecisionState, Action] | None = None
    answer_scores: RankerScores | None = None  # cache; context invalidates

    def emit(state: DecisionState, action: Action, kind: str,
             rr: float = 0.0, next_state: DecisionState | None = None) -> None:
        if transition_sink is not None:
            transition_sink(state, action, kind, rr, next_state)

    while True:
        context = SEP.join([query, *history_parts])
        history_text = SEP.join(history_parts)
        if answer_scores is None:
            answer_scores = rankers.answers.score(context, pool.answers)
        ranked_answers = _ranked_texts(answer_scores, pool.answers)
        answer_rr = reciprocal_rank(answer_scores, [pool.positive_answer_id])

        if remaining:
            question_scores = rankers.questions.score(context, remaining)
            ranked_questions = _ranked_texts(question_scores, remaining)
            top_question = remaining[question_scores.ranking[0]]
        else:
            ranked_questions = []
            top_question = None

        state = featurize_state(
            query, history_text, ranked_answers, ranked_questions, embedder, layout
        )
        if pending is not None:
            emit(pending[0], pending[1], OUTCOME_ASKED_RELEVANT, next_state=state)
            pending = None

        top_relevant = (
            top_question is not None
            and top_question.candidate_id in user.remaining_cq_ids
        )

        if top_question is None:
            action: Action = Answer()  # nothing left to ask
        else:
            ctx = DecisionContext(
                state=state,
                history_vec=embedder.embed(history_text),
                answer_rr=answer_rr,
                top_question_relevant=top_relevant,
                top_question_id=top_question.candidate_id,
                answered_cq_count=user.answered_questions,
                tau=profile.tolerance,
            )
            action = agent.decide(ctx, mode)

        decisions.append(DecisionRecord(
            round=round_no,
            action=action,
            was_worse=is_worse_decision(
                action, answer_rr, top_relevant, profile.tolerance
            ),
            answer_rr_at_decision=answer_rr,
            top_question_relevant=top_relevant,
        ))

        response, user = user_respond(action, user)

        if isinstance(response, AnswerReceived):
            emit(state, action, OUTCOME_ANSWER, rr=answer_rr)
            terminal = (
                TerminalKind.ANSWERED_CORRECTLY
                if answer_rr == 1.0
                else TerminalKind.ANSWERED_INCORRECTLY
            )
            return EpisodeResult(
                conversation_id=conversation.conversation_id,
                terminal=terminal,
                leave_reason=None,
                rr=answer_rr,
                decisions=tuple(decisions),
                questions_answered=user.answered_questions,
                irrelevant_seen=user.irrelevant_seen,
            )

        assert isinstance(action, AskQuestion)
        asked = next(
            (c for c in remaining if c.candidate_id == action.candidate_id), None
        )

        if isinstance(response, Feedback):
            assert asked is not None  # feedback implies the id was still poolable
            remaining.remove(asked)
            pending = (state, action)
            history_parts.extend([asked.text, response.text])
            round_no += 1
            answer_scores = None  # context grew
            continue

        if isinstance(response, Rejected):
            if asked is not None:
                remaining.remove(asked)
            emit(state, action, OUTCOME_ASKED_IRRELEVANT)
            continue  # same round, new decision

        assert isinstance(response, Leave)
        if response.reason is LeaveReason.TOLERANCE_EXHAUSTED:
            emit(state, action, OUTCOME_ASKED_IRRELEVANT)
        return EpisodeResult(
            conversation_id=conversation.conversation_id,
            terminal=TerminalKind.USER_LEFT,
            leave_reason=response.reason,
            rr=0.0,
            decisions=tuple(decisions),
            questions_answered=user.answered_questions,
            irrelevant_seen=user.irrelevant_seen,
        )


@dataclass(frozen=True)
class FoldSummary:
    fold: int
    episodes: int
    recall_at_1: float
    mrr: float
    decision_error_rate: float


@dataclass(frozen=True)
class RunSummary:
    recall_at_1: float
    mrr: float
    decision_error_rate: float
    episodes: int
    decisions: int
    per_fold: tuple[FoldSummary, ...] = ()


def _rates(results: Sequence[EpisodeResult]) -> tuple[float, float, float, int]:
    correct = sum(1 for r in results if r.terminal is TerminalKind.ANSWERED_CORRECTLY)
    total_decisions = sum(len(r.decisions) for r in results)
    worse = sum(sum(1 for d in r.decisions if d.was_worse) for r in results)
    recall = correct / len(results)
    mrr = sum(r.rr for r in results) / len(results)
    err = worse / total_decisions if total_decisions else 0.0
    return recall, mrr, err, total_decisions


def compute_metrics(
    results: Sequence[EpisodeResult],
    fold_ids: Sequence[int] | None = None,
) -> RunSummary:
    """Aggregate episode results; decision errors are pooled over decisions."""
    if not results:
        raise EmptyResultsError("no episode results")
    if fold_ids is not None and len(fold_ids) != len(results):
        raise LengthMismatchError("one fold id per result required")
    recall, mrr, err, total_decisions = _rates(results)
    per_fold: list[FoldSummary] = []
    if fold_ids is not None:
        for fold in sorted(set(fold_ids)):
            subset = [r for r, f in zip(results, fold_ids) if f == fold]
            f_recall, f_mrr, f_err, _ = _rates(subset)
            per_fold.append(FoldSummary(
                fold=fold, episodes=len(subset),
                recall_at_1=f_recall, mrr=f_mrr, decision_error_rate=f_err,
            ))
    return RunSummary(
        recall_at_1=recall,
        mrr=mrr,
        decision_error_rate=err,
        episodes=len(results),
        decisions=total_decisions,
        per_fold=tuple(per_fold),
    )


def significance_test(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    n_resamples: int = 10000,
    seed: int = 0,
) -> float:
    """Two-sided paired bootstrap p-value for the mean difference.

    Lists must be aligned pairwise (same conversation order). Single-element
    inputs have no resampling power and return the degenerate p = 1.0.
    """
    if len(scores_a) != len(scores_b):
        raise LengthMismatchError(
            f"paired lists differ in length: {len(scores_a)} vs {len(scores_b)}"
        )
    if not scores_a:
        raise EmptyResultsError("cannot test empty score lists")
    diffs = np.asarray(scores_a, dtype=np.float64) - np.asarray(scores_b, dtype=np.float64)
    if diffs.size < 2:
        return 1.0
    observed = diffs.mean()
    centered = diffs - observed
    rng = np.random.default_rng(seed)
    indices = rng.integers(0, diffs.size, size=(n_resamples, diffs.size))
    resampled_means = centered[indices].mean(axis=1)
    extreme = int(np.sum(np.abs(resampled_means) >= abs(observed)))
    return (extreme + 1) / (n_resamples + 1)


@dataclass(frozen=True)
class LabeledSummary:
    """A RunSummary tagged with the run that produced it."""
    policy: str
    rho: int | None  # None renders as inf
    tau: int
    pool_size: int
    summary: RunSummary


def _rho_str(rho: int | None) -> str:
    return "inf" if rho is None else str(rho)


def _sorted_rows(summaries: Sequence[LabeledSummary]) -> list[LabeledSummary]:
    return sorted(
        summaries,
        key=lambda s: (s.rho is None, s.rho or 0, s.tau, s.policy),
    )


def write_report(summaries: Sequence[LabeledSummary], out_dir: str) -> None:
    """Write summary.csv, report.txt, and report.png into out_dir.

    Output is byte-deterministic for identical inputs: rows are sorted by
    (rho, tau, policy), rates are printed with six digits, and the figure
    is rendered without varying metadata.
    """
    if not summaries:
        raise EmptyResultsError("no summaries to report")
    rows = _sorted_rows(summaries)

    import os
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8",
              newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([
            "policy", "rho", "tau", "pool_size", "episodes", "decisions",
            "recall_at_1", "mrr", "decision_error_rate",
        ])
        for row in rows:
            writer.writerow([
                row.policy, _rho_str(row.rho), row.tau, row.pool_size,
                row.summary.episodes, row.summary.decisions,
                f"{row.summary.recall_at_1:.6f}",
                f"{row.summary.mrr:.6f}",
                f"{row.summary.decision_error_rate:.6f}",
            ])

    name_width = max(len("policy"), max(len(r.policy) for r in rows))
    lines = [
        f"{'policy':<{name_width}}  {'rho':>4} {'tau':>4}  "
        f"{'R@1/N':>9} {'MRR':>9} {'Dec. err':>9}"
    ]
    group: tuple[int | None, int] | None = None
    for row in rows:
        if group is not None and group != (row.rho, row.tau):
            lines.append("")
        group = (row.rho, row.tau)
        lines.append(
            f"{row.policy:<{name_width}}  {_rho_str(row.rho):>4} {row.tau:>4}  "
            f"{row.summary.recall_at_1:>9.6f} {row.summary.mrr:>9.6f} "
            f"{row.summary.decision_error_rate:>9.6f}"
        )
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8",
              newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")

    _render_figure(rows, os.path.join(out_dir, "report.png"))


def _render_figure(rows: Sequence[LabeledSummary], path: str) -> None:
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    labels = [f"{r.policy}\nrho={_rho_str(r.rho)} tau={r.tau}" for r in rows]
    metrics = [
        ("R@1/N", [r.summary.recall_at_1 for r in rows]),
        ("MRR", [r.summary.mrr for r in rows]),
        ("Dec. err", [r.summary.decision_error_rate for r in rows]),
    ]
    fig, axes = plt.subplots(1, 3, figsize=(4 + 0.6 * len(rows), 4), sharey=True)
    x = np.arange(len(rows))
    for ax, (title, values) in zip(axes, metrics):
        ax.bar(x, values, color="#4878a8")
        ax.set_title(title)
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=90, fontsize=7)
        ax.set_ylim(0.0, 1.05)
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def episode_record(result: EpisodeResult, **extra: object) -> dict:
    """JSON-serializable form of one EpisodeResult for the episode log."""
    record: dict = dict(extra)
    record.update({
        "conversation_id": result.conversation_id,
        "terminal": result.terminal.value,
        "leave_reason": result.leave_reason.value if result.leave_reason else None,
        "rr": result.rr,
        "questions_answered": result.questions_answered,
        "irrelevant_seen": result.irrelevant_seen,
        "decisions": [
            {
                "round": d.round,
                "action": "ask" if isinstance(d.action, AskQuestion) else "answer",
                "candidate_id": (
                    d.action.candidate_id if isinstance(d.action, AskQuestion) else None
                ),
                "was_worse": d.was_worse,
                "answer_rr": d.answer_rr_at_decision,
                "top_question_relevant": d.top_question_relevant,
            }
            for d in result.decisions
        ],
    })
    return record


def write_episode_log(records: Iterable[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def read_episode_log(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def summary_from_records(records: Sequence[dict]) -> RunSummary:
    """Recompute run metrics by streaming over logged episode records.

    Independent of compute_metrics' code path; used to cross-check that the
    log and the summary agree.
    """
    if not records:
        raise EmptyResultsError("no records")
    episodes = len(records)
    correct = sum(1 for r in records if r["terminal"] == "answered_correctly")
    mrr = sum(float(r["rr"]) for r in records) / episodes
    decisions = sum(len(r["decisions"]) for r in records)
    worse = sum(
        sum(1 for d in r["decisions"] if d["was_worse"]) for r in records
    )
    return RunSummary(
        recall_at_1=correct / episodes,
        mrr=mrr,
        decision_error_rate=worse / decisions if decisions else 0.0,
        episodes=episodes,
        decisions=decisions,
    )
