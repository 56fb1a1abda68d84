"""Shared fixtures and the acceptance-summary terminal hook."""

from __future__ import annotations

import re

import pytest

from convrisk.corpus import Candidate, CandidatePool, Conversation, Speaker, Turn


def make_conversation(cid: str, texts: list[str]) -> Conversation:
    """Alternating user-first conversation from a flat list of turn texts."""
    speakers = [Speaker.USER, Speaker.AGENT]
    return Conversation(
        cid,
        tuple(Turn(speakers[i % 2], text) for i, text in enumerate(texts)),
    )


def make_pool(
    conv: Conversation,
    n_neg_answers: int = 2,
    n_neg_questions: int = 2,
) -> CandidatePool:
    """Hand-built pool: target positives plus synthetic foreign negatives."""
    answers = [Candidate(
        f"{conv.conversation_id}:a{conv.answer_index}",
        conv.turns[conv.answer_index].text,
        is_positive=True,
    )]
    answers += [
        Candidate(f"negconv-{i}:a1", f"negative answer {i}", is_positive=False)
        for i in range(n_neg_answers)
    ]
    questions = [
        Candidate(f"{conv.conversation_id}:a{i}", conv.turns[i].text, is_positive=True)
        for i in conv.question_indices
    ]
    questions += [
        Candidate(f"negconv-{i}:a3", f"negative question {i}", is_positive=False)
        for i in range(n_neg_questions)
    ]
    return CandidatePool(
        conversation_id=conv.conversation_id,
        answers=tuple(answers),
        questions=tuple(questions),
    )


@pytest.fixture
def four_turn_conv() -> Conversation:
    return make_conversation("conv-a", [
        "how do i reset my password",
        "which operating system are you on",
        "windows eleven",
        "open settings accounts and choose reset password",
    ])


@pytest.fixture
def eight_turn_conv() -> Conversation:
    return make_conversation("conv-b", [
        "printer will not print u1",
        "is the printer connected over usb a1",
        "yes over usb u2",
        "which driver version do you have a2",
        "driver nine point two u3",
        "does the test page print a3",
        "no it stays blank u4",
        "reinstall the driver from the vendor site a4",
    ])


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion after the run

_ACCEPTANCE_RESULTS: dict[int, str] = {}
_ACCEPTANCE_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")

_CRITERIA = {
    1: "[PRIMARY] reciprocal-rank metric oracles",
    2: "[PRIMARY] case-study decision replay",
    3: "[PRIMARY] oracle zero decision error",
    4: "[PRIMARY] q0a/q1a crossover trend",
    5: "[PRIMARY] policy learning on scripted corpora",
    6: "[PRIMARY] gradient correctness vs finite differences",
    7: "[PRIMARY] q-target arithmetic",
    8: "[PRIMARY] byte-identical deterministic runs",
    9: "[PRIMARY] episode bound properties",
    10: "[SECONDARY] bridge protocol conformance",
}


def pytest_runtest_logreport(report):
    match = _ACCEPTANCE_PATTERN.search(report.nodeid)
    if not match:
        return
    number = int(match.group(1))
    if report.when == "call":
        _ACCEPTANCE_RESULTS[number] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.skipped:
        _ACCEPTANCE_RESULTS[number] = "SKIP"
    elif report.when == "setup" and report.failed:
        _ACCEPTANCE_RESULTS[number] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_ACCEPTANCE_RESULTS):
        label = _CRITERIA.get(number, "")
        terminalreporter.write_line(
            f"criterion {number:>2} {label}: {_ACCEPTANCE_RESULTS[number]}"
        )
