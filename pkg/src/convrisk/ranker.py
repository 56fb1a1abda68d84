"""Candidate rankers over the hashed TF-IDF embedding space.

The built-in ranker scores a candidate as the dot product of linearly
projected embeddings, (W e(context)) . (W e(candidate)), and is trained with
an in-batch softmax cross-entropy objective: each context in a batch of K
pairs must pick out its own positive among the K in-batch candidates.

An external scorer can replace the built-in one through a line-delimited
JSON protocol over a subprocess's standard streams (see BridgeClient).
Answer ranking and question ranking use independently trained parameter
sets over the same architecture.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .corpus import Candidate
from .encoding import Embedder
from .errors import (
    BridgeDownError,
    BridgeProtocolError,
    BridgeTimeoutError,
    DimensionMismatchError,
    EmptyRankingError,
    TooFewPairsError,
    UnknownCandidateIdError,
)

DEFAULT_DIM_OUT = 64
RR_CUTOFF = 10


@dataclass(frozen=True)
class RankerScores:
    """Raw scores in candidate order plus the induced ranking.

    ranking is a permutation of candidate indices, best first; ties are
    broken by ascending candidate_id.
    """
    scores: tuple[tuple[str, float], ...]
    ranking: tuple[int, ...]


def rank_candidates(candidate_ids: Sequence[str], raw_scores: Sequence[float]) -> RankerScores:
    if len(candidate_ids) != len(raw_scores):
        raise ValueError("one score per candidate required")
    if not candidate_ids:
        raise EmptyRankingError("no candidates to rank")
    order = sorted(
        range(len(candidate_ids)),
        key=lambda i: (-raw_scores[i], candidate_ids[i]),
    )
    return RankerScores(
        scores=tuple(zip(candidate_ids, (float(s) for s in raw_scores))),
        ranking=tuple(order),
    )


@dataclass(frozen=True)
class DotRankerParams:
    """Projection matrix W, shape (dim_out, dim_in)."""
    w: np.ndarray

    @property
    def dim_in(self) -> int:
        return self.w.shape[1]

    @property
    def dim_out(self) -> int:
        return self.w.shape[0]


def init_ranker_params(dim_in: int, dim_out: int = DEFAULT_DIM_OUT, seed: int = 0) -> DotRankerParams:
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (dim_in + dim_out))
    return DotRankerParams(w=rng.uniform(-bound, bound, size=(dim_out, dim_in)))


def score_candidates(
    context_text: str,
    candidates: Sequence[Candidate],
    params: DotRankerParams,
    embedder: Embedder,
) -> RankerScores:
    """Score candidates against the context with the projected dot product."""
    if not candidates:
        raise EmptyRankingError("no candidates to score")
    if params.dim_in != embedder.dim:
        raise DimensionMismatchError(
            f"ranker expects dim {params.dim_in}, embedder has {embedder.dim}"
        )
    ctx = params.w @ embedder.embed(context_text)
    raw = [float(ctx @ (params.w @ embedder.embed(c.text))) for c in candidates]
    return rank_candidates([c.candidate_id for c in candidates], raw)


def reciprocal_rank(
    scores: RankerScores,
    positive_ids: Sequence[str],
    cutoff: int = RR_CUTOFF,
) -> float:
    """1/r for the best rank r of any positive id, or 0 beyond the cutoff."""
    if not positive_ids:
        raise ValueError("positive_ids must be nonempty")
    known = {cid for cid, _ in scores.scores}
    wanted = set(positive_ids)
    missing = wanted - known
    if missing:
        raise UnknownCandidateIdError(f"not in ranked pool: {sorted(missing)}")
    for rank, idx in enumerate(scores.ranking, start=1):
        if rank > cutoff:
            break
        if scores.scores[idx][0] in wanted:
            return 1.0 / rank
    return 0.0


@dataclass(frozen=True)
class RankerTrainConfig:
    batch_size: int = 16
    epochs: int = 5
    learning_rate: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")


def in_batch_loss_and_grad(
    w: np.ndarray,
    ctx_vecs: np.ndarray,
    pos_vecs: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Mean in-batch cross-entropy and its gradient w.r.t. W.

    ctx_vecs and pos_vecs are (K, dim_in) embedding matrices for K pairs.
    Row j of the score matrix holds context j against all K in-batch
    positives; the correct class is the diagonal.
    """
    k = ctx_vecs.shape[0]
    u = ctx_vecs @ w.T
    v = pos_vecs @ w.T
    s = u @ v.T
    s_max = s.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(s - s_max).sum(axis=1, keepdims=True)) + s_max
    log_p = s - log_z
    loss = float(-log_p.diagonal().mean())
    g = (np.exp(log_p) - np.eye(k)) / k
    grad = (g @ v).T @ ctx_vecs + (g.T @ u).T @ pos_vecs
    return loss, grad


def train_dot_ranker(
    pairs: Sequence[tuple[str, str]],
    embedder: Embedder,
    cfg: RankerTrainConfig,
    dim_out: int = DEFAULT_DIM_OUT,
) -> DotRankerParams:
    """Train a projection on (context, positive_response) pairs.

    Shuffles pairs each epoch with a seeded RNG; trailing partial batches
    smaller than 2 are dropped.
    """
    if len(pairs) < cfg.batch_size:
        raise TooFewPairsError(
            f"need at least {cfg.batch_size} pairs, got {len(pairs)}"
        )
    ctx_all = np.stack([embedder.embed(c) for c, _ in pairs])
    pos_all = np.stack([embedder.embed(p) for _, p in pairs])
    rng = np.random.default_rng(cfg.seed)
    w = init_ranker_params(embedder.dim, dim_out, seed=cfg.seed).w.copy()
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(pairs), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if len(batch) < 2:
                break
            _, grad = in_batch_loss_and_grad(w, ctx_all[batch], pos_all[batch])
            w -= cfg.learning_rate * grad
    return DotRankerParams(w=w)


class Ranker(Protocol):
    """Anything that can order a candidate pool against a context."""

    def score(self, context_text: str, candidates: Sequence[Candidate]) -> RankerScores:
        ...


@dataclass(frozen=True)
class DotRanker:
    params: DotRankerParams
    embedder: Embedder

    def score(self, context_text: str, candidates: Sequence[Candidate]) -> RankerScores:
        return score_candidates(context_text, candidates, self.params, self.embedder)


def save_ranker(params: DotRankerParams, path: str) -> None:
    payload = {
        "format": "convrisk-ranker",
        "version": 1,
        "dim_in": params.dim_in,
        "dim_out": params.dim_out,
        "w": params.w.tolist(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True)
        handle.write("\n")


def load_ranker(path: str) -> DotRankerParams:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != "convrisk-ranker" or payload.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 ranker checkpoint")
    w = np.asarray(payload["w"], dtype=np.float64)
    if w.shape != (payload["dim_out"], payload["dim_in"]):
        raise ValueError(f"{path}: header shape does not match matrix")
    return DotRankerParams(w=w)


class BridgeClient:
    """Client side of the external-scorer wire protocol.

    The scorer is a subprocess exchanging one JSON object per line over
    stdin/stdout:

        -> {"id": u64, "op": "hello"}
        <- {"id": u64, "name": string, "embed_dim": u32|null}
        -> {"id": u64, "op": "score", "context": string, "candidates": [string,...]}
        <- {"id": u64, "scores": [f64,...]}

    One handle serves one request at a time; responses must echo the
    request id. A handle is unusable after close().
    """

    def __init__(self, command: Sequence[str], timeout: float = 10.0):
        self._timeout = timeout
        self._next_id = 0
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise BridgeDownError(f"cannot spawn {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._drain, daemon=True)
        self._reader.start()
        reply = self._request({"op": "hello"})
        name = reply.get("name")
        if not isinstance(name, str):
            raise BridgeProtocolError("hello reply missing scorer name")
        self.name = name
        self.embed_dim = reply.get("embed_dim")

    def _drain(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def _request(self, body: dict) -> dict:
        with self._lock:
            if self._proc.poll() is not None:
                raise BridgeDownError(
                    f"scorer process exited with code {self._proc.returncode}"
                )
            request_id = self._next_id
            self._next_id += 1
            message = dict(body, id=request_id)
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write(json.dumps(message) + "\n")
                self._proc.stdin.flush()
            except (OSError, ValueError) as exc:
                raise BridgeDownError(f"write to scorer failed: {exc}") from exc
            try:
                line = self._lines.get(timeout=self._timeout)
            except queue.Empty:
                raise BridgeTimeoutError(
                    f"no reply within {self._timeout}s for request {request_id}"
                ) from None
            if line is None:
                raise BridgeDownError("scorer closed its output stream")
            try:
                reply = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BridgeProtocolError(f"unparseable reply: {line!r}") from exc
            if not isinstance(reply, dict):
                raise BridgeProtocolError(f"reply is not an object: {line!r}")
            if reply.get("id") != request_id:
                raise BridgeProtocolError(
                    f"reply id {reply.get('id')!r} does not echo request {request_id}"
                )
            if "error" in reply:
                raise BridgeProtocolError(f"scorer error: {reply['error']}")
            return reply

    def score(self, context_text: str, candidate_texts: Sequence[str]) -> list[float]:
        reply = self._request({
            "op": "score",
            "context": context_text,
            "candidates": list(candidate_texts),
        })
        scores = reply.get("scores")
        if not isinstance(scores, list) or len(scores) != len(candidate_texts):
            got = len(scores) if isinstance(scores, list) else "none"
            raise BridgeProtocolError(
                f"expected {len(candidate_texts)} scores, got {got}"
            )
        if not all(isinstance(s, (int, float)) for s in scores):
            raise BridgeProtocolError("scores must be numbers")
        return [float(s) for s in scores]

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=self._timeout)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def external_score(
    context_text: str,
    candidates: Sequence[Candidate],
    bridge: BridgeClient,
) -> RankerScores:
    """Score a pool through an external scorer; ranking computed locally."""
    if not candidates:
        raise EmptyRankingError("no candidates to score")
    raw = bridge.score(context_text, [c.text for c in candidates])
    return rank_candidates([c.candidate_id for c in candidates], raw)


@dataclass(frozen=True)
class ExternalRanker:
    bridge: BridgeClient

    def score(self, context_text: str, candidates: Sequence[Candidate]) -> RankerScores:
        return external_score(context_text, candidates, self.bridge)
