"""Ranking, projection training, checkpoints, and the external scorer bridge."""

from __future__ import annotations

import math
import sys

import numpy as np
import pytest

from convrisk.corpus import Candidate
from convrisk.encoding import Embedder, IdfTable, fit_embedder
from convrisk.errors import (
    BridgeDownError,
    BridgeProtocolError,
    BridgeTimeoutError,
    DimensionMismatchError,
    EmptyRankingError,
    TooFewPairsError,
    UnknownCandidateIdError,
)
from convrisk.ranker import (
    BridgeClient,
    DotRanker,
    DotRankerParams,
    ExternalRanker,
    RankerTrainConfig,
    external_score,
    in_batch_loss_and_grad,
    init_ranker_params,
    load_ranker,
    rank_candidates,
    reciprocal_rank,
    save_ranker,
    score_candidates,
    train_dot_ranker,
)

from oracles import central_difference, cosine_ref, embed_ref, max_relative_error


class TestRankCandidates:
    def test_orders_by_score_descending(self):
        out = rank_candidates(["a", "b", "c"], [0.1, 0.9, 0.5])
        assert out.ranking == (1, 2, 0)

    def test_ties_break_by_ascending_id(self):
        out = rank_candidates(["z", "a", "m"], [1.0, 1.0, 1.0])
        assert out.ranking == (1, 2, 0)

    def test_scores_preserved_in_candidate_order(self):
        out = rank_candidates(["a", "b"], [0.25, -0.5])
        assert out.scores == (("a", 0.25), ("b", -0.5))

    def test_empty_pool_rejected(self):
        with pytest.raises(EmptyRankingError):
            rank_candidates([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            rank_candidates(["a"], [0.1, 0.2])


class TestScoreCandidates:
    def _embedder(self, texts: list[str], dim: int = 32) -> Embedder:
        return fit_embedder(texts, dim=dim)

    def test_identity_projection_matches_cosine_oracle(self):
        # W = I makes the score the dot of L2-normalized embeddings, i.e.
        # the cosine the oracle computes independently.
        docs = [
            "printer does not print",
            "try reinstalling the driver",
            "reset your password in settings",
            "the driver from the vendor site",
        ]
        embedder = self._embedder(docs, dim=32)
        params = DotRankerParams(w=np.eye(32))
        context = "printer driver problems"
        cands = [Candidate(f"c{i}", t, False) for i, t in enumerate(docs)]
        out = score_candidates(context, cands, params, embedder)

        expected = [
            cosine_ref(embed_ref(context, docs, 32), embed_ref(t, docs, 32))
            for t in docs
        ]
        got = [s for _, s in out.scores]
        assert np.allclose(got, expected, atol=1e-12)

    def test_permutation_equivariant(self):
        docs = ["alpha beta", "gamma delta", "alpha gamma", "beta delta"]
        embedder = self._embedder(docs)
        params = init_ranker_params(embedder.dim, 8, seed=3)
        cands = [Candidate(f"c{i}", t, False) for i, t in enumerate(docs)]
        base = score_candidates("alpha", cands, params, embedder)
        perm = [cands[2], cands[0], cands[3], cands[1]]
        swapped = score_candidates("alpha", perm, params, embedder)
        ranked_ids = lambda rs: [rs.scores[i][0] for i in rs.ranking]
        assert ranked_ids(base) == ranked_ids(swapped)

    def test_singleton_pool(self):
        embedder = self._embedder(["only text"])
        params = init_ranker_params(embedder.dim, 8, seed=0)
        out = score_candidates("q", [Candidate("c0", "only text", True)], params, embedder)
        assert out.ranking == (0,)

    def test_dimension_mismatch(self):
        embedder = self._embedder(["text"], dim=32)
        params = init_ranker_params(16, 8, seed=0)
        with pytest.raises(DimensionMismatchError):
            score_candidates("q", [Candidate("c0", "text", True)], params, embedder)

    def test_empty_candidates(self):
        embedder = self._embedder(["text"])
        params = init_ranker_params(embedder.dim, 8, seed=0)
        with pytest.raises(EmptyRankingError):
            score_candidates("q", [], params, embedder)


class TestReciprocalRank:
    def _ranked(self, n: int) -> "rank_candidates":
        ids = [f"c{i:02d}" for i in range(n)]
        return rank_candidates(ids, [float(n - i) for i in range(n)])

    def test_rank_one(self):
        assert reciprocal_rank(self._ranked(3), ["c00"]) == 1.0

    def test_rank_two(self):
        assert reciprocal_rank(self._ranked(3), ["c01"]) == 0.5

    def test_beyond_cutoff_is_zero(self):
        assert reciprocal_rank(self._ranked(11), ["c10"]) == 0.0

    def test_at_cutoff_counts(self):
        assert reciprocal_rank(self._ranked(11), ["c09"]) == pytest.approx(0.1)

    def test_best_of_multiple_positives(self):
        assert reciprocal_rank(self._ranked(5), ["c03", "c01"]) == 0.5

    def test_unknown_positive_rejected(self):
        with pytest.raises(UnknownCandidateIdError):
            reciprocal_rank(self._ranked(3), ["nope"])

    def test_empty_positives_rejected(self):
        with pytest.raises(ValueError):
            reciprocal_rank(self._ranked(3), [])

    def test_value_set(self):
        allowed = {0.0} | {1.0 / r for r in range(1, 11)}
        for n in range(1, 15):
            for pos in range(n):
                rr = reciprocal_rank(self._ranked(n), [f"c{pos:02d}"])
                assert rr in allowed


class TestInBatchLoss:
    def test_equal_logits_is_log_k(self):
        # All rows identical makes every score equal, so the softmax is
        # uniform and the loss is exactly ln K.
        rng = np.random.default_rng(0)
        w = rng.normal(size=(4, 9))
        ctx = np.tile(rng.normal(size=9), (16, 1))
        pos = np.tile(rng.normal(size=9), (16, 1))
        loss, _ = in_batch_loss_and_grad(w, ctx, pos)
        assert loss == pytest.approx(math.log(16), abs=1e-12)

    def test_gradient_matches_central_difference(self):
        rng = np.random.default_rng(7)
        w = rng.normal(scale=0.5, size=(3, 7))
        ctx = rng.normal(size=(5, 7))
        pos = rng.normal(size=(5, 7))
        _, analytic = in_batch_loss_and_grad(w, ctx, pos)
        numeric = central_difference(
            lambda: in_batch_loss_and_grad(w, ctx, pos)[0], w
        )
        assert max_relative_error(analytic, numeric) < 1e-6

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(4, 6))
        loss, _ = in_batch_loss_and_grad(w, rng.normal(size=(8, 6)), rng.normal(size=(8, 6)))
        assert loss >= 0.0


class TestTrainDotRanker:
    def _keyword_pairs(self, lo: int, hi: int) -> list[tuple[str, str]]:
        return [(f"please w{i} now", f"answer w{i} done") for i in range(lo, hi)]

    def test_too_few_pairs(self):
        embedder = fit_embedder(["a b"], dim=16)
        with pytest.raises(TooFewPairsError):
            train_dot_ranker([("a", "b")], embedder, RankerTrainConfig(batch_size=4))

    def test_deterministic(self):
        pairs = self._keyword_pairs(0, 20)
        embedder = fit_embedder([t for p in pairs for t in p], dim=64)
        cfg = RankerTrainConfig(batch_size=8, epochs=2, seed=5)
        a = train_dot_ranker(pairs, embedder, cfg, dim_out=16)
        b = train_dot_ranker(pairs, embedder, cfg, dim_out=16)
        assert np.array_equal(a.w, b.w)

    def test_training_moves_weights(self):
        pairs = self._keyword_pairs(0, 16)
        embedder = fit_embedder([t for p in pairs for t in p], dim=64)
        cfg = RankerTrainConfig(batch_size=8, epochs=1, seed=5)
        trained = train_dot_ranker(pairs, embedder, cfg, dim_out=16)
        assert not np.array_equal(trained.w, init_ranker_params(64, 16, seed=5).w)

    def test_separable_pairs_beat_chance_held_out(self):
        train_pairs = self._keyword_pairs(0, 32)
        held = [(f"urgent w{i} help", f"fixed w{i} ok") for i in range(16)]
        texts = [t for p in train_pairs for t in p]
        embedder = fit_embedder(texts, dim=128)
        cfg = RankerTrainConfig(batch_size=16, epochs=20, learning_rate=0.5, seed=1)
        params = train_dot_ranker(train_pairs, embedder, cfg, dim_out=32)

        hits = 0
        pos_cands = [Candidate(f"p{i}", p, False) for i, (_, p) in enumerate(held)]
        for i, (ctx, _) in enumerate(held):
            out = score_candidates(ctx, pos_cands, params, embedder)
            hits += out.scores[out.ranking[0]][0] == f"p{i}"
        assert hits / len(held) > 1.0 / 16

    def test_batch_size_floor(self):
        with pytest.raises(ValueError):
            RankerTrainConfig(batch_size=1)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = init_ranker_params(16, 8, seed=9)
        path = str(tmp_path / "ranker.json")
        save_ranker(params, path)
        again = load_ranker(path)
        assert np.array_equal(again.w, params.w)

    def test_rejects_other_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something-else", "version": 1}')
        with pytest.raises(ValueError):
            load_ranker(str(path))

    def test_rejects_shape_mismatch(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            '{"format": "convrisk-ranker", "version": 1,'
            ' "dim_in": 3, "dim_out": 2, "w": [[1.0, 2.0]]}'
        )
        with pytest.raises(ValueError):
            load_ranker(str(path))


# ---------------------------------------------------------------------------
# external scorer bridge

_STUB = r"""
import json, sys, time

mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
if mode == "dead":
    sys.exit(3)

for line in sys.stdin:
    req = json.loads(line)
    rid = req["id"]
    if req["op"] == "hello":
        print(json.dumps({"id": rid, "name": "stub", "embed_dim": None}), flush=True)
        continue
    if mode == "slow":
        time.sleep(3)
    if mode == "badid":
        print(json.dumps({"id": rid + 999, "scores": []}), flush=True)
    elif mode == "arity":
        print(json.dumps({"id": rid, "scores": [0.0]}), flush=True)
    elif mode == "garbage":
        print("definitely not json", flush=True)
    elif mode == "error":
        print(json.dumps({"id": rid, "error": "boom"}), flush=True)
    else:
        scores = []
        ctx = set(req["context"].split())
        for cand in req["candidates"]:
            toks = set(cand.split())
            union = ctx | toks
            scores.append(len(ctx & toks) / len(union) if union else 0.0)
        print(json.dumps({"id": rid, "scores": scores}), flush=True)
"""


@pytest.fixture
def stub_command(tmp_path):
    script = tmp_path / "stub_scorer.py"
    script.write_text(_STUB)

    def command(mode: str = "ok") -> list[str]:
        return [sys.executable, str(script), mode]

    return command


class TestBridgeClient:
    def test_handshake(self, stub_command):
        with BridgeClient(stub_command()) as bridge:
            assert bridge.name == "stub"
            assert bridge.embed_dim is None

    def test_score_values(self, stub_command):
        with BridgeClient(stub_command()) as bridge:
            scores = bridge.score("a b", ["b c", "a b"])
        assert scores == pytest.approx([1.0 / 3.0, 1.0])

    def test_external_score_ranks(self, stub_command):
        cands = [
            Candidate("c0", "b c", False),
            Candidate("c1", "a b", True),
        ]
        with BridgeClient(stub_command()) as bridge:
            out = external_score("a b", cands, bridge)
        assert out.ranking == (1, 0)

    def test_external_ranker_protocol(self, stub_command):
        cands = [Candidate("c0", "x", False), Candidate("c1", "a b", True)]
        with BridgeClient(stub_command()) as bridge:
            ranker = ExternalRanker(bridge)
            assert ranker.score("a b", cands).ranking == (1, 0)

    def test_empty_pool_never_reaches_bridge(self, stub_command):
        with BridgeClient(stub_command()) as bridge:
            with pytest.raises(EmptyRankingError):
                external_score("a", [], bridge)

    def test_dead_process(self, stub_command):
        with pytest.raises(BridgeDownError):
            BridgeClient(stub_command("dead"))

    def test_missing_program(self):
        with pytest.raises(BridgeDownError):
            BridgeClient(["/nonexistent/scorer-binary"])

    def test_wrong_arity(self, stub_command):
        with BridgeClient(stub_command("arity")) as bridge:
            with pytest.raises(BridgeProtocolError):
                bridge.score("a", ["x", "y"])

    def test_id_mismatch(self, stub_command):
        with BridgeClient(stub_command("badid")) as bridge:
            with pytest.raises(BridgeProtocolError):
                bridge.score("a", ["x"])

    def test_error_reply(self, stub_command):
        with BridgeClient(stub_command("error")) as bridge:
            with pytest.raises(BridgeProtocolError):
                bridge.score("a", ["x"])

    def test_unparseable_reply(self, stub_command):
        with BridgeClient(stub_command("garbage")) as bridge:
            with pytest.raises(BridgeProtocolError):
                bridge.score("a", ["x"])

    def test_timeout(self, stub_command):
        with BridgeClient(stub_command("slow"), timeout=0.4) as bridge:
            with pytest.raises(BridgeTimeoutError):
                bridge.score("a", ["x"])


def test_dot_ranker_protocol_instance():
    embedder = fit_embedder(["shared words here", "other text"], dim=32)
    params = init_ranker_params(32, 8, seed=0)
    ranker = DotRanker(params, embedder)
    cands = [Candidate("c0", "shared words here", True)]
    assert ranker.score("shared words", cands).ranking == (0,)
