"""Command line entry points.

Subcommands:
    preprocess    normalize and filter a raw conversation dump
    train-ranker  fit the embedder and both retrieval projections
    train-policy  train the ask-or-answer value network
    simulate      cross-validated evaluation with logs, summary, and report
    report        merge summaries from several runs into one report

Configuration comes from a JSON file plus flag overrides; the seed also
honors the CONVRISK_SEED environment variable (flag > env > file >
default). Every training or simulation run writes a manifest.json with the
fully resolved configuration, and feeding a manifest back through --config
reproduces the run byte for byte.

Exit codes: 0 success, 1 domain error (bad config values, malformed
corpus, bridge failures), 2 usage error (unknown flags or subcommands).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .corpus import (
    CandidatePool,
    Conversation,
    Corpus,
    PoolConfig,
    build_pools,
    drop_reason,
    filter_corpus,
    normalize_conversation,
    parse_corpus,
    split_folds,
    write_corpus,
)
from .encoding import (
    DEFAULT_DIM,
    MIN_DIM,
    Embedder,
    fit_embedder,
    save_embedder,
)
from .errors import ConfigError, ConvriskError, EmptyConversationError
from .policy import (
    Agent,
    CtxPredAgent,
    CtxPredTrainConfig,
    DqnAgent,
    FeatureMask,
    FixedAskAgent,
    OracleAgent,
    StateLayout,
    save_dqn,
    train_ctxpred,
)
from .ranker import (
    DEFAULT_DIM_OUT,
    BridgeClient,
    DotRanker,
    ExternalRanker,
    RankerTrainConfig,
    save_ranker,
    train_dot_ranker,
)
from .rl import RLConfig, train_policy
from .simeval import (
    SEP,
    EpisodeResult,
    LabeledSummary,
    Rankers,
    compute_metrics,
    episode_record,
    run_episode,
    write_episode_log,
    write_report,
)
from .usersim import UserProfile

ENV_SEED = "CONVRISK_SEED"

POLICIES = ("rcsq", "rcsq-s", "rcsq-t", "q0a", "q1a", "q2a", "ctxpred", "oracle")
_POLICY_MASKS = {
    "rcsq": FeatureMask.FULL,
    "rcsq-s": FeatureMask.TEXT_ONLY,
    "rcsq-t": FeatureMask.SCORE_ONLY,
}


def derive_seed(seed: int, label: str) -> int:
    """Stable sub-seed for one component of a run (hash, not Python hash)."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class ProfileSpec:
    """One simulated-user setting; rho None means unbounded patience."""
    rho: int | None
    tau: int


@dataclass(frozen=True)
class RunConfig:
    corpus: str | None = None
    output_dir: str = "runs/out"
    policy: str = "rcsq"
    profiles: tuple[ProfileSpec, ...] = (ProfileSpec(rho=None, tau=1),)
    pool_size: int = 100
    dim: int = DEFAULT_DIM
    dim_out: int = DEFAULT_DIM_OUT
    k_q: int = 1
    score_slots: int = 3
    asks_consume_patience: bool = False
    ranker_command: tuple[str, ...] | None = None
    rl: RLConfig = RLConfig()
    ranker_train: RankerTrainConfig = RankerTrainConfig()
    seed: int = 0
    folds: int = 5
    workers: int = 1


_TOP_KEYS = {
    "corpus", "output_dir", "policy", "profiles", "pool_size", "dim",
    "dim_out", "k_q", "score_slots", "asks_consume_patience",
    "ranker_command", "rl", "ranker_train", "seed", "folds", "workers",
}
_RL_KEYS = {
    "r_cq", "p_cq", "sigma", "learning_rate", "l2_lambda",
    "replay_capacity", "batch_size", "warmup", "ask_oversample",
    "epsilon_start", "epsilon_decay", "epsilon_min", "episodes",
}
_RANKER_TRAIN_KEYS = {"batch_size", "epochs", "learning_rate"}
_PROFILE_KEYS = {"rho", "tau"}


def _reject_unknown(data: Mapping, allowed: set[str], prefix: str) -> None:
    for key in sorted(set(data) - allowed):
        full = f"{prefix}.{key}" if prefix else str(key)
        raise ConfigError(full, "unknown key")


def _as_int(value: object, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return value


def _as_number(value: object, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    return float(value)


def _as_str(value: object, key: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(key, f"expected a string, got {value!r}")
    return value


def _as_bool(value: object, key: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(key, f"expected a boolean, got {value!r}")
    return value


def _parse_rho(value: object, key: str) -> int | None:
    if value is None or value == "inf":
        return None
    return _as_int(value, key)


def _parse_profiles(raw: object) -> tuple[ProfileSpec, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("profiles", "expected a nonempty list of objects")
    specs: list[ProfileSpec] = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"profiles[{i}]", "expected an object")
        _reject_unknown(item, _PROFILE_KEYS, f"profiles[{i}]")
        if "tau" not in item:
            raise ConfigError(f"profiles[{i}].tau", "missing")
        specs.append(ProfileSpec(
            rho=_parse_rho(item.get("rho"), f"profiles[{i}].rho"),
            tau=_as_int(item["tau"], f"profiles[{i}].tau"),
        ))
    return tuple(specs)


def config_from_dict(data: Mapping) -> RunConfig:
    """Build a RunConfig from parsed JSON, rejecting unknown keys."""
    if not isinstance(data, Mapping):
        raise ConfigError("", "top level must be an object")
    _reject_unknown(data, _TOP_KEYS, "")
    base = RunConfig()

    rl_data = data.get("rl", {})
    if not isinstance(rl_data, Mapping):
        raise ConfigError("rl", "expected an object")
    _reject_unknown(rl_data, _RL_KEYS, "rl")
    rl_kwargs = {}
    for key in _RL_KEYS:
        if key in rl_data:
            caster = _as_int if key in {
                "replay_capacity", "batch_size", "warmup",
                "ask_oversample", "episodes",
            } else _as_number
            rl_kwargs[key] = caster(rl_data[key], f"rl.{key}")
    try:
        rl = replace(base.rl, **rl_kwargs)
    except ValueError as exc:
        raise ConfigError("rl", str(exc)) from exc

    rt_data = data.get("ranker_train", {})
    if not isinstance(rt_data, Mapping):
        raise ConfigError("ranker_train", "expected an object")
    _reject_unknown(rt_data, _RANKER_TRAIN_KEYS, "ranker_train")
    rt_kwargs = {}
    if "batch_size" in rt_data:
        rt_kwargs["batch_size"] = _as_int(rt_data["batch_size"], "ranker_train.batch_size")
    if "epochs" in rt_data:
        rt_kwargs["epochs"] = _as_int(rt_data["epochs"], "ranker_train.epochs")
    if "learning_rate" in rt_data:
        rt_kwargs["learning_rate"] = _as_number(
            rt_data["learning_rate"], "ranker_train.learning_rate"
        )
    try:
        ranker_train = replace(base.ranker_train, **rt_kwargs)
    except ValueError as exc:
        raise ConfigError("ranker_train", str(exc)) from exc

    ranker_command: tuple[str, ...] | None = base.ranker_command
    if "ranker_command" in data and data["ranker_command"] is not None:
        raw_cmd = data["ranker_command"]
        if not isinstance(raw_cmd, list) or not raw_cmd:
            raise ConfigError("ranker_command", "expected a nonempty list of strings")
        ranker_command = tuple(
            _as_str(part, f"ranker_command[{i}]") for i, part in enumerate(raw_cmd)
        )

    cfg = RunConfig(
        corpus=(
            _as_str(data["corpus"], "corpus")
            if data.get("corpus") is not None else base.corpus
        ),
        output_dir=(
            _as_str(data["output_dir"], "output_dir")
            if "output_dir" in data else base.output_dir
        ),
        policy=_as_str(data.get("policy", base.policy), "policy"),
        profiles=(
            _parse_profiles(data["profiles"])
            if "profiles" in data else base.profiles
        ),
        pool_size=_as_int(data.get("pool_size", base.pool_size), "pool_size"),
        dim=_as_int(data.get("dim", base.dim), "dim"),
        dim_out=_as_int(data.get("dim_out", base.dim_out), "dim_out"),
        k_q=_as_int(data.get("k_q", base.k_q), "k_q"),
        score_slots=_as_int(data.get("score_slots", base.score_slots), "score_slots"),
        asks_consume_patience=_as_bool(
            data.get("asks_consume_patience", base.asks_consume_patience),
            "asks_consume_patience",
        ),
        ranker_command=ranker_command,
        rl=rl,
        ranker_train=ranker_train,
        seed=_as_int(data.get("seed", base.seed), "seed"),
        folds=_as_int(data.get("folds", base.folds), "folds"),
        workers=_as_int(data.get("workers", base.workers), "workers"),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.policy not in POLICIES:
        raise ConfigError("policy", f"must be one of {', '.join(POLICIES)}")
    if cfg.pool_size < 2:
        raise ConfigError("pool_size", "must be >= 2")
    if cfg.dim < MIN_DIM:
        raise ConfigError("dim", f"must be >= {MIN_DIM}")
    if cfg.dim_out < 1:
        raise ConfigError("dim_out", "must be >= 1")
    if cfg.k_q < 1:
        raise ConfigError("k_q", "must be >= 1")
    if cfg.score_slots < 1:
        raise ConfigError("score_slots", "must be >= 1")
    if cfg.folds < 2:
        raise ConfigError("folds", "must be >= 2")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    if not cfg.profiles:
        raise ConfigError("profiles", "must be nonempty")
    for i, prof in enumerate(cfg.profiles):
        if prof.tau < 0:
            raise ConfigError(f"profiles[{i}].tau", "must be >= 0")
        if prof.rho is not None and prof.rho < 1:
            raise ConfigError(f"profiles[{i}].rho", "must be >= 1 or 'inf'")
    rl = cfg.rl
    if rl.episodes < 0:
        raise ConfigError("rl.episodes", "must be >= 0")
    if rl.learning_rate <= 0:
        raise ConfigError("rl.learning_rate", "must be > 0")
    if rl.l2_lambda < 0:
        raise ConfigError("rl.l2_lambda", "must be >= 0")
    if rl.replay_capacity < 1:
        raise ConfigError("rl.replay_capacity", "must be >= 1")
    if rl.batch_size < 1:
        raise ConfigError("rl.batch_size", "must be >= 1")
    if rl.warmup < 1:
        raise ConfigError("rl.warmup", "must be >= 1")
    if rl.ask_oversample < 1:
        raise ConfigError("rl.ask_oversample", "must be >= 1")
    if not 0.0 <= rl.epsilon_min <= rl.epsilon_start <= 1.0:
        raise ConfigError("rl.epsilon_min", "need 0 <= epsilon_min <= epsilon_start <= 1")
    if not 0.0 < rl.epsilon_decay <= 1.0:
        raise ConfigError("rl.epsilon_decay", "must lie in (0, 1]")
    if cfg.ranker_train.epochs < 0:
        raise ConfigError("ranker_train.epochs", "must be >= 0")
    if cfg.ranker_train.learning_rate <= 0:
        raise ConfigError("ranker_train.learning_rate", "must be > 0")


def config_to_dict(cfg: RunConfig) -> dict:
    """Fully resolved, JSON-ready form of a RunConfig (manifest payload)."""
    return {
        "corpus": cfg.corpus,
        "output_dir": cfg.output_dir,
        "policy": cfg.policy,
        "profiles": [
            {"rho": "inf" if p.rho is None else p.rho, "tau": p.tau}
            for p in cfg.profiles
        ],
        "pool_size": cfg.pool_size,
        "dim": cfg.dim,
        "dim_out": cfg.dim_out,
        "k_q": cfg.k_q,
        "score_slots": cfg.score_slots,
        "asks_consume_patience": cfg.asks_consume_patience,
        "ranker_command": list(cfg.ranker_command) if cfg.ranker_command else None,
        "rl": {
            "r_cq": cfg.rl.r_cq,
            "p_cq": cfg.rl.p_cq,
            "sigma": cfg.rl.sigma,
            "learning_rate": cfg.rl.learning_rate,
            "l2_lambda": cfg.rl.l2_lambda,
            "replay_capacity": cfg.rl.replay_capacity,
            "batch_size": cfg.rl.batch_size,
            "warmup": cfg.rl.warmup,
            "ask_oversample": cfg.rl.ask_oversample,
            "epsilon_start": cfg.rl.epsilon_start,
            "epsilon_decay": cfg.rl.epsilon_decay,
            "epsilon_min": cfg.rl.epsilon_min,
            "episodes": cfg.rl.episodes,
        },
        "ranker_train": {
            "batch_size": cfg.ranker_train.batch_size,
            "epochs": cfg.ranker_train.epochs,
            "learning_rate": cfg.ranker_train.learning_rate,
        },
        "seed": cfg.seed,
        "folds": cfg.folds,
        "workers": cfg.workers,
    }


def load_config(path: str) -> RunConfig:
    """Load a config file or a manifest written by an earlier run."""
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"{path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and "command" in data and "config" in data:
        data = data["config"]
    return config_from_dict(data)


def _write_manifest(cfg: RunConfig, command: str) -> None:
    os.makedirs(cfg.output_dir, exist_ok=True)
    payload = {"command": command, "config": config_to_dict(cfg)}
    path = os.path.join(cfg.output_dir, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


# ---------------------------------------------------------------------------
# corpus and model assembly


def _load_clean_corpus(cfg: RunConfig) -> Corpus:
    if cfg.corpus is None:
        raise ConfigError("corpus", "no corpus path given")
    if not os.path.isfile(cfg.corpus):
        raise ConfigError("corpus", f"file not found: {cfg.corpus}")
    raw = parse_corpus(cfg.corpus)
    normalized = []
    for conv in raw:
        try:
            normalized.append(normalize_conversation(conv))
        except EmptyConversationError:
            continue
    return filter_corpus(Corpus(tuple(normalized)))


def _conversation_text(conv: Conversation) -> str:
    return " ".join(turn.text for turn in conv.turns)


def _ranker_pairs(
    convs: Sequence[Conversation],
) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """(context, positive) pairs for the answer and question rankers.

    Question pairs supervise the next ground-truth question given each
    context prefix; answer pairs supervise the final answer at every
    prefix, mirroring how contexts grow during an episode.
    """
    answer_pairs: list[tuple[str, str]] = []
    question_pairs: list[tuple[str, str]] = []
    for conv in convs:
        answer_text = conv.turns[conv.answer_index].text
        parts = [conv.query]
        answer_pairs.append((SEP.join(parts), answer_text))
        for qi in conv.question_indices:
            question_text = conv.turns[qi].text
            question_pairs.append((SEP.join(parts), question_text))
            parts.extend([question_text, conv.feedback_text(qi)])
            answer_pairs.append((SEP.join(parts), answer_text))
    return answer_pairs, question_pairs


def _train_rankers(
    convs: Sequence[Conversation],
    embedder: Embedder,
    cfg: RunConfig,
    label: str,
) -> tuple[DotRanker, DotRanker]:
    answer_pairs, question_pairs = _ranker_pairs(convs)
    answers = train_dot_ranker(
        answer_pairs,
        embedder,
        replace(cfg.ranker_train, seed=derive_seed(cfg.seed, f"ranker-answers:{label}")),
        dim_out=cfg.dim_out,
    )
    questions = train_dot_ranker(
        question_pairs,
        embedder,
        replace(cfg.ranker_train, seed=derive_seed(cfg.seed, f"ranker-questions:{label}")),
        dim_out=cfg.dim_out,
    )
    return DotRanker(answers, embedder), DotRanker(questions, embedder)


def _ctxpred_data(
    convs: Sequence[Conversation], embedder: Embedder
) -> tuple[np.ndarray, list[bool]]:
    vecs: list[np.ndarray] = []
    labels: list[bool] = []
    for conv in convs:
        parts: list[str] = []
        for qi in conv.question_indices:
            vecs.append(embedder.embed(SEP.join(parts)))
            labels.append(True)
            parts.extend([conv.turns[qi].text, conv.feedback_text(qi)])
        vecs.append(embedder.embed(SEP.join(parts)))
        labels.append(False)
    return np.stack(vecs), labels


def _layout_for(cfg: RunConfig) -> StateLayout:
    mask = _POLICY_MASKS.get(cfg.policy, FeatureMask.FULL)
    return StateLayout(
        dim=cfg.dim, k_q=cfg.k_q, score_slots=cfg.score_slots, mask=mask
    )


def _profile_for(spec: ProfileSpec, cfg: RunConfig) -> UserProfile:
    return UserProfile(
        tolerance=spec.tau,
        patience=spec.rho,
        asks_consume_patience=cfg.asks_consume_patience,
    )


def _make_agent(
    cfg: RunConfig,
    train_convs: Sequence[Conversation],
    pools: Mapping[str, CandidatePool],
    rankers: Rankers,
    profile: UserProfile,
    embedder: Embedder,
    layout: StateLayout,
    label: str,
) -> Agent:
    if cfg.policy in _POLICY_MASKS:
        params = train_policy(
            train_convs, pools, rankers, profile, cfg.rl,
            derive_seed(cfg.seed, f"policy:{label}"),
            embedder=embedder, layout=layout,
        )
        return DqnAgent(params)
    if cfg.policy in ("q0a", "q1a", "q2a"):
        return FixedAskAgent(ask_budget=int(cfg.policy[1]))
    if cfg.policy == "ctxpred":
        vecs, labels = _ctxpred_data(train_convs, embedder)
        return CtxPredAgent(train_ctxpred(vecs, labels, CtxPredTrainConfig()))
    if cfg.policy == "oracle":
        return OracleAgent()
    raise ConfigError("policy", f"unknown policy {cfg.policy!r}")


def _eval_episodes(
    held: Sequence[Conversation],
    pools: Mapping[str, CandidatePool],
    agent: Agent,
    rankers: Rankers,
    profile: UserProfile,
    embedder: Embedder,
    layout: StateLayout,
    workers: int,
) -> list[EpisodeResult]:
    def one(conv: Conversation) -> EpisodeResult:
        return run_episode(
            conv, pools[conv.conversation_id], agent, rankers, profile,
            embedder=embedder, layout=layout,
        )

    if workers <= 1:
        return [one(conv) for conv in held]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, held))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_preprocess(args: argparse.Namespace) -> int:
    raw = parse_corpus(args.input)
    counts = {"empty": 0}
    kept = []
    for conv in raw:
        try:
            conv = normalize_conversation(conv)
        except EmptyConversationError:
            counts["empty"] += 1
            continue
        reason = drop_reason(conv)
        if reason is None:
            kept.append(conv)
        else:
            counts[reason] = counts.get(reason, 0) + 1
    write_corpus(Corpus(tuple(kept)), args.output)
    print(f"kept {len(kept)} of {len(raw)} conversations -> {args.output}")
    for reason in sorted(counts):
        if counts[reason]:
            print(f"dropped {counts[reason]}: {reason}")
    return 0


def _cmd_train_ranker(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    corpus = _load_clean_corpus(cfg)
    convs = list(corpus)
    embedder = fit_embedder((_conversation_text(c) for c in convs), dim=cfg.dim)
    answers, questions = _train_rankers(convs, embedder, cfg, "all")
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_embedder(embedder, os.path.join(cfg.output_dir, "embedder.json"))
    save_ranker(answers.params, os.path.join(cfg.output_dir, "answer_ranker.json"))
    save_ranker(questions.params, os.path.join(cfg.output_dir, "question_ranker.json"))
    _write_manifest(cfg, "train-ranker")
    print(f"trained rankers on {len(convs)} conversations -> {cfg.output_dir}")
    return 0


def _cmd_train_policy(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if cfg.policy not in _POLICY_MASKS:
        raise ConfigError("policy", "train-policy only trains rcsq variants")
    corpus = _load_clean_corpus(cfg)
    convs = list(corpus)
    pools = {
        c.conversation_id: build_pools(corpus, c, PoolConfig(cfg.pool_size, cfg.seed))
        for c in convs
    }
    embedder = fit_embedder((_conversation_text(c) for c in convs), dim=cfg.dim)
    answers, questions = _train_rankers(convs, embedder, cfg, "all")
    rankers = Rankers(answers=answers, questions=questions)
    layout = _layout_for(cfg)
    profile = _profile_for(cfg.profiles[0], cfg)

    os.makedirs(cfg.output_dir, exist_ok=True)
    log_path = os.path.join(cfg.output_dir, "training_log.jsonl")
    with open(log_path, "w", encoding="utf-8", newline="\n") as log:
        params = train_policy(
            convs, pools, rankers, profile, cfg.rl,
            derive_seed(cfg.seed, "policy:all"),
            embedder=embedder, layout=layout,
            log_sink=lambda rec: log.write(json.dumps(rec, sort_keys=True) + "\n"),
        )
    save_embedder(embedder, os.path.join(cfg.output_dir, "embedder.json"))
    save_ranker(answers.params, os.path.join(cfg.output_dir, "answer_ranker.json"))
    save_ranker(questions.params, os.path.join(cfg.output_dir, "question_ranker.json"))
    save_dqn(params, layout, os.path.join(cfg.output_dir, "dqn.json"))
    _write_manifest(cfg, "train-policy")
    print(
        f"trained {cfg.policy} for {cfg.rl.episodes} episodes "
        f"on {len(convs)} conversations -> {cfg.output_dir}"
    )
    return 0


def _summary_rows_json(rows: Sequence[LabeledSummary]) -> list[dict]:
    out = []
    for row in rows:
        out.append({
            "policy": row.policy,
            "rho": "inf" if row.rho is None else row.rho,
            "tau": row.tau,
            "pool_size": row.pool_size,
            "episodes": row.summary.episodes,
            "decisions": row.summary.decisions,
            "recall_at_1": row.summary.recall_at_1,
            "mrr": row.summary.mrr,
            "decision_error_rate": row.summary.decision_error_rate,
            "per_fold": [
                {
                    "fold": f.fold,
                    "episodes": f.episodes,
                    "recall_at_1": f.recall_at_1,
                    "mrr": f.mrr,
                    "decision_error_rate": f.decision_error_rate,
                }
                for f in row.summary.per_fold
            ],
        })
    return out


def _write_summary_json(rows: Sequence[LabeledSummary], out_dir: str) -> None:
    payload = {
        "format": "convrisk-summary",
        "version": 1,
        "rows": _summary_rows_json(rows),
    }
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


def _read_summary_json(path: str) -> list[LabeledSummary]:
    from .simeval import RunSummary

    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != "convrisk-summary":
        raise ConfigError("runs", f"{path} is not a summary file")
    rows = []
    for row in payload["rows"]:
        rows.append(LabeledSummary(
            policy=row["policy"],
            rho=None if row["rho"] == "inf" else int(row["rho"]),
            tau=int(row["tau"]),
            pool_size=int(row["pool_size"]),
            summary=RunSummary(
                recall_at_1=float(row["recall_at_1"]),
                mrr=float(row["mrr"]),
                decision_error_rate=float(row["decision_error_rate"]),
                episodes=int(row["episodes"]),
                decisions=int(row["decisions"]),
            ),
        ))
    return rows


def _simulate(cfg: RunConfig, bridge: BridgeClient | None) -> int:
    corpus = _load_clean_corpus(cfg)
    pools = {
        c.conversation_id: build_pools(corpus, c, PoolConfig(cfg.pool_size, cfg.seed))
        for c in corpus
    }
    folds = split_folds(corpus, cfg.folds, derive_seed(cfg.seed, "folds"))
    layout = _layout_for(cfg)

    fold_assets: list[tuple[list[Conversation], list[Conversation], Embedder, Rankers]] = []
    for f in range(cfg.folds):
        train_convs = [
            corpus.get(cid)
            for g, fold in enumerate(folds) if g != f
            for cid in fold
        ]
        held_convs = [corpus.get(cid) for cid in folds[f]]
        embedder = fit_embedder(
            (_conversation_text(c) for c in train_convs), dim=cfg.dim
        )
        if bridge is not None:
            rankers = Rankers(
                answers=ExternalRanker(bridge), questions=ExternalRanker(bridge)
            )
        else:
            answers, questions = _train_rankers(train_convs, embedder, cfg, str(f))
            rankers = Rankers(answers=answers, questions=questions)
        fold_assets.append((train_convs, held_convs, embedder, rankers))
        print(
            f"fold {f}: {len(train_convs)} train / {len(held_convs)} held-out",
            flush=True,
        )

    workers = cfg.workers
    if bridge is not None and workers > 1:
        print("external ranker is serial; running with workers=1", file=sys.stderr)
        workers = 1

    records: list[dict] = []
    rows: list[LabeledSummary] = []
    for spec in cfg.profiles:
        profile = _profile_for(spec, cfg)
        results: list[EpisodeResult] = []
        fold_ids: list[int] = []
        for f in range(cfg.folds):
            train_convs, held_convs, embedder, rankers = fold_assets[f]
            agent = _make_agent(
                cfg, train_convs, pools, rankers, profile, embedder, layout,
                label=f"{f}:rho={spec.rho}:tau={spec.tau}",
            )
            fold_results = _eval_episodes(
                held_convs, pools, agent, rankers, profile, embedder, layout, workers
            )
            results.extend(fold_results)
            fold_ids.extend([f] * len(fold_results))
            records.extend(
                episode_record(
                    r,
                    policy=cfg.policy,
                    rho="inf" if spec.rho is None else spec.rho,
                    tau=spec.tau,
                    fold=f,
                )
                for r in fold_results
            )
        summary = compute_metrics(results, fold_ids)
        rows.append(LabeledSummary(
            policy=cfg.policy, rho=spec.rho, tau=spec.tau,
            pool_size=cfg.pool_size, summary=summary,
        ))
        print(
            f"{cfg.policy} rho={'inf' if spec.rho is None else spec.rho} "
            f"tau={spec.tau}: recall@1 {summary.recall_at_1:.4f} "
            f"mrr {summary.mrr:.4f} dec.err {summary.decision_error_rate:.4f}",
            flush=True,
        )

    os.makedirs(cfg.output_dir, exist_ok=True)
    write_episode_log(records, os.path.join(cfg.output_dir, "episodes.jsonl"))
    _write_summary_json(rows, cfg.output_dir)
    write_report(rows, cfg.output_dir)
    _write_manifest(cfg, "simulate")
    print(f"wrote episodes.jsonl, summary.json, summary.csv, report.txt, report.png "
          f"-> {cfg.output_dir}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if cfg.ranker_command is not None:
        with BridgeClient(list(cfg.ranker_command)) as bridge:
            return _simulate(cfg, bridge)
    return _simulate(cfg, None)


def _cmd_report(args: argparse.Namespace) -> int:
    rows: list[LabeledSummary] = []
    for run in args.runs:
        path = run if run.endswith(".json") else os.path.join(run, "summary.json")
        rows.extend(_read_summary_json(path))
    out_dir = args.output_dir
    os.makedirs(out_dir, exist_ok=True)
    _write_summary_json(rows, out_dir)
    write_report(rows, out_dir)
    print(f"merged {len(rows)} rows from {len(args.runs)} runs -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _rho_flag(text: str) -> object:
    if text == "inf":
        return "inf"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"rho must be an integer or 'inf', got {text!r}"
        ) from None


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file or an earlier manifest.json")
    sub.add_argument("--corpus", help="conversation corpus (JSONL)")
    sub.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    sub.add_argument("--seed", type=int, help="master seed")


def _add_sim_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--policy", choices=POLICIES, help="decision policy to run")
    sub.add_argument("--tau", type=int, help="user tolerance for irrelevant questions")
    sub.add_argument("--rho", type=_rho_flag, help="user patience (integer or 'inf')")
    sub.add_argument("--episodes", type=int, help="training episodes for rcsq variants")
    sub.add_argument("--pool-size", dest="pool_size", type=int, help="candidates per pool")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convrisk",
        description="risk-aware conversational search simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="normalize and filter a raw corpus")
    p.add_argument("--input", required=True, help="raw conversations (JSONL)")
    p.add_argument("--output", required=True, help="where to write the kept corpus")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train-ranker", help="fit embedder and retrieval projections")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train_ranker)

    p = sub.add_parser("train-policy", help="train the ask-or-answer value network")
    _add_config_flags(p)
    _add_sim_flags(p)
    p.set_defaults(func=_cmd_train_policy)

    p = sub.add_parser("simulate", help="cross-validated policy evaluation")
    _add_config_flags(p)
    _add_sim_flags(p)
    p.add_argument("--folds", type=int, help="cross-validation folds")
    p.add_argument("--workers", type=int, help="parallel episode evaluation threads")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("report", help="merge run summaries into one report")
    p.add_argument("--runs", nargs="+", required=True,
                   help="run directories or summary.json files")
    p.add_argument("--output-dir", dest="output_dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None and getattr(args, "seed", None) is None:
        try:
            cfg = replace(cfg, seed=int(env_seed))
        except ValueError:
            raise ConfigError("seed", f"{ENV_SEED} must be an integer") from None
    overrides = {}
    for key in ("corpus", "output_dir", "seed", "policy", "folds", "workers",
                "pool_size"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = replace(cfg, **overrides)
    episodes = getattr(args, "episodes", None)
    if episodes is not None:
        cfg = replace(cfg, rl=replace(cfg.rl, episodes=episodes))
    tau = getattr(args, "tau", None)
    rho = getattr(args, "rho", None)
    if tau is not None or rho is not None:
        base = cfg.profiles[0]
        cfg = replace(cfg, profiles=(ProfileSpec(
            rho=base.rho if rho is None else (None if rho == "inf" else int(rho)),
            tau=base.tau if tau is None else tau,
        ),))
    validate_config(cfg)
    return cfg


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ConvriskError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
