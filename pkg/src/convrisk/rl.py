"""Q-learning for the ask-or-answer value network.

Targets: an answer is worth its reciprocal rank; an irrelevant ask costs
the fixed penalty; a relevant ask earns the question reward plus the
discounted best future value, bootstrapped from the live network (no
target network) and clamped to [0, 1] so targets stay in the reward range.
Only the taken action's output receives gradient, targets are constants,
and weights (not biases) get L2 decay.

The replay buffer drops transitions whose target would be exactly zero and
inserts ask transitions multiple times, trading bias for coverage of the
rare asking action.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import CandidatePool, Conversation
from .encoding import Embedder
from .errors import BufferTooSmallError, NonFiniteLossError
from .policy import (
    Action,
    AskQuestion,
    DecisionState,
    DqnAgent,
    DqnParams,
    EpsilonGreedy,
    HIDDEN_WIDTH,
    StateLayout,
)
from .simeval import (
    OUTCOME_ANSWER,
    OUTCOME_ASKED_RELEVANT,
    Rankers,
    run_episode,
)
from .usersim import UserProfile


@dataclass(frozen=True)
class RLConfig:
    r_cq: float = 0.11
    p_cq: float = -0.89
    sigma: float = 0.89
    learning_rate: float = 1e-4
    l2_lambda: float = 1e-2
    replay_capacity: int = 10000
    batch_size: int = 32
    warmup: int = 100
    ask_oversample: int = 2
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.05
    episodes: int = 1000

    def __post_init__(self) -> None:
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if not self.r_cq > 0.0 > self.p_cq:
            raise ValueError("need question reward > 0 > question penalty")


@dataclass(frozen=True)
class AnswerReturned:
    answer_rr: float


@dataclass(frozen=True)
class AskedRelevant:
    next_state: DecisionState


@dataclass(frozen=True)
class AskedIrrelevant:
    pass


TransitionOutcome = AnswerReturned | AskedRelevant | AskedIrrelevant


@dataclass(frozen=True)
class Transition:
    state: DecisionState
    action: Action
    outcome: TransitionOutcome
    terminal: bool


def make_transition(state: DecisionState, action: Action,
                    outcome: TransitionOutcome) -> Transition:
    # Only a relevant ask has a future; everything else is terminal for
    # target purposes.
    return Transition(
        state=state,
        action=action,
        outcome=outcome,
        terminal=not isinstance(outcome, AskedRelevant),
    )


def compute_target(t: Transition, dqn: DqnParams, cfg: RLConfig) -> float:
    outcome = t.outcome
    if isinstance(outcome, AnswerReturned):
        return outcome.answer_rr
    if isinstance(outcome, AskedIrrelevant):
        return cfg.p_cq
    hidden = np.maximum(dqn.w1 @ outcome.next_state.vector + dqn.b1, 0.0)
    future = float(np.max(dqn.w2 @ hidden + dqn.b2))
    return cfg.r_cq + cfg.sigma * min(max(future, 0.0), 1.0)


class ReplayBuffer:
    """Fixed-capacity ring; once full, new items overwrite the oldest."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Transition:
        return self._items[index]

    def append(self, item: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item
            self._cursor = (self._cursor + 1) % self.capacity


def store_transition(buf: ReplayBuffer, t: Transition, cfg: RLConfig) -> None:
    """Insert a transition, filtering zero targets and oversampling asks.

    An answer whose reciprocal rank is zero would train toward a zero
    target and is discarded outright; ask transitions go in
    cfg.ask_oversample times.
    """
    if isinstance(t.outcome, AnswerReturned) and t.outcome.answer_rr == 0.0:
        return
    copies = cfg.ask_oversample if isinstance(t.action, AskQuestion) else 1
    for _ in range(copies):
        buf.append(t)


def sample_batch(
    buf: ReplayBuffer,
    batch_size: int,
    rng: random.Random,
    warmup: int,
) -> list[Transition]:
    """Uniform sample with replacement; requires the warmup fill level."""
    if len(buf) < warmup:
        raise BufferTooSmallError(f"buffer has {len(buf)} < warmup {warmup}")
    return [buf[rng.randrange(len(buf))] for _ in range(batch_size)]


def dqn_loss_and_grads(
    params: DqnParams,
    vectors: np.ndarray,
    action_indices: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error through the taken action's output, with gradients.

    vectors is (B, input_dim); action_indices holds 0 for answer, 1 for
    ask; targets are treated as constants.
    """
    batch = vectors.shape[0]
    z = vectors @ params.w1.T + params.b1
    hidden = np.maximum(z, 0.0)
    out = hidden @ params.w2.T + params.b2
    picked = out[np.arange(batch), action_indices]
    residual = picked - targets
    loss = float(np.mean(residual ** 2))
    if not math.isfinite(loss):
        # bail before the gradient math turns inf residuals into nans
        raise NonFiniteLossError(f"loss diverged: {loss}")

    d_out = np.zeros_like(out)
    d_out[np.arange(batch), action_indices] = 2.0 * residual / batch
    grads = {
        "w2": d_out.T @ hidden,
        "b2": d_out.sum(axis=0),
    }
    d_hidden = d_out @ params.w2
    d_z = d_hidden * (z > 0.0)
    grads["w1"] = d_z.T @ vectors
    grads["b1"] = d_z.sum(axis=0)
    return loss, grads


def dqn_update(
    params: DqnParams,
    batch: Sequence[Transition],
    cfg: RLConfig,
) -> tuple[DqnParams, float]:
    """One gradient step on a batch; returns updated params and the loss."""
    if not batch:
        raise ValueError("batch must be nonempty")
    vectors = np.stack([t.state.vector for t in batch])
    action_indices = np.array(
        [1 if isinstance(t.action, AskQuestion) else 0 for t in batch]
    )
    targets = np.array([compute_target(t, params, cfg) for t in batch])
    loss, grads = dqn_loss_and_grads(params, vectors, action_indices, targets)
    lr = cfg.learning_rate
    decay = cfg.l2_lambda
    return DqnParams(
        w1=params.w1 - lr * (grads["w1"] + decay * params.w1),
        b1=params.b1 - lr * grads["b1"],
        w2=params.w2 - lr * (grads["w2"] + decay * params.w2),
        b2=params.b2 - lr * grads["b2"],
    ), loss


def init_params(input_dim: int, seed: int, hidden: int = HIDDEN_WIDTH) -> DqnParams:
    """Uniform init in [-a, a] with a = sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    bound1 = np.sqrt(6.0 / (input_dim + hidden))
    bound2 = np.sqrt(6.0 / (hidden + 2))
    return DqnParams(
        w1=rng.uniform(-bound1, bound1, size=(hidden, input_dim)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-bound2, bound2, size=(2, hidden)),
        b2=np.zeros(2),
    )


def train_policy(
    conversations: Sequence[Conversation],
    pools: Mapping[str, CandidatePool],
    rankers: Rankers,
    profile: UserProfile,
    cfg: RLConfig,
    seed: int,
    *,
    embedder: Embedder,
    layout: StateLayout,
    hidden: int = HIDDEN_WIDTH,
    log_sink: Callable[[dict], None] | None = None,
) -> DqnParams:
    """Train the value network by running episodes against the simulator.

    Conversations are visited in seeded shuffled order, reshuffled per pass.
    Every completed decision stores its transition and, once the buffer has
    warmed up, takes one gradient step. Epsilon decays per episode. Fully
    deterministic for a given seed.
    """
    if not conversations:
        raise ValueError("need at least one training conversation")
    master = random.Random(seed)
    params = init_params(layout.total_dim, seed=master.getrandbits(32), hidden=hidden)
    shuffle_rng = random.Random(master.getrandbits(32))
    explore_rng = random.Random(master.getrandbits(32))
    replay_rng = random.Random(master.getrandbits(32))

    buf = ReplayBuffer(cfg.replay_capacity)
    agent = DqnAgent(params)
    epsilon = cfg.epsilon_start
    queue: list[Conversation] = []
    episode_losses: list[float] = []

    def sink(state: DecisionState, action: Action, kind: str,
             rr: float, next_state: DecisionState | None) -> None:
        if kind == OUTCOME_ANSWER:
            outcome: TransitionOutcome = AnswerReturned(rr)
        elif kind == OUTCOME_ASKED_RELEVANT:
            assert next_state is not None
            outcome = AskedRelevant(next_state)
        else:
            outcome = AskedIrrelevant()
        store_transition(buf, make_transition(state, action, outcome), cfg)
        if len(buf) >= cfg.warmup:
            batch = sample_batch(buf, cfg.batch_size, replay_rng, cfg.warmup)
            agent.params, loss = dqn_update(agent.params, batch, cfg)
            episode_losses.append(loss)

    for episode in range(cfg.episodes):
        if not queue:
            queue = list(conversations)
            shuffle_rng.shuffle(queue)
        conv = queue.pop()
        episode_losses.clear()
        result = run_episode(
            conv,
            pools[conv.conversation_id],
            agent,
            rankers,
            profile,
            EpsilonGreedy(epsilon, explore_rng),
            embedder=embedder,
            layout=layout,
            transition_sink=sink,
        )
        if log_sink is not None:
            log_sink({
                "episode": episode,
                "epsilon": epsilon,
                "decisions": len(result.decisions),
                "outcome": result.terminal.value,
                "rr": result.rr,
                "loss_mean": (
                    sum(episode_losses) / len(episode_losses)
                    if episode_losses else None
                ),
            })
        epsilon = max(cfg.epsilon_min, epsilon * cfg.epsilon_decay)

    return agent.params
