"""Exception types shared across the simulator."""

from __future__ import annotations


class ConvriskError(Exception):
    """Base class for all domain errors raised by this package."""


class FormatError(ConvriskError):
    """A corpus record violates the expected schema."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyConversationError(ConvriskError):
    """Normalization left a conversation with no usable turns."""


class TooFewConversationsError(ConvriskError):
    """Fewer conversations than requested folds."""


class InsufficientNegativesError(ConvriskError):
    """Not enough foreign candidates to fill a pool."""


class EmptyCorpusError(ConvriskError):
    """An operation needs at least one conversation."""


class DimensionMismatchError(ConvriskError):
    """Vector or matrix shapes do not line up."""


class UnknownCandidateIdError(ConvriskError):
    """A candidate id is not part of the pool under consideration."""


class TooFewPairsError(ConvriskError):
    """Not enough training pairs to form a batch."""


class TerminalStateError(ConvriskError):
    """The simulated user already ended the conversation."""


class EmptyRankingError(ConvriskError):
    """A ranked candidate list that must be nonempty is empty."""


class DegenerateLabelsError(ConvriskError):
    """Classifier training needs both label classes present."""


class NoSafeActionError(ConvriskError):
    """Internal inconsistency: every action would be a worse decision."""


class BufferTooSmallError(ConvriskError):
    """Replay buffer has not reached the warmup size."""


class NonFiniteLossError(ConvriskError):
    """A training step produced a non-finite loss."""


class EmptyResultsError(ConvriskError):
    """Metrics need at least one episode result."""


class LengthMismatchError(ConvriskError):
    """Paired score lists must have equal length."""


class BridgeDownError(ConvriskError):
    """The external scorer process is gone or never completed a handshake."""


class BridgeProtocolError(ConvriskError):
    """The external scorer sent a reply that violates the wire protocol."""


class BridgeTimeoutError(ConvriskError):
    """The external scorer did not reply within the allowed time."""


class ConfigError(ConvriskError):
    """A run configuration value is unknown or out of range."""

    def __init__(self, key: str, reason: str):
        super().__init__(f"config key {key!r}: {reason}")
        self.key = key
        self.reason = reason
