"""Exception types shared across the package."""

from __future__ import annotations


class EvoqueryError(Exception):
    """Base class for all package-specific errors."""


class ParseError(EvoqueryError):
    """A data file could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(ParseError):
    """A corpus file contains the same document id twice."""


class EmptyDocument(EvoqueryError):
    """A document body normalized to zero lemmas."""


class PoolTooSmall(EvoqueryError):
    """The keyword pool cannot supply enough distinct terms."""


class VariantMismatch(EvoqueryError):
    """Two genomes with incompatible formulation variants were combined."""


class EmptyQuery(EvoqueryError):
    """A query string contained no searchable terms."""


class EmptyCorpus(EvoqueryError):
    """An index build was attempted over zero documents."""


class UnknownDocument(EvoqueryError):
    """A document id is absent from the index."""


class ProviderUnavailable(EvoqueryError):
    """The search provider could not be reached."""


class ProtocolError(EvoqueryError):
    """The search provider returned a malformed response."""


class PositionOutOfRange(EvoqueryError):
    """A result position fell outside 1..list_length."""


class ComponentOutOfRange(EvoqueryError):
    """A fitness component fell outside [0, 1]."""


class WrongPopulationSize(EvoqueryError):
    """A population-level computation received the wrong number of entries."""


class ConfigInvalid(EvoqueryError):
    """A run configuration violates its constraints."""


class LedgerCorrupt(EvoqueryError):
    """A run ledger directory is missing pieces or unreadable."""


class NonReplayableLedger(EvoqueryError):
    """The ledger was produced by a provider whose results cannot be re-derived."""


class DivergenceDetected(EvoqueryError):
    """Replay produced a record that differs from the persisted one."""

    def __init__(self, generation: int, field: str, message: str = ""):
        self.generation = generation
        self.field = field
        detail = message or f"generation {generation} diverges at {field}"
        super().__init__(detail)


class DuplicateJudgment(ParseError):
    """A qrels file repeats a (url, expert, persona) key."""


class GradeOutOfRange(ParseError):
    """A relevance grade fell outside the 0..3 scale."""


class NoJudgments(EvoqueryError):
    """A consensus grade was requested for an unjudged document."""


class LengthMismatch(EvoqueryError):
    """Two sequences that must align have different lengths."""


class ZeroEnergySequence(EvoqueryError):
    """A correlation was requested for an all-zero sequence."""
