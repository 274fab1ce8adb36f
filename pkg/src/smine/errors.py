"""Exception hierarchy shared across the engine."""


class SmineError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(SmineError):
    """An argument violates a documented precondition."""


class InsufficientDataError(InvalidInputError):
    """A track has too few states for the requested kinematic quantity."""


class UndefinedSimilarityError(InvalidInputError):
    """Cosine similarity requested against a zero vector."""


class TrackTooShortError(InvalidInputError):
    """Track shorter than one patch length; caller pads or skips."""


class DslError(SmineError):
    """Base class for scenario-DSL failures."""


class DslSyntaxError(DslError):
    """Source text does not match the grammar.

    Carries 1-based ``line`` and ``column`` of the offending token.
    """

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DslStaticError(DslError):
    """Program parses but does not resolve against the predicate catalog."""


class ExtractionError(SmineError):
    """No program could be extracted from a generation response."""


class StoreError(SmineError):
    """Persistent store is unreadable: bad magic, version, or checksum."""


class ConfigError(SmineError):
    """Pipeline configuration file is malformed or inconsistent."""


class DataError(SmineError):
    """On-disk data (logs, embeddings, KB) is missing or malformed."""
