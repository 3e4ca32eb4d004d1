"""Exception types shared across the engine.

Every deliberate rejection raises one of these; anything else escaping the
library is a bug.
"""


class EngineError(Exception):
    """Base class for all errors raised on purpose by ovfuse."""


class ValidationError(EngineError):
    """An input violates a documented invariant (range, shape, naming)."""


class FormatError(EngineError):
    """A byte stream is structurally broken: bad magic, version, field tag,
    or trailing garbage."""


class TruncatedError(FormatError, IOError):
    """A byte stream ended before a declared payload was complete."""

    def __init__(self, expected: int, received: int, what: str = "bytes"):
        self.expected = expected
        self.received = received
        super().__init__(
            f"truncated stream: expected {expected} {what}, received {received}"
        )
