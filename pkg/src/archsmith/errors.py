"""Exception hierarchy.

Everything raised on purpose derives from :class:`ArchsmithError`, which the
CLI maps to exit code 1.
"""

from __future__ import annotations


class ArchsmithError(Exception):
    """Base class for domain errors."""


class ParseError(ArchsmithError, ValueError):
    """A submission could not be turned into a valid architecture.

    ``reason`` is a stable machine-readable code.
    """

    reason = "ParseError"


class UnknownToken(ParseError):
    reason = "UnknownToken"


class WrongLength(ParseError):
    reason = "WrongLength"


class OutOfPool(ParseError):
    reason = "OutOfPool"


class SearchSpaceOverflow(ArchsmithError, OverflowError):
    pass


class MissingLatency(ArchsmithError, KeyError):
    pass


class ConfigError(ArchsmithError, ValueError):
    pass


class ProposerFailure(ArchsmithError):
    """The proposer returned something that is not a usable response."""


class EvaluatorFailure(ArchsmithError):
    """Evaluation could not produce a fitness record.

    When raised out of a search, ``log`` holds the partial run log.
    """

    log = None


class EvaluatorTimeout(EvaluatorFailure, TimeoutError):
    pass


class MalformedResponse(EvaluatorFailure):
    pass


class EvaluatorReportedFailure(EvaluatorFailure):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class TransportError(ArchsmithError):
    pass
