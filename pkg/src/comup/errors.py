"""Shared exception types."""


class ComupError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ComupError):
    """A provider/backend/config requirement is not met."""


class ContractError(ComupError):
    """A documented precondition was violated by the caller."""


class MalformedSampleError(ComupError):
    """A dataset sample is missing required content."""


class ValidationError(ComupError):
    """A loaded record violates a dataset invariant."""


class ProviderContractError(ComupError):
    """An embedding provider emitted output violating its contract."""


class TransportError(ComupError):
    """LLM backend transport failure (network, HTTP, protocol)."""


class AuthError(TransportError):
    """Backend rejected the credential."""


class RateLimitError(TransportError):
    """Backend rate limit not resolved within the retry budget."""


class MalformedReplyError(TransportError):
    """Backend returned a reply we cannot parse."""


class CacheIntegrityError(ComupError):
    """Response cache contains a corrupt record."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class EmptyResponseError(ComupError):
    """LLM response normalized to the empty string."""


class ParseError(ComupError):
    """A structured LLM reply could not be parsed.

    Carries the raw reply for debugging.
    """

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class NumericDegeneracyError(ComupError):
    """A numeric quantity degenerated (e.g. zero-norm projection)."""


class PipelineError(ComupError):
    """End-to-end pipeline failure."""
