"""Exception hierarchy shared by every module.

Errors are split by who has to act: configuration errors mean the run setup
is wrong (fix the config), validation errors mean a value violates a domain
contract, parse errors mean a model reply did not follow the response
protocol, provider errors mean the upstream service is unreachable.
"""

from __future__ import annotations


class MTBreakerError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MTBreakerError):
    """The run or provider configuration is unusable."""


class ValidationError(MTBreakerError):
    """A value violates a domain invariant.

    ``defects`` carries the full list when several problems were found at
    once (plan validation reports every defect, not just the first).
    """

    def __init__(self, message: str, defects: list[str] | None = None):
        super().__init__(message)
        self.defects: list[str] = defects if defects is not None else [message]


class ParseError(MTBreakerError):
    """A model reply did not match the expected response protocol."""


class ProviderUnavailableError(MTBreakerError):
    """A provider kept failing after the retry budget was spent."""

    def __init__(self, provider_id: str, message: str):
        super().__init__(f"provider '{provider_id}' unavailable: {message}")
        self.provider_id = provider_id


class CacheIntegrityError(MTBreakerError):
    """A cache entry is corrupt or conflicts with an existing entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"cache entry {key}: {message}")
        self.key = key
