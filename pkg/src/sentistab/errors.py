"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`SentistabError`,
so callers can catch one base class. The CLI maps the four families below to
exit codes.
"""


class SentistabError(Exception):
    """Base class for all package errors."""


class DataError(SentistabError):
    """Bad input data (texts, distributions, corpora, score tables)."""


class ConfigError(SentistabError):
    """Malformed or invalid configuration."""


class GatewayError(SentistabError):
    """Anything that went wrong talking to the completion endpoint."""


# -- core -------------------------------------------------------------------

class NonFiniteInput(DataError):
    pass


class NegativeInput(DataError):
    pass


class EmptyRewrites(DataError):
    pass


class EmptyRoundTrips(DataError):
    pass


# -- sentiment / rewrite ----------------------------------------------------

class MalformedReply(GatewayError):
    """The sentiment reply did not contain three usable numbers."""


class UnknownPrompt(ConfigError):
    pass


class UnknownPair(ConfigError):
    pass


class EmptyResult(GatewayError):
    """The rewriting backend returned an empty string."""


# -- gateway ----------------------------------------------------------------

class MissingCacheEntry(GatewayError):
    def __init__(self, key: str):
        super().__init__(f"replay mode: no cache entry for key {key}")
        self.key = key


class AuthError(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class Timeout(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


# -- detector / corpus / eval -----------------------------------------------

class EmptyText(DataError):
    pass


class SingleClassInput(DataError):
    pass


class ParseError(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class DuplicateId(DataError):
    def __init__(self, sample_id: str):
        super().__init__(f"duplicate sample id {sample_id!r}")
        self.sample_id = sample_id


class MixedLabels(DataError):
    pass


class EmptyOriginal(DataError):
    pass


class EmptyInput(DataError):
    pass
