"""Exception hierarchy shared by every toolgate module."""


class ToolgateError(Exception):
    """Base class for all errors raised by toolgate."""


# embedding space

class EmptyTextError(ToolgateError, ValueError):
    pass


class ZeroVectorError(ToolgateError, ValueError):
    pass


class DimensionMismatchError(ToolgateError, ValueError):
    pass


class EmbedderFailure(ToolgateError):
    """Any failure of the embedding backend."""


class RemoteUnavailableError(EmbedderFailure):
    pass


# index

class DuplicateToolIdError(ToolgateError, ValueError):
    pass


class UnknownToolIdError(ToolgateError, ValueError):
    pass


class EmptyInputError(ToolgateError, ValueError):
    pass


class EmptyIndexError(ToolgateError, ValueError):
    pass


class InvalidToolSpecError(ToolgateError, ValueError):
    pass


class IoFailure(ToolgateError, OSError):
    pass


class SchemaVersionMismatchError(ToolgateError):
    pass


class CorruptIndexError(ToolgateError):
    pass


class StaleIndexError(ToolgateError):
    """Index was built with a different embedder than the active one."""


# augmentation

class EmptyTrainingSetError(ToolgateError, ValueError):
    pass


class UnparsableGenerationError(ToolgateError):
    pass


# recommender

class EmptyQueryError(ToolgateError, ValueError):
    pass


class NoJsonFoundError(ToolgateError):
    pass


class EmptyToolListError(ToolgateError):
    pass


class MalformedEntryError(ToolgateError):
    pass


class RecommenderFailed(ToolgateError):
    def __init__(self, message, raw_responses=(), prompt_tokens=0):
        super().__init__(message)
        self.raw_responses = tuple(raw_responses)
        self.prompt_tokens = prompt_tokens


# llm client

class LlmError(ToolgateError):
    pass


class LlmUnavailableError(LlmError):
    """Fatal: the endpoint cannot serve requests."""


class UnreachableError(LlmUnavailableError):
    pass


class LlmTimeoutError(LlmUnavailableError):
    pass


class HttpError(LlmUnavailableError):
    def __init__(self, status, body=""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class ProtocolError(LlmError):
    """Response body could not be understood."""


class MockScriptExhausted(LlmError, AssertionError):
    pass


# bench harness

class SchemaError(ToolgateError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class UnknownGoldToolError(ToolgateError, ValueError):
    def __init__(self, names):
        self.names = sorted(set(names))
        super().__init__("unknown gold tools: " + ", ".join(self.names))


class NonMonotoneTimestampsError(ToolgateError, ValueError):
    pass


class QuerySetMismatchError(ToolgateError, ValueError):
    pass


class MissingBaselineMetricError(ToolgateError, ValueError):
    pass
