"""Exception hierarchy shared across the package."""


class AlignLoopError(Exception):
    """Base class for every error raised by alignloop."""


# corpus / retrieval
class MalformedLine(AlignLoopError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed line {line_no}" + (f": {reason}" if reason else ""))


class DuplicateId(AlignLoopError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"duplicate document id {doc_id!r}")


class NotFound(AlignLoopError, KeyError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"document {doc_id!r} not found")

    def __str__(self) -> str:
        return self.args[0]


class DimensionMismatch(AlignLoopError, ValueError):
    pass


class ProviderUnavailable(AlignLoopError):
    pass


class MissingPrecomputed(AlignLoopError):
    def __init__(self, text_hash: str):
        self.text_hash = text_hash
        super().__init__(f"no precomputed embedding for sha256={text_hash}")


class CorpusNotReady(AlignLoopError):
    pass


# model gateway
class TransportError(AlignLoopError):
    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class RateLimited(TransportError):
    def __init__(self, retry_after: float | None = None):
        self.retry_after = retry_after
        super().__init__(f"rate limited (retry-after={retry_after})", status=429)


class MalformedReply(AlignLoopError):
    pass


class MissingSlot(AlignLoopError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing template slot {name!r}")

    def __str__(self) -> str:
        return self.args[0]


class ReplyParseError(AlignLoopError, ValueError):
    """A model reply did not follow the line format its prompt asked for."""


class BackendError(AlignLoopError):
    pass


# alignment / taxonomy
class EmptyQuery(AlignLoopError, ValueError):
    pass


class EmptyComponents(AlignLoopError, ValueError):
    pass


class InvalidTau(AlignLoopError, ValueError):
    pass


class CitationOutOfRange(AlignLoopError):
    pass


# evaluation
class MissingGoldField(AlignLoopError):
    def __init__(self, field: str):
        self.field = field
        super().__init__(f"gold record has no {field!r}")


class UnresolvedCitation(AlignLoopError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"citation {doc_id!r} is not in the support set")


class InvalidTally(AlignLoopError, ValueError):
    pass
