"""Exception hierarchy shared by every medvlkit module."""


class MedVLError(Exception):
    """Base class for all toolkit errors."""


class FormatError(MedVLError):
    """A source file does not parse under its declared format."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class MissingDimensions(MedVLError):
    """A 2D box dataset lacks the image dimensions needed for normalization."""


class SchemaError(MedVLError):
    """A serialized record or metric file has the wrong shape."""


class ConfigError(MedVLError):
    """Invalid run or endpoint configuration."""


class UnsupportedTask(MedVLError):
    pass


class AlignmentError(MedVLError):
    """Predictions and ground truths do not line up by sample id."""

    def __init__(self, message, missing=(), extra=()):
        self.missing = list(missing)
        self.extra = list(extra)
        detail = []
        if self.missing:
            detail.append(f"missing={self.missing[:10]}")
        if self.extra:
            detail.append(f"extra={self.extra[:10]}")
        super().__init__(" ".join([message, *detail]))


class DegenerateReference(MedVLError):
    """A reference text normalizes to nothing."""


class DegenerateInput(MedVLError):
    pass


class CorpusTooSmall(MedVLError):
    pass


class InsufficientPool(MedVLError):
    pass


class EmptyAnswer(MedVLError):
    pass


class EndpointError(MedVLError):
    """Transport-level failure talking to a chat-completions endpoint."""

    def __init__(self, message, sample_id=None, status=None, retries=0):
        self.sample_id = sample_id
        self.status = status
        self.retries = retries
        prefix = f"[{sample_id}] " if sample_id else ""
        super().__init__(prefix + message)


class EndpointTimeout(EndpointError):
    pass


class RateLimited(EndpointError):
    pass


class BadRequest(EndpointError):
    pass


class AuthFailed(EndpointError):
    pass
