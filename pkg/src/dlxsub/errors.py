"""Exception hierarchy shared by every module.

Exit-code mapping for the CLI: config errors exit 2, data errors 3,
provider errors 4, anything else 1.
"""


class EngineError(Exception):
    exit_code = 1
    kind = "internal"


class ConfigError(EngineError):
    exit_code = 2
    kind = "config"


class DataError(EngineError):
    exit_code = 3
    kind = "data"


class ContractError(DataError):
    """A caller violated an operation's preconditions."""


class DomainError(DataError):
    """Structurally valid input that is mathematically out of domain."""


class NotFoundError(DataError):
    """A referenced word, file, or resource does not exist."""


class ParseError(DataError):
    """Malformed text input, annotated with file location."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + where)


class FormatError(DataError):
    """Malformed binary input, annotated with byte offset."""

    def __init__(self, message: str, path: str | None = None, offset: int | None = None):
        self.path = path
        self.offset = offset
        where = ""
        if path is not None or offset is not None:
            bits = [p for p in (path, f"byte {offset}" if offset is not None else None) if p]
            where = " [" + ", ".join(bits) + "]"
        super().__init__(message + where)


class ProviderError(EngineError):
    exit_code = 4
    kind = "provider"
