"""Exception hierarchy.  Each class carries a short ``category`` used in CLI error lines."""


class HlstmError(Exception):
    category = "error"


class ShapeError(HlstmError, ValueError):
    category = "shape"


class ContractError(HlstmError, RuntimeError):
    category = "contract"


class ConfigError(HlstmError, ValueError):
    category = "config"


class FormatError(HlstmError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    category = "format"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CorpusParseError(FormatError):
    category = "parse"


class ValidationError(HlstmError, ValueError):
    category = "validation"


class VocabMismatchError(HlstmError, ValueError):
    category = "vocab"
