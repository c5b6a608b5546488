"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration is malformed (unknown key, bad value)."""


class FormatError(ValueError):
    """A file does not conform to its declared format.

    Carries the path and the byte offset at which parsing failed.
    """

    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{path}: byte {offset}: {message}")


class NonFiniteLossError(RuntimeError):
    """A loss term became NaN or infinite; names the offending term."""

    def __init__(self, term: str, step: int | None = None):
        self.term = term
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite loss term '{term}'{where}")
