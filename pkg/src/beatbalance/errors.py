"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated a documented precondition."""


class ParseError(ValueError):
    """A text input file is malformed.

    Carries the offending file and 1-based line number so the error points at
    the exact row.
    """

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class EmptyRecordError(ValueError):
    """A record contains no usable beat annotations."""


class EmptyDatasetError(ValueError):
    """A dataset build produced zero beat images."""


class IntegrityError(ValueError):
    """A persisted dataset or checkpoint disagrees with its manifest."""


class ConfigError(ValueError):
    """A configuration file or mapping violates the documented schema."""
