"""Exception hierarchy shared by every stage of the pipeline."""


class DriftBenchError(Exception):
    """Base class for all errors raised by driftbench."""


class SchemaError(DriftBenchError):
    """A column, feature or kind does not match the declared schema."""


class ParseError(DriftBenchError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class VocabularyError(DriftBenchError):
    """A categorical value is absent from a fixed vocabulary."""


class EmptyInputError(DriftBenchError):
    pass


class DegenerateClassError(DriftBenchError):
    """Only one class is present where both are required."""


class AnchorError(DriftBenchError):
    pass


class InfeasibleError(DriftBenchError):
    pass


class NumericalError(DriftBenchError):
    pass


class DegenerateRangeError(DriftBenchError):
    pass


class ConfigError(DriftBenchError):
    pass


class NotTrainable(DriftBenchError):
    """The method has no usable labeled data at this split.

    The runner records this as an unavailable cell rather than a failure.
    """


class ExternalMethodError(DriftBenchError):
    def __init__(self, message: str, returncode: int | None = None, stderr: str = ""):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


class ProtocolError(DriftBenchError):
    """An external method produced output violating the file protocol."""


class PairingError(DriftBenchError):
    pass
