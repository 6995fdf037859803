"""Exception hierarchy shared by every module."""


class FedAucError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(FedAucError, ValueError):
    """Malformed scores, labels, ranks or dataset files."""


class DegenerateLabelsError(FedAucError, ValueError):
    """AUC is undefined because one of the classes is empty."""


class InvalidBudgetError(FedAucError, ValueError):
    """A privacy budget or allocation parameter is out of range."""


class SingularRatesError(FedAucError, ValueError):
    """Label-noise rates make the debiasing transform singular."""


class DegenerateCountsError(FedAucError, ArithmeticError):
    """Noisy positive/negative counts leave the AUC formula undefined."""


class ProtocolError(FedAucError, RuntimeError):
    """A protocol step ran with missing or inconsistent messages."""


class DatasetFormatError(InvalidInputError):
    """A dataset CSV could not be parsed.

    Attributes:
      line: 1-based line number of the offending row, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
