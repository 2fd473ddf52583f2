"""Exception hierarchy shared by every module."""


class AncError(Exception):
    """Base class for all errors raised by hybridanc."""


class ConfigurationError(AncError, ValueError):
    """Inconsistent lengths, dimensions or parameter values."""


class InputError(AncError, ValueError):
    """Bad runtime input: empty frames, wrong frame length, exhausted replay files."""


class FormatError(AncError, ValueError):
    """A file on disk does not match its expected format."""


class DivergenceError(AncError, ArithmeticError):
    """The adaptive filter blew up.

    ``sample_index`` is the absolute index of the sample whose update produced
    a non-finite or runaway tap.
    """

    def __init__(self, message: str, sample_index: int):
        super().__init__(f"{message} (sample {sample_index})")
        self.sample_index = sample_index
