"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class JmsiError(Exception):
    """Base class for all library errors."""


class UsageError(JmsiError):
    """Bad invocation: unknown flags, invalid argument combinations. CLI exit 1."""


class DataError(JmsiError):
    """Bad input data: missing files, malformed records, empty corpora. CLI exit 2."""


class NumericError(JmsiError):
    """Numeric failure: non-finite losses or gradients. CLI exit 3."""
