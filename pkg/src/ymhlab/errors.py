"""Exception taxonomy; CLI exit codes are derived from these classes."""


class YmhError(Exception):
    """Base class for all package errors."""


class ConfigurationError(YmhError):
    """Invalid grid/sector/bundle/experiment configuration (exit code 2)."""


class OracleUnsupportedError(YmhError):
    """Bundle outside the family the HN oracle certifies (exit code 3).

    Raised loudly instead of ever returning a possibly wrong type.
    """


class StateCorruptionError(YmhError):
    """Flow state lost positivity or Hermiticity (exit code 4)."""


class InputError(YmhError):
    """Bad operand to an analysis operation (projector identities, etc.)."""


class PreconditionError(YmhError):
    """Operation called without its stated prerequisites."""
