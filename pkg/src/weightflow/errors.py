"""Exception types shared across the package; the CLI maps them to exit codes."""


class ConfigError(ValueError):
    """Invalid configuration value or unknown name."""


class MissingArtifactError(FileNotFoundError):
    """A pipeline stage needs the output of an earlier stage that is absent."""


class NumericError(ArithmeticError):
    """NaN/Inf encountered, or a numeric precondition was violated."""
