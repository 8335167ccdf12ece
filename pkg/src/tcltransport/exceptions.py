"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or input data (CLI exit code 2)."""


class DimensionError(ConfigError):
    """Requested single-excitation dimension exceeds the configured cap."""


class DomainError(ValueError):
    """Argument outside the domain where a density is finite."""


class PictureError(ValueError):
    """An occupation series is tagged with the wrong picture."""


class NumericalError(RuntimeError):
    """A numerical routine failed or broke its error contract (CLI exit code 3)."""
