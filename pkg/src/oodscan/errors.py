"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
anything else (including InternalError) -> 4.
"""


class OodscanError(Exception):
    pass


class ConfigError(OodscanError):
    """Invalid or inconsistent run configuration."""


class DataError(OodscanError):
    """Broken or missing on-disk artifacts (tensors, manifests, tables)."""


class InternalError(OodscanError):
    """A runtime invariant the package guarantees was violated."""
