"""Exception hierarchy shared across the pipeline.

Three branches matter to callers: DataError (bad inputs or files),
NumericError (solver failures), and UsageError (bad invocation). The CLI
maps them to exit codes 2, 3 and 1 respectively.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class DataError(PipelineError):
    """Malformed or inconsistent input data."""


class ManifestError(DataError):
    """Manifest cannot be parsed or violates its invariants."""


class FrameFormatError(DataError):
    """Frame file is unreadable, truncated or in an unknown format."""


class EmptyFrameError(DataError):
    """Operation requires a non-empty point cloud."""


class StoreError(DataError):
    """Feature store file is corrupt or has an unsupported version."""


class ModelFileError(DataError):
    """Model file is corrupt or has an unsupported version."""


class SplitError(DataError):
    """Train/test split violates subject disjointness or names unknown ids."""


class NumericError(PipelineError):
    """Numerical routine failed to produce a trustworthy result."""


class EigensolverError(NumericError):
    """Eigendecomposition did not converge or returned invalid values."""


class UsageError(PipelineError):
    """Command invoked with invalid arguments."""
