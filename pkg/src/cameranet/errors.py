"""Exception hierarchy. Validation errors exit the CLI with code 2,
runtime errors with code 1."""


class CameraNetError(Exception):
    """Base class for all package errors."""


class ValidationError(CameraNetError):
    """Bad user input: shapes, specs, configs, manifests."""


class ShapeError(ValidationError):
    """Tensor shape mismatch; message names the offending dimension."""


class TapeError(CameraNetError):
    """Misuse of the autodiff tape (double backward, detached graph)."""


class NonFiniteError(CameraNetError):
    """NaN or Inf encountered where finite values are required."""


class SpaceTagError(ValidationError):
    """Image fed to a conversion that expects a different color space."""


class ManifestError(ValidationError):
    """Dataset manifest invalid: missing file, checksum mismatch, schema."""


class TrainingAborted(CameraNetError):
    """Training stopped on a non-finite loss; a checkpoint was written."""
