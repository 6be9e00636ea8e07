"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """A geometry or scenario description violates its invariants."""


class ValidationError(ValueError):
    """Inputs to an operation are inconsistent or out of range."""


class BehindSourceError(ValueError):
    """A point lies at or behind the x-ray source and cannot be projected."""


class IntegrityError(OSError):
    """A file on disk does not match its sidecar metadata or checksum."""


class TruncationWarning(UserWarning):
    """Nonzero attenuation lies outside the scan field of view."""
