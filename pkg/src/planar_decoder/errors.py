"""Exception types raised across the package."""

from __future__ import annotations


class DemError(ValueError):
    """Base class for detector-error-model problems."""


class DemParseError(DemError):
    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class NonGraphlikeError(DemError):
    def __init__(self, mechanism_index: int, detector_count: int):
        self.mechanism_index = mechanism_index
        super().__init__(
            f"mechanism {mechanism_index} touches {detector_count} detectors (graphlike requires <= 2)"
        )


class MissingCoordinatesError(DemError):
    pass


class NonPlanarError(DemError):
    pass


class NoLogicalRepresentativeError(DemError):
    pass


class UnsatisfiableSyndromeError(ValueError):
    pass


class SingularKacWardError(ArithmeticError):
    pass


class TooManySpinsError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class NoCrossingError(ValueError):
    pass


class NonPhysicalEstimateError(ValueError):
    def __init__(self, entries):
        self.entries = list(entries)
        listing = ", ".join(f"{name}={value:.3g}" for name, value in self.entries)
        super().__init__(f"{len(self.entries)} non-physical estimates: {listing}")


class KacWardPhaseError(ArithmeticError):
    pass
