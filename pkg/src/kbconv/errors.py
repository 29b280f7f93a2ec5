"""Exception types shared across the toolkit."""


class KbconvError(Exception):
    """Base class for all kbconv errors."""


class InvalidCalibration(KbconvError):
    """A calibration violates one of its invariants."""


class NoConvergence(KbconvError):
    """Iterative inversion failed to reach the requested tolerance."""


class OutOfRange(KbconvError):
    """Requested radial distance exceeds the representable range."""


class DegenerateKernel(KbconvError):
    """Kernel field of view reaches or exceeds 180 degrees."""


class InvalidAnchor(KbconvError):
    """Anchor pixel cannot be back-projected through the calibration."""


class ShapeMismatch(KbconvError):
    """Tensor shapes are inconsistent for the requested operation."""


class OffsetResolutionMismatch(KbconvError):
    """Offset field resolution does not match the convolution output."""


class BadAspect(KbconvError):
    """Panorama is not a 2:1 equirectangular image."""


class FovExceeded(KbconvError):
    """Requested perspective view needs rays outside the feasible range."""


class EmptyMask(KbconvError):
    """No pixels left to evaluate after masking."""


class FormatError(KbconvError):
    """Malformed or unsupported binary file."""
