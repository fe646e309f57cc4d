"""Exception hierarchy.

``InputError`` covers bad files, bad arguments and contract violations on the
caller's side (CLI exit code 2). ``ComputeError`` covers numerical failures
(CLI exit code 1).
"""


class GpDepthError(Exception):
    exit_code = 1


class InputError(GpDepthError, ValueError):
    exit_code = 2


class ComputeError(GpDepthError, RuntimeError):
    exit_code = 1


class DepthOverflowError(InputError):
    """A depth does not fit the 16-bit PNG range at the given divisor."""


class HullError(InputError):
    """A point lies outside the inducing grid."""


class CholeskyError(ComputeError):
    pass


class CgBreakdown(ComputeError):
    """Non-finite values or a non-positive curvature in conjugate gradients."""
