"""Exception hierarchy shared by the core library and the phase_sweep app."""

from typing import Optional, Tuple


class OHPhaseError(Exception):
    """Base class for every error raised by ohphase."""


class ConfigError(OHPhaseError):
    """Run configuration could not be parsed or failed validation."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class NonCancellation(OHPhaseError):
    """Dressed matrix kept a time dependence after the co-rotating transformation."""

    def __init__(self, residual: float, threshold: float):
        super().__init__(
            f"dressed matrix is not time independent: residual {residual:.3e} >= {threshold:.1e}"
        )
        self.residual = residual
        self.threshold = threshold


class ConvergenceFailure(OHPhaseError):
    """Jacobi eigensolver hit its sweep cap."""

    def __init__(self, sweeps: int, off_norm: float):
        super().__init__(f"Jacobi did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:.3e})")
        self.sweeps = sweeps
        self.off_norm = off_norm


class AmbiguousLabel(OHPhaseError):
    """Static spectrum does not determine the (M, parity) labels uniquely."""


class TrackingBreakdown(OHPhaseError):
    """Adaptive refinement reached its floor without a clean overlap match."""

    def __init__(self, interval: Tuple[float, float], overlap: float, partial=None):
        lo, hi = interval
        super().__init__(
            f"state tracking failed between omega_r={lo:.17e} and {hi:.17e} rad/s "
            f"(worst overlap {overlap:.4f})"
        )
        self.interval = interval
        self.overlap = overlap
        # TrackedSweep up to the last accepted point, if any
        self.partial = partial


class LabelMismatch(OHPhaseError):
    """Two spectra that should carry the same label set do not."""


class NotPureMagnetic(OHPhaseError):
    """A pure-magnetic closed form was requested with a nonzero electric field."""


class NoCriticalRate(OHPhaseError):
    """The magnetic critical rotation rate does not exist for this tilt."""


class RegimeUndefined(OHPhaseError):
    """Unknown asymptotic regime name."""


class DegenerateBareSpectrum(OHPhaseError):
    """Floquet perturbation theory needs a non-degenerate unperturbed spectrum."""


class StepCountTooSmall(OHPhaseError):
    """Propagator requested with fewer substeps than the integrator supports."""


class ValidityWarning(UserWarning):
    """A result was computed outside the range where its model or expansion holds."""
