"""Exception types shared across the package."""


class SymmetryError(ValueError):
    """Spectral coefficients violate Hermitian symmetry beyond tolerance."""


class ConfigError(ValueError):
    """Invalid or unknown configuration input (fail-closed)."""


class NumericalFault(RuntimeError):
    """Base class for runtime faults of a simulation (CLI exit code 2)."""


class CFLViolation(NumericalFault):
    """Advective time step bound dt <= c_cfl * h / max|u| was violated."""


class BlowUpError(NumericalFault):
    """State exceeded the blow-up guard; signals a numerical fault, not physics."""


class RankCollapseError(NumericalFault):
    """Tangent vectors became numerically dependent during orthonormalization."""
