"""Exception types shared across the package."""


class BohmstabError(Exception):
    """Base class for all package errors."""


class NodeRegionError(BohmstabError):
    """Field evaluation requested inside the node-exclusion region."""


class OutOfDomainError(BohmstabError):
    """Position or time outside the range a model can evaluate."""


class UnstableStepError(BohmstabError):
    """Grid propagation lost unitarity beyond tolerance."""


class InvalidFieldError(BohmstabError):
    """A field sample is unusable (non-finite or flagged invalid)."""


class DiracDensityError(BohmstabError):
    """The Dirac kernel has no pointwise phase-space density."""


class DiracKernelError(BohmstabError):
    """Operation undefined for the Dirac kernel (use the limit law instead)."""


class QuadratureNotConvergedError(BohmstabError):
    """Doubling the quadrature range changed the result beyond tolerance."""


class TailDivergenceError(BohmstabError):
    """Momentum-space flux does not decay within the configured cutoff."""


class NodeRegionEnteredError(BohmstabError):
    """A trajectory stepped into the node-exclusion region."""

    def __init__(self, message, t_truncated=None):
        super().__init__(message)
        self.t_truncated = t_truncated


class StepUnderflowError(BohmstabError):
    """Adaptive integrator shrank the step below the configured minimum."""


class StepBudgetError(BohmstabError):
    """Adaptive integrator exceeded its step budget."""


class InvalidNeighborhoodError(BohmstabError):
    """Finite-difference stencil touches an invalid field region."""


class SamplerGridTooCoarseError(BohmstabError):
    """Inverse-CDF interpolation error exceeds tolerance."""


class TruncationBudgetError(BohmstabError):
    """Too many trajectories were censored at nodes for unbiased statistics."""


class SupportMismatchError(BohmstabError):
    """Empirical mass found in cells where the equilibrium average vanishes."""

    def __init__(self, message, offending_mass=0.0):
        super().__init__(message)
        self.offending_mass = offending_mass


class GridMismatchError(BohmstabError):
    """Cell fields computed on different coarse grids."""


class ConfigError(BohmstabError):
    """Invalid or unknown configuration keys/values."""
