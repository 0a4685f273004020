"""Exception types shared across the package."""


class FluxlabError(Exception):
    """Base class for physics-layer errors."""


class TruncationError(FluxlabError):
    """Basis or Fock truncation too small for the requested computation."""


class ConvergenceError(FluxlabError):
    """Iterative refinement failed to reach the requested tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ResonanceError(FluxlabError):
    """A perturbative formula was evaluated too close to a pole."""


class LabelingError(FluxlabError):
    """Dressed states could not be assigned unambiguous product labels."""


class DegenerateTransitionError(FluxlabError):
    """A rate formula diverges for a zero-frequency transition."""


class NoMatchingResonatorError(FluxlabError):
    """Resonator-frequency search found no candidate meeting the contrast bound."""


class DarkeningError(FluxlabError):
    """Selective-darkening ratio is undefined (vanishing cross matrix element)."""


class IntegrationError(FluxlabError):
    """Time integration failed to meet its tolerance."""

    def __init__(self, message: str, achieved_tol: float | None = None):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class BudgetExhausted(FluxlabError):
    """An optimization budget ran out before convergence."""
