"""Exception types shared across the package."""


class OnlineHmmError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(OnlineHmmError):
    """An experiment configuration is malformed.

    Carries ``field`` so callers can report which entry was rejected.
    """

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class EnumerationCapError(OnlineHmmError):
    """An exact computation would need to enumerate more items than allowed."""


class UpdateError(OnlineHmmError):
    """Base class for failures inside a single learner update.

    Learner state is left unchanged when one of these is raised, so a
    driver may record the failure and continue with the next observation.
    """


class ZeroLikelihoodError(UpdateError):
    """The model assigns probability zero to the observed sequence."""


class DegenerateSystemError(UpdateError):
    """Log-moment targets are too close to zero to identify hyperparameters.

    A target mu_i must be strictly negative; values at or above -1e-6
    correspond to a component whose mass concentrates at 1.
    """


class SolverConvergenceError(UpdateError):
    """An iterative solver exhausted its budget without converging."""


class CollapsedPosteriorError(UpdateError):
    """A posterior has (numerically) zero variance, so moment matching
    cannot identify a finite concentration."""
