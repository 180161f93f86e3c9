"""Exception types shared across the package."""


class ScenarioError(ValueError):
    """Invalid scenario data: dimension mismatch, bad weights, bad constants."""


class IntegrationError(RuntimeError):
    """Non-finite state encountered while integrating."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ExcitationError(RuntimeError):
    """Interval excitation not achieved, so no finite-time reconstruction exists."""

    def __init__(self, message, required=None, achieved=None):
        super().__init__(message)
        self.required = required
        self.achieved = achieved


class NotStabilizingError(ValueError):
    """Gain outside the stabilizing set (shifted closed loop not Hurwitz)."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
