"""Exception taxonomy shared by all modules."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(ToolkitError):
    """Invalid or inconsistent inputs (profiles, meshes, traces, configs)."""


class GeometryError(ToolkitError):
    """Points or regions fall outside the admissible geometry."""


class DegenerateCavityError(GeometryError):
    """Operation requires a cavity of positive measure."""


class DegenerateDataError(ToolkitError):
    """Surface data too close to constant for the requested functional."""


class SingularSystemError(ToolkitError):
    """Linear system has no Dirichlet constraints and is singular."""


class NumericalError(ToolkitError):
    """A numerical process failed to converge; carries the residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StateError(ToolkitError):
    """Operation requires a solved field or other prior state."""


class FitError(ToolkitError):
    """Constant fitting has no usable rows."""
