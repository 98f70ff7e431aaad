"""Exception hierarchy shared across the toolkit."""


class SphereMemError(Exception):
    """Base class for all domain errors raised by this package."""


class MeshTopologyError(SphereMemError):
    """Mesh is not a closed, consistently oriented triangle surface."""


class SizeLimitError(SphereMemError):
    """Requested mesh exceeds the documented refinement cap."""


class GeometryError(SphereMemError):
    """Geometric precondition violated (projection, penetration, distance)."""


class ParameterError(SphereMemError):
    """Physical or numerical parameter outside its admissible range."""


class AssemblyError(SphereMemError):
    """Finite element assembly failed (e.g. degenerate triangle)."""


class RankDeficiencyError(SphereMemError):
    """Constraint block of a saddle system is numerically rank deficient."""

    def __init__(self, message, dependent_rows=None):
        super().__init__(message)
        self.dependent_rows = list(dependent_rows) if dependent_rows else []


class SolverError(SphereMemError):
    """Linear solve failed or did not meet its residual contract."""


class StepRejectedError(SphereMemError):
    """Gradient-flow step rejected because the energy increased."""

    def __init__(self, message, energy_before=None, energy_after=None, suggested_tau=None):
        super().__init__(message)
        self.energy_before = energy_before
        self.energy_after = energy_after
        self.suggested_tau = suggested_tau


class ConfigError(SphereMemError):
    """Malformed run configuration (unknown keys, missing sections)."""
