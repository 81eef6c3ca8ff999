"""Size estimation of seabed cavities from free-surface wave measurements.

The toolkit solves the mixed Dirichlet/Neumann potential problems on
vertical-slice fluid domains with variable bottoms, assembles the surface
Dirichlet-to-Neumann operator, and evaluates the boundary measurement
functionals that bound the area of the region enclosed between two candidate
bottoms, from below and above, together with the exact identities tying
those functionals to volumetric energies.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .errors import (
    ConfigurationError,
    DegenerateCavityError,
    DegenerateDataError,
    FitError,
    GeometryError,
    NumericalError,
    SingularSystemError,
    StateError,
    ToolkitError,
)
from .geometry import (
    CavityDescription,
    FatnessResult,
    FluidDomain,
    HypothesisReport,
    Profile,
    fatness_ratio,
    hypothesis_report,
    region_measure,
)
from .mesh import (
    ALL_TAGS,
    TAG_BOTTOM,
    TAG_TOP,
    TAG_WALL_LEFT,
    TAG_WALL_RIGHT,
    Mesh,
    build_mesh,
)
from .solver import (
    ScalarField,
    SurfaceTrace,
    boundary_flux,
    energy,
    solve_potential,
    surface_pairing,
    surface_trace,
    total_boundary_raw_flux,
)
from .dtn import DtNMatrix, assemble_dtn, dtn_spectrum, vertical_velocity
from .functionals import (
    MeasurementSet,
    SizeEstimateReport,
    caseI_lower,
    caseI_upper,
    caseII_lower,
    caseII_upper_measurables,
    caseIII_upper_measurables,
    identity_residuals,
    log_stability_curve,
    measurements,
    poincare_check,
    smallness_propagation_check,
)
from .harness import (
    FitResult,
    SweepPlan,
    convergence_study,
    fit_constants,
    make_bottom,
    make_datum,
    run_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
