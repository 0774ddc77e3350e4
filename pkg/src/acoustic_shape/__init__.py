"""Shape optimization for nonlinear acoustic wave models by the method of mappings."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AcousticShapeError,
    BlowUpError,
    ConfigError,
    DegeneracyError,
    DeformationTooLarge,
    MeshError,
    NonConvergence,
    SupportError,
)
from .geometry import (  # noqa: E402
    BoundaryGeometry,
    DeformationField,
    Mesh,
    build_structured_mesh,
    compute_boundary_geometry,
    make_bump_field,
    make_ring_field,
)
from .state import BoundaryExcitation, ModelParams, solve_state  # noqa: E402
