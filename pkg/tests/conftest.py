import numpy as np
import pytest

from acoustic_shape.adjoint import POTENTIAL_TRACKING, CostFunctionalSpec, focal_indicator
from acoustic_shape.geometry import build_structured_mesh
from acoustic_shape.discretize import FeSpace
from acoustic_shape.state import BoundaryExcitation, GaussianSpot, ModelParams, RampedSine


@pytest.fixture(scope="session")
def small_disk():
    return build_structured_mesh("disk", 6)


@pytest.fixture(scope="session")
def small_problem(small_disk):
    """Linear tracking problem on a 6-ring disk, 80 steps on [0, 1.6]."""
    mesh = small_disk
    space = FeSpace(mesh)
    params = ModelParams.linear(1.0, 0.3)
    g = BoundaryExcitation(GaussianSpot((-1.0, 0.0), 0.6), RampedSine(0.05, 1.0))
    fv, chi = focal_indicator(mesh, (0.0, 0.0), 0.3)
    N = 80
    spec = CostFunctionalSpec(POTENTIAL_TRACKING, fv, chi, (0.0, 1.6),
                              target=np.full((N + 1, mesh.n_vertices), 0.01))
    return dict(mesh=mesh, space=space, params=params, g=g, spec=spec, T=1.6, N=N)
