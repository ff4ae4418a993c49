"""First-passage-time densities of planar Brownian motion through smooth
moving boundaries.

The boundary density solves a second-kind Volterra integral equation whose
kernel is the normal derivative of the Gaussian heat kernel on the lateral
boundary; the killed transition density, survival probabilities and mass
balance follow from it, and an independent path simulator cross-checks the
whole pipeline.
"""

__version__ = "0.1.0"

from . import analytic, errors, geometry, kernels, montecarlo, scenarios, survival, volterra
from .geometry import (
    BoundaryGrid,
    BoundarySlice,
    FlowMap,
    MovingDomain,
    ReferenceBoundary,
    VelocityField,
    circle,
    composite_field,
    ellipse,
    flat_capsule,
    rotation_field,
    scaling_field,
    smooth_star,
    translation_field,
    zero_field,
)
from .montecarlo import McConfig, McResult, ks_compare, simulate
from .scenarios import Scenario, bundled_scenario_names, load_scenario
from .survival import (
    InteriorGrid,
    KilledHeatEvaluator,
    SurvivalCurve,
    fpt_cdf,
    green_function,
    mass_balance,
    survival_curve,
    survival_prob,
    u_field,
)
from .volterra import (
    DensitySolution,
    SolverConfig,
    SourceSpec,
    delta_convergence_study,
    residual,
    solve,
)

__all__ = [name for name in dir() if not name.startswith("_")]
