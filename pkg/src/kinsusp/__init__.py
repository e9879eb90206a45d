"""kinsusp: a pseudo-spectral stability laboratory for dilute active suspensions.

Simulates the kinetic model for rodlike swimmers on the periodic box times
the orientation sphere, and measures its linear-stability threshold,
enhanced-dissipation and mixing decay rates, hypocoercive energy
inequalities, and Volterra-kernel resolvents at desk scale.
"""

__version__ = "0.1.0"

from . import hypo, integrator, operators, sphere, state, volterra  # noqa: F401
from .sphere import SphField, SphGrid, TangentField, grid_for_band  # noqa: F401
from .state import (  # noqa: F401
    FlowField,
    KineticState,
    Params,
    SpectrumProfile,
    flow_norm,
    random_state,
    sobolev_norm,
)
from .integrator import RunConfig, evolve, solve_single_mode, step  # noqa: F401
from .volterra import critical_constants  # noqa: F401
