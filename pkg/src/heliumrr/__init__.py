"""Planar two-electron atom with radiation reaction.

Backward-time integration onto the nonrunaway manifold and estimation of
the natural invariant density on the zero-dipole manifold, reduced to the
(E, M) plane of mechanical energy and angular momentum.
"""

__version__ = "0.1.0"

from .dynamics import (FieldMode, LabState, Params, PhaseState,
                       angular_momentum, cm_from_lab, coulomb_pair_terms,
                       lab_from_cm, mechanical_energy, total_energy,
                       vec2, vector_field)
from .errors import (CollisionError, DegenerateFace, DegenerateOrbit,
                     NoConvergence, UnboundOrbit)
from .integrator import (Direction, StopReason, TrajectorySample,
                         adaptive_step, integrate, rk4_step)
from .kepler import (ManifoldPoint, OrbitElements, analytic_orbit,
                     elements_from_state, manifold_reduction_constants,
                     sample_initial_conditions)
from .measure import (DensityRecord, DensityRunConfig, Hypercube,
                      SpectralResult, face_log_area, gram_matrix, make_cube,
                      point_density, renormalize, symmetric_eigen)
