"""Particle-method solver and verification suite for a kernel-regularized
thin-film droplet-spreading equation.

The free-surface height is a positive measure transported by a velocity
field built from a bi-Helmholtz smoothing kernel; weighted point masses
("particles") then obey a closed ODE system that this package integrates,
reconstructs fields from, and verifies against the quantitative guarantees
of the underlying theory (ordering preservation, gap envelopes, speed
bounds, weak-form consistency, measure-discretization convergence).
"""

from .kernel import KernelConstants, constants, eval_K, eval_K3_signed, \
    eval_K_deriv
from .measure import (DensityPiece, DiscreteMeasure, InitialMeasure,
                      bl_distance, build_grid, discretize, droplet_parabola,
                      gamma, lambda_)
from .dynamics import VelocityEval, velocity_direct, velocity_fast
from .integrator import (IntegrationFailure, ParticleState, StepRejected,
                         Trajectory, envelope_check, simulate, step)
from .fields import (FieldSample, h3_norm, h3_norm_diff, holder_report,
                     sample_fields, surface_energy)
from .verify import (BumpTestFunction, convergence_study, run_verification,
                     splitting_experiment, weak_residual)

__version__ = "0.1.0"
