"""TAP free-energy variational inference for Z2 synchronization.

Library + CLI covering: instance generation and the exact small-n posterior,
TAP / mean-field objectives and solvers (AMP with spectral initialization,
descent plus Newton refinement, multistart critical-point census), the
annealed-complexity functional and its starred fixed point, the 1RSB
ground-state bound, and the free-convolution spectral law of the conditional
Hessian.
"""

__version__ = "0.1.0"

from .numerics import RngStream, Quadrature, gauss_hermite  # noqa: F401
from .model import Instance, generate, exact_posterior, matrix_mse, mmse_asymptote  # noqa: F401
from .free_energy import TapContext, Magnetization, tap_value, tap_gradient  # noqa: F401
from .complexity import solve_q_star, s_star, s0_star, ground_state_bound  # noqa: F401
