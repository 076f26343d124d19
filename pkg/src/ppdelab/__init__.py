"""ppdelab: a numerical laboratory for path-dependent PDEs.

Discrete path space and functional calculus, nonlinear expectations over
bounded-characteristic control families, optimal stopping on control-noise
trees, viscosity-solution checking, and four constructive solution schemes
(BSDE regression, HJB lattice, first-order control, hitting-time envelopes),
validated against closed-form solutions.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
