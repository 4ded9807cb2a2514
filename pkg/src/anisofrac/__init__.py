"""Non-local convolution approximations of anisotropic brittle-fracture energies.

Evaluation of the rescaled non-local energies and their limit functional,
kernel construction and validation, lower-bound crack extraction with
numeric certificates, recovery-sequence construction, slicing checks,
convergence sweeps and a gradient-descent minimizer, driven by a small
config-file CLI.
"""

from .geometry import (ConvexBody, JumpPolyline, JumpSegment, gauge, support,
                       surface_density, chord_length, gauge_distance,
                       aniso_neighborhood, minkowski_content, unit_vector)
from .kernels import (Kernel, KernelProfile, TruncatedKernel, make_kernel,
                      core_mass, truncate, validate_kernel, kernel_stencil,
                      stencil_mass)
from .fields import (GridDomain, GridField, Piece, PiecewiseSmoothField, Slice,
                     sym_gradient, mollify, mollify_tensor, rasterize, section,
                     section_on_grid, averaged_section)
from .energy import (BulkDensity, TransitionFunction, FidelityTerm, EnergyModel,
                     LimitEnergy, nonlocal_bulk_field, nonlocal_energy,
                     fidelity_energy, limit_energy, energy_1d, affine_minorant,
                     minorant_energy, nonlocal_gradient)
from .analysis import (ExtractionParams, ExtractionResult, SweepReport,
                       bulk_field, extract_crack, build_recovery, richardson,
                       convergence_sweep, slicing_check, default_interior_mask)
from .solver import LoadCase, SolveReport, minimize

__version__ = "0.1.0"
