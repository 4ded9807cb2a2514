"""Reference scenarios shared by the experiments, the CLI and the test suite.

Each scenario bundles a field construction at a given window scale eps with
the closed-form limit value it should approach, so convergence sweeps can
compare against an independent target.  Grids are regenerated per eps at a
fixed cells-per-eps resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .geometry import ConvexBody, JumpPolyline, surface_density
from .fields import GridDomain, GridField, Piece, PiecewiseSmoothField, rasterize
from .energy import EnergyModel, energy_1d, nonlocal_energy

__all__ = [
    "OneDJump",
    "OneDElastic",
    "JumpStrip2D",
    "jump_strip_geometry",
    "strip_jump_field",
    "ramp_band_field",
    "random_smooth_field",
]


@dataclass(frozen=True)
class OneDJump:
    """Unit jump at an interior point, recovered by ramps of width ramp(eps).

    The default ramp width eps^3 is far below the grid spacing, so the
    rasterized recovery is a one-cell jump; the window energy saturates on a
    2*eps neighborhood and approaches twice the saturation level.
    """

    cells_per_eps: int = 64
    position: float = 0.5
    amplitude: float = 1.0
    ramp_exponent: float = 3.0

    def evaluate(self, model: EnergyModel, eps: float) -> tuple[float, float]:
        cells = int(round(self.cells_per_eps / eps))
        dom = GridDomain.interval(0.0, 1.0, cells)
        x = dom.axis(0)
        w = eps ** self.ramp_exponent
        u = self.amplitude * np.clip((x - self.position) / w + 0.5, 0.0, 1.0)
        return energy_1d(model, u, eps), dom.spacing

    def target(self, model: EnergyModel) -> float:
        return 2.0 * model.f.beta


@dataclass(frozen=True)
class OneDElastic:
    """Affine displacement u(x) = slope * x on the unit interval."""

    cells_per_eps: int = 64
    slope: float = 1.0

    def evaluate(self, model: EnergyModel, eps: float) -> tuple[float, float]:
        cells = int(round(self.cells_per_eps / eps))
        dom = GridDomain.interval(0.0, 1.0, cells)
        u = self.slope * dom.axis(0)
        return energy_1d(model, u, eps), dom.spacing

    def target(self, model: EnergyModel) -> float:
        return model.f.alpha * abs(self.slope) ** model.W.p


def jump_strip_geometry(eps: float, cells_per_eps: int, reach: float,
                        length: float = 1.0, axis: int = 1,
                        height_pad: float = 1.25) -> GridDomain:
    """Thin strip grid around a straight crack spanning the full width.

    ``reach`` is the gauge chord of the body along the crack normal (how far
    the saturated band extends, in units of eps); the strip half-height is
    height_pad * reach * eps so the whole transition fits with margin while
    the node budget stays quadratic in cells_per_eps only.
    """
    h = eps / cells_per_eps
    n_long = int(round(length / h))
    n_perp = 2 * max(8, int(np.ceil(height_pad * reach * eps / h)))
    if axis == 1:
        return GridDomain((0.0, -(n_perp // 2) * h), h, (n_long, n_perp))
    return GridDomain((-(n_perp // 2) * h, 0.0), h, (n_perp, n_long))


def strip_jump_field(amplitude: float, length: float = 1.0, axis: int = 1) -> PiecewiseSmoothField:
    """Piecewise-constant opening across the segment {x_axis = 0}.

    The displacement jumps by ``amplitude`` along the crack normal (axis
    ``axis``), zero strain on both sides.
    """
    normal = np.zeros(2)
    normal[axis] = 1.0
    if axis == 1:
        seg = JumpPolyline([((0.0, 0.0), (length, 0.0), normal)])
    else:
        seg = JumpPolyline([((0.0, 0.0), (0.0, length), normal)])

    def make_piece(sign):
        def indicator(p, s=sign):
            return s * p[:, axis] > 0

        def value(p, s=sign):
            out = np.zeros((len(p), 2))
            if s > 0:
                out[:, axis] = amplitude
            return out

        def grad(p):
            return np.zeros((len(p), 2, 2))

        return Piece(indicator, value, grad)

    return PiecewiseSmoothField([make_piece(+1), make_piece(-1)], jump=seg)


def ramp_band_field(grid: GridDomain, width: float, amplitude: float = 1.0,
                    center: float = 0.5, axis: int = 0) -> GridField:
    """Steep ramp band of the given width across the domain (2D).

    The displacement component along ``axis`` ramps from 0 to ``amplitude``
    over a band of the given width; used as the crack-like input of the
    extraction experiments.
    """
    coord = grid.meshgrid()[axis]
    vals = np.zeros(grid.shape + (2,))
    vals[..., axis] = amplitude * np.clip((coord - center) / width + 0.5, 0.0, 1.0)
    return GridField(grid, vals)


def random_smooth_field(grid: GridDomain, seed: int, scale: float = 1.0,
                        smoothing: float = 2.0) -> GridField:
    """Seeded filtered-noise displacement field (battery input)."""
    rng = np.random.default_rng(seed)
    n = grid.dimension
    vals = rng.standard_normal(grid.shape + (n,))
    for c in range(n):
        vals[..., c] = gaussian_filter(vals[..., c], smoothing, mode="nearest")
    vals *= scale / max(np.abs(vals).max(), 1e-12)
    return GridField(grid, vals)


@dataclass(frozen=True)
class JumpStrip2D:
    """Recovery of a straight unit crack in a thin strip, one body shape.

    ``axis`` is the crack-normal axis (1: horizontal crack with normal e2).
    The recovery field is built by the anisotropic cutoff construction with
    a sub-grid band (gamma = eps^3), so the rasterized recovery carries a
    one-cell jump and the energy saturates on the gauge chord of the body.
    """

    body: ConvexBody
    axis: int = 1
    amplitude: float = 1.0
    cells_per_eps: int = 32
    length: float = 1.0
    gamma_exponent: float = 3.0
    height_pad: float = 1.25

    def normal(self) -> np.ndarray:
        e = np.zeros(2)
        e[self.axis] = 1.0
        return e

    def reach(self) -> float:
        # gauge distance 1 along the normal corresponds to this Euclidean reach
        from .geometry import gauge
        return 1.0 / float(gauge(self.body, self.normal()))

    def build(self, model: EnergyModel, eps: float):
        from .analysis import build_recovery
        grid = jump_strip_geometry(eps, self.cells_per_eps, self.reach(),
                                   self.length, self.axis, self.height_pad)
        u = strip_jump_field(self.amplitude, self.length, self.axis)
        gamma = eps ** self.gamma_exponent
        rec = build_recovery(model, u, grid, eps, gamma=gamma)
        return rec, grid

    def evaluate(self, model: EnergyModel, eps: float) -> tuple[float, float]:
        rec, grid = self.build(model, eps)
        return nonlocal_energy(model, rec, eps), grid.spacing

    def target(self, model: EnergyModel) -> float:
        return model.f.beta * self.length * float(
            surface_density(self.body, self.normal()))
