"""Gradient descent with Armijo backtracking for the smooth non-local energy.

Minimizes the fidelity-augmented energy (or the plain one when no fidelity
term is configured) under Dirichlet data, either by hard projection onto the
constrained nodes or by a quadratic penalty.  The energy is non-convex
through the transition function, so crack nucleation is seeded by the
initial field; the solver demonstrates branch selection, not global
optimality.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fields import GridDomain, GridField
from .energy import EnergyModel, fidelity_energy, nonlocal_energy, nonlocal_gradient

__all__ = ["LoadCase", "SolveReport", "minimize"]


@dataclass(frozen=True)
class LoadCase:
    """Dirichlet data: node mask and prescribed displacements.

    ``penalty`` of None enforces the data exactly (projected descent);
    a positive value adds kappa * |u - g|^2 integrated over the constrained
    nodes instead.
    """

    boundary_mask: np.ndarray
    values: np.ndarray
    penalty: float | None = None

    def __post_init__(self):
        if not np.asarray(self.boundary_mask, dtype=bool).any():
            raise ValueError("boundary mask must be nonempty")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("prescribed displacements must be finite")
        if self.penalty is not None and self.penalty <= 0:
            raise ValueError("penalty weight must be positive")

    @classmethod
    def edge(cls, grid: GridDomain, which: str, displacement, fixed=None,
             penalty: float | None = None) -> "LoadCase":
        """Clamp one edge at ``displacement`` and the opposite one at ``fixed``.

        ``which`` in {left, right, bottom, top} names the displaced edge for
        2D grids and {left, right} for intervals; the opposite edge is held
        at ``fixed`` (default zero).
        """
        n = grid.dimension
        ncomp = n
        mask = np.zeros(grid.shape, dtype=bool)
        vals = np.zeros(grid.shape + (ncomp,))
        disp = np.broadcast_to(np.asarray(displacement, dtype=float), (ncomp,))
        fix = np.zeros(ncomp) if fixed is None else \
            np.broadcast_to(np.asarray(fixed, dtype=float), (ncomp,))
        if which not in ("left", "right", "bottom", "top"):
            raise ValueError(f"unknown edge {which!r}")
        axis = 0 if which in ("left", "right") else 1
        if axis == 1 and n == 1:
            raise ValueError("1D grids only have left/right edges")
        idx_move = 0 if which in ("left", "bottom") else -1
        sl_move = [slice(None)] * n
        sl_move[axis] = idx_move
        sl_fix = [slice(None)] * n
        sl_fix[axis] = -1 if idx_move == 0 else 0
        mask[tuple(sl_move)] = True
        mask[tuple(sl_fix)] = True
        vals[tuple(sl_move)] = disp
        vals[tuple(sl_fix)] = fix
        return cls(mask, vals, penalty)


@dataclass
class SolveReport:
    iterations: int
    energy: float
    energies: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False


def minimize(model: EnergyModel, eps: float, load: LoadCase, init: GridField,
             max_iter: int = 2000, grad_tol: float = 1e-6,
             armijo_c1: float = 1e-4, shrink: float = 0.5) -> tuple[GridField, SolveReport]:
    """Projected (or penalized) gradient descent with Armijo backtracking.

    Steps are accepted only when they decrease the energy by the Armijo
    margin, so the energy history is nonincreasing; terminates when the free
    gradient norm falls below grad_tol relative to its initial value.
    """
    if not model.f.smooth:
        raise ValueError("non-smooth transition; use exp_saturating for minimization")
    dom = init.domain
    bmask = np.asarray(load.boundary_mask, dtype=bool)
    hard = load.penalty is None
    u = init.values.copy()
    if hard:
        u[bmask] = load.values[bmask]

    with_fidelity = model.psi is not None

    def energy_of(vals):
        f = GridField(dom, vals)
        e = fidelity_energy(model, f, eps) if with_fidelity else nonlocal_energy(model, f, eps)
        if not hard:
            diff = (vals - load.values)[bmask]
            e += load.penalty * float(np.sum(diff * diff)) * dom.cell_measure
        return e

    def gradient_of(vals):
        g = nonlocal_gradient(model, GridField(dom, vals), eps,
                              include_fidelity=with_fidelity)
        if hard:
            g[bmask] = 0.0
        else:
            g[bmask] += 2.0 * load.penalty * (vals - load.values)[bmask] * dom.cell_measure
        return g

    t0 = time.time()
    e = energy_of(u)
    if not np.isfinite(e):
        raise ValueError("divergence; reduce step")
    g = gradient_of(u)
    g0 = float(np.linalg.norm(g))
    report = SolveReport(0, e, [e], [g0])
    if g0 == 0.0:
        report.converged = True
        report.wall_time = time.time() - t0
        return GridField(dom, u), report

    step = 1.0
    for it in range(1, max_iter + 1):
        gnorm2 = float(np.sum(g * g))
        gnorm = np.sqrt(gnorm2)
        if gnorm <= grad_tol * max(1.0, g0):
            report.converged = True
            break
        accepted = False
        while step > 1e-16:
            trial = u - step * g
            e_trial = energy_of(trial)
            if not np.isfinite(e_trial):
                raise ValueError("divergence; reduce step")
            if e_trial <= e - armijo_c1 * step * gnorm2:
                accepted = True
                break
            step *= shrink
        if not accepted:
            break
        u, e = trial, e_trial
        g = gradient_of(u)
        report.iterations = it
        report.energies.append(e)
        report.grad_norms.append(float(np.linalg.norm(g)))
        step *= 2.0

    report.energy = e
    report.wall_time = time.time() - t0
    return GridField(dom, u), report
