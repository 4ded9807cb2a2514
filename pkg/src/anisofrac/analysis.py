"""Limit-verification experiments: crack extraction with certificates,
recovery construction, slicing lower bounds and convergence sweeps.

The extraction implements the constructive lower-bound argument: threshold
the truncated non-local bulk field, dilate in the gauge metric, select a
level set of controlled discrete perimeter, and mollify the displacement off
it.  Its three inequalities (area, perimeter, bulk) are evaluated from the
computed quantities themselves, so a passing run is a numeric certificate.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ConvexBody, gauge, gauge_distance, check_direction, chord_length
from .kernels import core_mass, truncate, kernel_stencil
from .fields import (GridDomain, GridField, PiecewiseSmoothField, averaged_section,
                     correlate_same, diff_axis, rasterize, sym_gradient)
from .energy import (EnergyModel, affine_minorant, nonlocal_bulk_field,
                     nonlocal_energy)

__all__ = [
    "ExtractionParams",
    "ExtractionResult",
    "SweepReport",
    "bulk_field",
    "extract_crack",
    "build_recovery",
    "richardson",
    "convergence_sweep",
    "slicing_check",
    "default_interior_mask",
]


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("ANISO_THREADS", "1")))
    except ValueError:
        return 1


def default_interior_mask(model: EnergyModel, grid: GridDomain, eps: float) -> np.ndarray:
    """Nodes whose eps-stencil fits inside the grid, shrunk one extra cell.

    The compactly-contained evaluation region used when no mask is given:
    the gap to the boundary is the discrete stencil extent (about
    eps * circumradius) plus one cell.
    """
    stencil = kernel_stencil(model.kernel, grid.spacing, eps)
    margin = (stencil.shape[0] // 2 + 1) * grid.spacing
    return grid.interior_mask(margin)


def bulk_field(model: EnergyModel, u: GridField, eps: float,
               variant: str = "plain", mask=None,
               delta: float | None = None, eta: float | None = None) -> np.ndarray:
    """Inner non-local bulk average, plain or with the truncated kernel.

    ``plain`` uses the model kernel at scale eps; ``truncated`` removes the
    eta-core and rescales to (1 - delta) * eps, the combination entering the
    thresholding step of the extraction.
    """
    if variant == "plain":
        return nonlocal_bulk_field(model, u, eps, mask)
    if variant != "truncated":
        raise ValueError(f"unknown variant {variant!r}")
    if delta is None or eta is None:
        raise ValueError("truncated variant requires delta and eta")
    trunc = truncate(model.kernel, eta)
    return nonlocal_bulk_field(model, u, eps, mask, kernel=trunc,
                               scale=(1.0 - delta) * eps)


# ---------------------------------------------------------------------------
# Banded gauge distance on grids
# ---------------------------------------------------------------------------

def _banded_distance(body: ConvexBody, grid: GridDomain, targets: np.ndarray,
                     cap: float) -> np.ndarray:
    """Gauge distance of every node to the target points, +inf beyond cap.

    Values at or below ``cap`` are exact: any target realizing a gauge
    distance <= cap lies within Euclidean distance cap * circumradius, so a
    KD-tree query prunes the exact evaluation to that band.
    """
    centers = grid.centers()
    out = np.full(grid.n_nodes, np.inf)
    if len(targets) == 0:
        return out.reshape(grid.shape)
    tree = cKDTree(targets)
    d_euc, _ = tree.query(centers, k=1)
    cand = d_euc <= cap * body.circumradius * (1.0 + 1e-9)
    if np.any(cand):
        out[cand] = gauge_distance(body, centers[cand], targets)
    return out.reshape(grid.shape)


def _mask_perimeter(mask: np.ndarray, spacing: float) -> float:
    """Manhattan perimeter: boundary faces times the cell size.

    Faces against the grid exterior count as boundary; overestimates the
    continuum perimeter by at most sqrt(2), conservative for certificates.
    """
    if mask.ndim == 1:
        edges = int(np.sum(mask[:-1] != mask[1:])) + int(mask[0]) + int(mask[-1])
        return float(edges)
    edges = int(mask[0, :].sum() + mask[-1, :].sum() + mask[:, 0].sum() + mask[:, -1].sum())
    edges += int(np.sum(mask[:-1, :] != mask[1:, :]))
    edges += int(np.sum(mask[:, :-1] != mask[:, 1:]))
    return edges * spacing


# ---------------------------------------------------------------------------
# Crack extraction with certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtractionParams:
    """Parameters of the lower-bound extraction."""

    delta: float = 0.3
    eta: float = 0.3
    levels: int = 16

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0 or not 0.0 < self.eta < 1.0:
            raise ValueError("delta and eta must lie in (0, 1)")
        if self.levels < 16:
            raise ValueError("level scan needs at least 16 candidates")


@dataclass
class ExtractionResult:
    """Masks, selected level, mollified field and the three certificates."""

    threshold_mask: np.ndarray
    dilated_mask: np.ndarray
    chosen_level: float
    v_field: GridField
    perimeter_estimate: float
    certified: dict
    constants: dict
    energy: float

    @property
    def all_certified(self) -> bool:
        return all(self.certified.values())


def extract_crack(model: EnergyModel, u: GridField, eps: float,
                  params: ExtractionParams, mask=None) -> ExtractionResult:
    """Threshold-dilate-select-mollify lower-bound construction.

    Certificates (all computed from the discrete quantities themselves):

    * area: measure of the gauge-dilated threshold set is at most
      (eps / b) * F_eps;
    * perimeter: the selected level set has discrete perimeter at most
      F_eps / (eta * delta * b);
    * bulk: alpha (1-sigma)^2 (1-delta)^(2n+1) times the bulk integral of
      the mollified strain off the selected set is at most F_eps.

    The bulk integral uses the mollified strain (the convolution of the
    strain field), which coincides with the strain of the mollified field
    away from the grid boundary; differentiating across the zeroed set would
    instead pick up the mask boundary, which the construction excludes.
    """
    dom = u.domain
    n = dom.dimension
    h = dom.spacing
    delta, eta = params.delta, params.eta
    if mask is None:
        mask = default_interior_mask(model, dom, eps)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty evaluation mask")
    reach = delta * eta * eps
    if reach < 2.0 * h:
        raise ValueError("extraction under-resolved")

    if model.f.kind == "min_affine":
        a, b = model.f.alpha, model.f.beta
    else:
        a, b = affine_minorant(model.f, delta)
    sigma = core_mass(model.kernel, eta)
    c_const = 1.0 / ((1.0 - delta) ** n * (1.0 - sigma))

    trunc = truncate(model.kernel, eta)
    psi_tr = nonlocal_bulk_field(model, u, eps, mask, kernel=trunc,
                                 scale=(1.0 - delta) * eps)
    threshold_mask = mask & (psi_tr >= c_const * b / a)

    centers = dom.centers().reshape(dom.shape + (n,))
    targets = centers[threshold_mask].reshape(-1, n)
    dist = _banded_distance(model.kernel.body, dom, targets, reach)

    levels = reach * (2.0 * np.arange(1, params.levels + 1) - 1.0) / (2.0 * params.levels)
    best_level, best_perim, best_mask = None, np.inf, None
    for t in levels:
        m_t = mask & (dist <= t)
        perim = _mask_perimeter(m_t, h)
        if perim < best_perim - 1e-15:
            best_level, best_perim, best_mask = float(t), perim, m_t
    dilated_mask = best_mask

    stencil = kernel_stencil(trunc, h, (1.0 - delta) * eps)
    v_vals = np.stack([correlate_same(u.values[..., c], stencil)
                       for c in range(u.ncomp)], axis=-1)
    v_vals[dilated_mask] = 0.0
    v_field = GridField(dom, v_vals)

    energy = nonlocal_energy(model, u, eps, mask)
    slack = 1.0 + 1e-9

    wide_mask = mask & (dist <= reach)
    area = float(wide_mask.sum()) * dom.cell_measure
    area_ok = area <= (eps / b) * energy * slack + 1e-15

    perimeter_ok = best_perim <= energy / (eta * delta * b) * slack + 1e-15

    strain = sym_gradient(u) * mask[..., None, None]
    moll_strain = np.stack([correlate_same(strain[..., i, j], stencil)
                            for i in range(n) for j in range(n)], axis=-1)
    moll_strain = moll_strain.reshape(dom.shape + (n, n))
    bulk_vals = model.W.value(moll_strain)
    bulk_int = float(bulk_vals[mask & ~dilated_mask].sum()) * dom.cell_measure
    bulk_const = model.f.alpha * (1.0 - sigma) ** 2 * (1.0 - delta) ** (2 * n + 1)
    bulk_ok = bulk_const * bulk_int <= energy * slack + 1e-15

    return ExtractionResult(
        threshold_mask=threshold_mask,
        dilated_mask=dilated_mask,
        chosen_level=best_level,
        v_field=v_field,
        perimeter_estimate=best_perim,
        certified={"area_bound_ok": bool(area_ok),
                   "perimeter_bound_ok": bool(perimeter_ok),
                   "bulk_bound_ok": bool(bulk_ok)},
        constants={"sigma_eta": float(sigma), "dilation_constant": float(c_const),
                   "perimeter_constant": float(1.0 / (eta * delta * b)),
                   "a": float(a), "b": float(b),
                   "area": area, "bulk_integral": bulk_int},
        energy=energy,
    )


# ---------------------------------------------------------------------------
# Recovery construction
# ---------------------------------------------------------------------------

def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def build_recovery(model: EnergyModel, u: PiecewiseSmoothField, grid: GridDomain,
                   eps: float, gamma: float | None = None,
                   band: float | None = None) -> GridField:
    """Cutoff recovery field u * (1 - phi) around the jump polyline.

    ``phi`` is a quintic smoothstep of the gauge distance to the jump,
    equal to one within distance gamma and zero beyond gamma + band.  Both
    gamma (default eps^2) and the band width (default gamma) are small
    compared to eps, so the region where the field is modified has measure
    of lower order than the saturated neighborhood and the energy of the
    recovery approaches the limit surface term.

    The jump must keep its cutoff band inside the domain except where the
    polyline itself reaches the boundary (a crack crossing the full strip).
    """
    if u.jump is None:
        return rasterize(u, grid)
    if gamma is None:
        gamma = eps * eps
    if band is None:
        band = gamma
    if gamma > 0.2 * eps:
        raise ValueError("cutoff offset gamma must satisfy gamma <= eps / 5")
    body = model.kernel.body
    pts = u.jump.sample(grid.spacing / 2.0)
    reach = gamma + band
    dist = _banded_distance(body, grid, pts, max(reach, grid.spacing) * 1.5)
    raster = rasterize(u, grid)

    inner = dist <= reach
    if inner.any():
        ring = np.zeros(grid.shape, dtype=bool)
        ring[0, :] = ring[-1, :] = True
        ring[:, 0] = ring[:, -1] = True
        touching = inner & ring
        if touching.any():
            centers = grid.centers().reshape(grid.shape + (2,))
            bad = centers[touching].reshape(-1, 2)
            near = u.jump.distance(bad)
            # allowed only where the polyline itself exits the domain
            lo, hi = np.array(grid.lo), np.array(grid.hi)
            edge_gap = np.minimum((bad - lo).min(axis=1), (hi - bad).min(axis=1))
            if np.any(near > edge_gap + 2.0 * grid.spacing):
                raise ValueError("recovery requires interior jump")
    phi = _smoothstep(1.0 - (dist - gamma) / band)
    phi[~np.isfinite(dist)] = 0.0
    return GridField(grid, raster.values * (1.0 - phi[..., None]))


# ---------------------------------------------------------------------------
# Convergence sweeps
# ---------------------------------------------------------------------------

def richardson(eps_values, energies) -> tuple[float, float]:
    """Least-squares fit E = E* + C eps over the last three points."""
    e = np.asarray(eps_values, dtype=float)[-3:]
    v = np.asarray(energies, dtype=float)[-3:]
    design = np.stack([np.ones_like(e), e], axis=1)
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return float(coef[0]), float(coef[1])


@dataclass
class SweepReport:
    """Per-eps energies, the extrapolated limit and the target gap."""

    eps_values: list
    h_values: list
    energies: list
    target: float
    extrapolated: float

    def __post_init__(self):
        e = np.asarray(self.eps_values)
        if np.any(np.diff(e) >= 0):
            raise ValueError("eps values must be strictly decreasing")
        if not np.all(np.isfinite(self.energies)):
            raise ValueError("sweep produced non-finite energies")

    @property
    def rel_gap(self) -> float:
        return abs(self.extrapolated - self.target) / max(abs(self.target), 1e-300)

    def rows(self):
        for e, h, val in zip(self.eps_values, self.h_values, self.energies):
            yield {"eps": e, "h_grid": h, "F_eps": val,
                   "limit_target": self.target,
                   "rel_gap": abs(val - self.target) / max(abs(self.target), 1e-300)}


def convergence_sweep(model: EnergyModel, scenario, eps_values) -> SweepReport:
    """Evaluate a scenario over a decreasing eps list and extrapolate.

    Per-eps tasks are independent and run on a thread pool capped by the
    ANISO_THREADS environment variable (default 1); results are merged in
    eps order, so reports are identical at any thread count.
    """
    eps_values = [float(e) for e in eps_values]
    workers = min(_thread_count(), len(eps_values))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda e: scenario.evaluate(model, e), eps_values))
    else:
        results = [scenario.evaluate(model, e) for e in eps_values]
    energies = [r[0] for r in results]
    h_values = [r[1] for r in results]
    target = float(scenario.target(model))
    extrapolated, _ = richardson(eps_values, energies)
    return SweepReport(eps_values, h_values, energies, target, extrapolated)


# ---------------------------------------------------------------------------
# Slicing lower bound
# ---------------------------------------------------------------------------

def slicing_check(model: EnergyModel, u: GridField, eps: float, xi,
                  delta: float = 0.3, mask=None, tol: float = 1e-9) -> dict:
    """Verify the sliced lower bound F_eps(u, A) >= transverse sum - tol.

    Reduces the energy along direction xi: inside the body a cylinder of
    half-length (1 - delta) * chord / 2 and radius delta * inradius is
    inscribed, the kernel is bounded below by its minimum on the cylinder,
    and each transverse-averaged 1D section contributes a window energy.
    The report carries both sides and the construction constants.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    xi = check_direction(xi)
    dom = u.domain
    body = model.kernel.body
    h = dom.spacing
    if mask is None:
        mask = default_interior_mask(model, dom, eps)
    mask = np.asarray(mask, dtype=bool)

    eta_ball = body.inradius * (1.0 - 1e-9)
    if eta_ball <= 0:
        raise ValueError("degenerate body: no inscribed ball")
    r = delta * eta_ball
    tau = float(chord_length(body, xi))
    lam = 0.5 * tau * (1.0 - delta)

    # minimum kernel density on the closed inscribed cylinder
    perp = np.array([-xi[1], xi[0]])
    ax = np.linspace(-lam, lam, 41)
    tr = np.linspace(-r, r, 17)
    cyl = ax[:, None, None] * xi[None, None, :] + tr[None, :, None] * perp[None, None, :]
    gmax = float(np.max(gauge(body, cyl.reshape(-1, 2))))
    if gmax >= 1.0:
        raise ValueError("degenerate body: inscribed cylinder escapes the support")
    m_cyl = float(np.min(model.kernel.density(cyl.reshape(-1, 2))))

    c_coerc = model.W.coercivity(dom.dimension)
    omega = 2.0 * r  # measure of the transverse 1D ball of radius r

    def g_of(t):
        return model.f.value(c_coerc * m_cyl * omega * np.asarray(t))

    # transverse offsets covering the grid at the node spacing
    corners = np.array([dom.lo, dom.hi,
                        (dom.lo[0], dom.hi[1]), (dom.hi[0], dom.lo[1])], dtype=float)
    s_vals = corners @ perp
    offsets = np.arange(s_vals.min() + h, s_vals.max() - h, h)
    center = 0.5 * (np.array(dom.lo) + np.array(dom.hi))
    t_center = float(center @ xi)

    centers = dom.centers().reshape(dom.shape + (2,))
    lo = np.array(dom.lo)

    def in_mask(points):
        idx = np.clip(((points - lo) / h - 0.5).round().astype(int), 0,
                      np.array(dom.shape) - 1)
        return mask[idx[:, 0], idx[:, 1]]

    rhs = 0.0
    half = lam * eps
    for s in offsets:
        y0 = center - t_center * xi + (s - center @ perp) * perp
        try:
            sl = averaged_section(u, xi, y0, r * eps)
        except ValueError:
            continue
        k_half = int(np.floor(half / h + 0.5))
        if k_half < 1 or len(sl.samples) < max(3, 2 * k_half + 1):
            continue  # skipping short slices only lowers the bound
        dw = diff_axis(sl.samples, 0, h)
        window = np.abs(dw) ** model.W.p
        kern = np.ones(2 * k_half + 1)
        kern[0] = kern[-1] = 0.5
        integ = np.convolve(window, kern, mode="same") * h
        vals = g_of(integ) / eps
        pts = y0[None, :] + sl.t[:, None] * xi[None, :]
        keep = in_mask(pts)
        rhs += float(vals[keep].sum()) * h * h

    lhs = nonlocal_energy(model, u, eps, mask)
    return {"lhs": lhs, "rhs": rhs, "pass": bool(lhs >= rhs - tol),
            "r": r, "m_cyl": m_cyl, "tau_xi": tau, "lambda": lam,
            "coercivity": c_coerc}
