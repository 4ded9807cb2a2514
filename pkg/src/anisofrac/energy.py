"""Bulk densities, transition functions and the non-local energies.

The central object is the rescaled non-local functional

    F_eps(u, A) = (1/eps) * integral over A of
                  f( eps * integral over A of W(Eu(y)) rho_eps(x - y) dy ) dx

evaluated by midpoint sums on the grid, with the inner convolution clipped to
the evaluation mask (zero contribution from outside).  Alongside it live the
fidelity-augmented variant, the limit functional on piecewise-smooth fields,
the one-dimensional window energy, affine minorants of the transition
function and the exact adjoint gradient of the discrete energy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.signal import convolve

from .geometry import ConvexBody, surface_density
from .kernels import Kernel, KernelProfile, make_kernel, kernel_stencil, _KernelBase
from .fields import (GridDomain, GridField, PiecewiseSmoothField, correlate_same,
                     diff_axis_adjoint, sym_gradient)

__all__ = [
    "BulkDensity",
    "TransitionFunction",
    "FidelityTerm",
    "EnergyModel",
    "LimitEnergy",
    "nonlocal_bulk_field",
    "nonlocal_energy",
    "fidelity_energy",
    "limit_energy",
    "energy_1d",
    "affine_minorant",
    "minorant_energy",
    "nonlocal_gradient",
]


@dataclass(frozen=True)
class BulkDensity:
    """Convex bulk density W on symmetric matrices with p-growth.

    ``p_power`` is W(M) = |M|^p (Frobenius norm of the symmetric part);
    ``isotropic_elastic`` is the quadratic form mu |M|^2 + (lam/2) tr(M)^2
    with p fixed at 2.  The coercivity and growth constants are reported,
    not free parameters.
    """

    kind: str = "p_power"
    p: float = 2.0
    mu: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("p_power", "isotropic_elastic"):
            raise ValueError(f"unknown bulk density {self.kind!r}")
        if self.p <= 1:
            raise ValueError("bulk exponent must satisfy p > 1")
        if self.kind == "isotropic_elastic":
            if self.p != 2.0:
                raise ValueError("isotropic_elastic is quadratic (p = 2)")
            if self.mu <= 0 or self.lam < 0:
                raise ValueError("isotropic_elastic requires mu > 0, lam >= 0")

    def value(self, strain: np.ndarray) -> np.ndarray:
        """W evaluated on (..., n, n) symmetric matrices."""
        sq = np.einsum("...ij,...ij->...", strain, strain)
        if self.kind == "p_power":
            return sq ** (self.p / 2.0)
        tr = np.trace(strain, axis1=-2, axis2=-1)
        return self.mu * sq + 0.5 * self.lam * tr ** 2

    def deriv(self, strain: np.ndarray) -> np.ndarray:
        """dW/dM as a symmetric matrix field (zero at the origin)."""
        if self.kind == "p_power":
            sq = np.einsum("...ij,...ij->...", strain, strain)
            fac = np.where(sq > 0, self.p * sq ** (self.p / 2.0 - 1.0), 0.0)
            return fac[..., None, None] * strain
        tr = np.trace(strain, axis1=-2, axis2=-1)
        n = strain.shape[-1]
        return 2.0 * self.mu * strain + self.lam * tr[..., None, None] * np.eye(n)

    def coercivity(self, ndim: int = 2) -> float:
        """Reported c with c |M|^p <= W(M) on symmetric matrices."""
        if self.kind == "p_power":
            return 1.0
        return min(2.0 * self.mu, 2.0 * self.mu + ndim * self.lam) / 2.0

    def growth(self, ndim: int = 2) -> float:
        """Reported C with W(M) <= C (1 + |M|^p)."""
        if self.kind == "p_power":
            return 1.0
        return self.mu + 0.5 * ndim * self.lam


@dataclass(frozen=True)
class TransitionFunction:
    """Nondecreasing f with f(t)/t -> alpha at 0 and f -> beta at infinity.

    ``min_affine`` f(t) = min(alpha t, beta) matches the lower-bound
    arguments exactly; ``exp_saturating`` f(t) = beta (1 - exp(-alpha t /
    beta)) is smooth and is the one admissible for gradient minimization.
    """

    kind: str = "min_affine"
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("min_affine", "exp_saturating"):
            raise ValueError(f"unknown transition function {self.kind!r}")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")

    @property
    def smooth(self) -> bool:
        return self.kind == "exp_saturating"

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "min_affine":
            return np.minimum(self.alpha * t, self.beta)
        return self.beta * (-np.expm1(-self.alpha * t / self.beta))

    def deriv(self, t):
        if self.kind != "exp_saturating":
            raise ValueError("non-smooth transition; use exp_saturating for minimization")
        t = np.asarray(t, dtype=float)
        return self.alpha * np.exp(-self.alpha * t / self.beta)


@dataclass(frozen=True)
class FidelityTerm:
    """Lower-order fidelity density psi(s) = s^q with 1 < q."""

    q: float = 2.0

    def __post_init__(self):
        if self.q <= 1:
            raise ValueError("fidelity exponent must satisfy q > 1")

    def value(self, s):
        return np.asarray(s, dtype=float) ** self.q

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return self.q * s ** (self.q - 1.0)


@dataclass(frozen=True)
class EnergyModel:
    """The data (W, f, kernel, optional psi) of one energy family."""

    W: BulkDensity
    f: TransitionFunction
    kernel: Kernel
    psi: FidelityTerm | None = None

    def __post_init__(self):
        if self.psi is not None and self.psi.q > self.W.p + 1e-12:
            raise ValueError("fidelity exponent must not exceed the bulk exponent")


def _check_resolution(eps: float, spacing: float) -> None:
    if eps < 4.0 * spacing:
        raise ValueError("eps under-resolved")
    if eps < 16.0 * spacing:
        warnings.warn("fewer than 16 cells across eps; quantitative accuracy degrades",
                      stacklevel=3)


def _mask_array(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape)
    mask = np.asarray(mask)
    if mask.shape != shape:
        raise ValueError("mask shape does not match the grid")
    return mask.astype(float)


def nonlocal_bulk_field(model: EnergyModel, u: GridField, eps: float,
                        mask=None, kernel: _KernelBase | None = None,
                        scale: float | None = None) -> np.ndarray:
    """Inner non-local bulk average eps * sum of W(Eu) against the kernel.

    ``kernel`` and ``scale`` override the model kernel at scale eps (the
    truncated-kernel variants of the lower-bound construction use both).
    The sum is clipped to the mask: outside nodes contribute zero.
    """
    dom = u.domain
    _check_resolution(eps if scale is None else scale, dom.spacing)
    m = _mask_array(mask, dom.shape)
    w = model.W.value(sym_gradient(u)) * m
    stencil = kernel_stencil(kernel if kernel is not None else model.kernel,
                             dom.spacing, eps if scale is None else scale)
    return eps * correlate_same(w, stencil)


def nonlocal_energy(model: EnergyModel, u: GridField, eps: float, mask=None) -> float:
    """Discrete rescaled non-local energy F_eps(u, mask).

    Nonnegative, and never larger than beta * measure(mask) / eps since the
    transition function is capped at beta.
    """
    dom = u.domain
    m = _mask_array(mask, dom.shape)
    inner = nonlocal_bulk_field(model, u, eps, mask)
    outer = model.f.value(inner) * m
    return float(outer.sum()) * dom.cell_measure / eps


def fidelity_energy(model: EnergyModel, u: GridField, eps: float, mask=None) -> float:
    """F_eps plus the midpoint integral of psi(|u|) over the mask."""
    if model.psi is None:
        raise ValueError("model carries no fidelity term")
    dom = u.domain
    m = _mask_array(mask, dom.shape)
    mag = np.linalg.norm(u.values, axis=-1)
    fid = float((model.psi.value(mag) * m).sum()) * dom.cell_measure
    return nonlocal_energy(model, u, eps, mask) + fid


# ---------------------------------------------------------------------------
# Limit functional on piecewise-smooth fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitEnergy:
    bulk: float
    surface: float
    fidelity: float

    @property
    def total(self) -> float:
        return self.bulk + self.surface + self.fidelity


def _tensor_gauss(fn, bounds, panels: int, order: int = 8) -> float:
    """Tensor Gauss-Legendre quadrature on a panel-subdivided box."""
    nodes, weights = leggauss(order)
    axes_pts, axes_w = [], []
    for a, b in bounds:
        edges = np.linspace(a, b, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1] - edges[0])
        axes_pts.append((mid[:, None] + half * nodes[None, :]).ravel())
        axes_w.append(np.tile(half * weights, panels))
    if len(bounds) == 1:
        pts = axes_pts[0][:, None]
        return float(np.sum(fn(pts) * axes_w[0]))
    px, py = np.meshgrid(axes_pts[0], axes_pts[1], indexing="ij")
    wx, wy = np.meshgrid(axes_w[0], axes_w[1], indexing="ij")
    pts = np.stack([px.ravel(), py.ravel()], axis=-1)
    return float(np.sum(fn(pts) * (wx * wy).ravel()))


def _adaptive_quadrature(fn, bounds, tol: float) -> float:
    panels, prev = 4, None
    while True:
        val = _tensor_gauss(fn, bounds, panels)
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        if panels >= 64:
            return val
        prev, panels = val, panels * 2


def limit_energy(model: EnergyModel, field: PiecewiseSmoothField, bounds,
                 tol: float = 1e-8) -> LimitEnergy:
    """Limit functional on a piecewise-smooth field over the given box.

    bulk    = alpha * integral of W(strain) (tensor Gauss, refined to tol),
    surface = beta  * sum over jump segments of length * surface density of
              the segment normal,
    fidelity = integral of psi(|u|) when the model carries a fidelity term.
    """
    alpha, beta = model.f.alpha, model.f.beta
    bulk = alpha * _adaptive_quadrature(
        lambda pts: model.W.value(field.strain(pts)), bounds, tol)
    surface = 0.0
    if field.jump is not None:
        for seg in field.jump.segments:
            surface += seg.length * float(surface_density(model.kernel.body, seg.normal))
        surface *= beta
    fidelity = 0.0
    if model.psi is not None:
        fidelity = _adaptive_quadrature(
            lambda pts: model.psi.value(np.linalg.norm(field.value(pts), axis=-1)),
            bounds, tol)
    return LimitEnergy(float(bulk), float(surface), float(fidelity))


# ---------------------------------------------------------------------------
# One-dimensional window energy
# ---------------------------------------------------------------------------

_WINDOW_KERNEL_1D = make_kernel(ConvexBody.ball(1.0, dimension=1),
                                KernelProfile("uniform"))


def energy_1d(model: EnergyModel, samples, eps: float, interval=(0.0, 1.0)) -> float:
    """One-dimensional non-local energy with the symmetric uniform window.

    Computes (1/eps) * sum f( (1/2) * window integral of |u'|^p ) h over the
    interval, the exact 1D counterpart of the 2D energy with a unit-interval
    uniform kernel.  The window integral is clipped to the interval (the
    derivative is extended by zero outside), and the derivative is the
    second-order difference of the samples.
    """
    samples = np.asarray(samples, dtype=float)
    a, b = float(interval[0]), float(interval[1])
    dom = GridDomain.interval(a, b, len(samples))
    _check_resolution(eps, dom.spacing)
    field = GridField(dom, samples[:, None])
    w = model.W.value(sym_gradient(field))
    stencil = kernel_stencil(_WINDOW_KERNEL_1D, dom.spacing, eps)
    inner = eps * correlate_same(w, stencil)
    return float(model.f.value(inner).sum()) * dom.spacing / eps


def minorant_energy(model: EnergyModel, u: GridField, eps: float, eta: float,
                    m_eta: float, mask=None) -> float:
    """Ball-average comparison energy, a guaranteed lower bound of F_eps.

    Replaces the kernel by its constant minorant m_eta on the Euclidean ball
    of radius eta inside the body, i.e. evaluates the transition function at
    m_eta * omega_n * eta^n times the clipped ball average.  Since the true
    kernel dominates the minorant pointwise, this energy never exceeds the
    non-local energy.
    """
    dom = u.domain
    n = dom.dimension
    _check_resolution(eta * eps, dom.spacing)
    m = _mask_array(mask, dom.shape)
    w = model.W.value(sym_gradient(u)) * m
    ball = ConvexBody.ball(eta, dimension=n)
    unit_ball_kernel = make_kernel(ball, KernelProfile("uniform"))
    omega_n = 2.0 if n == 1 else np.pi
    # mass-one uniform stencil times the minorant's total mass on the ball
    stencil = kernel_stencil(unit_ball_kernel, dom.spacing, eps)
    stencil = stencil * (m_eta * omega_n * eta ** n * eps ** n)
    inner = eps * correlate_same(w, stencil)
    outer = model.f.value(inner) * m
    return float(outer.sum()) * dom.cell_measure / eps


# ---------------------------------------------------------------------------
# Affine minorants
# ---------------------------------------------------------------------------

def affine_minorant(f: TransitionFunction, delta: float) -> tuple[float, float]:
    """Psir (a, b) with a >= alpha (1 - delta) and min(a t, b) <= f(t) for all t.

    For ``min_affine`` this is (alpha, beta).  For ``exp_saturating`` the
    slope is a = alpha (1 - delta) and b = a t* at the positive crossing of
    a t = f(t), located by bisection; concavity makes the left bracket end
    safe.  The minorant is certified on a log-spaced grid before returning.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if f.kind == "min_affine":
        a, b = f.alpha, f.beta
    else:
        a = f.alpha * (1.0 - delta)
        gap = lambda t: float(f.value(t)) - a * t
        hi = 1.0
        while gap(hi) > 0:
            hi *= 2.0
            if hi > 1e300:
                raise ValueError("minorant violated")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if gap(mid) >= 0:
                lo = mid
            else:
                hi = mid
        if lo == 0.0:
            raise ValueError("minorant violated")
        b = a * lo
    grid = np.logspace(-9.0, 9.0, 2000)
    if np.any(np.minimum(a * grid, b) > f.value(grid) * (1.0 + 1e-12) + 1e-15):
        raise ValueError("minorant violated")
    return float(a), float(b)


# ---------------------------------------------------------------------------
# Exact gradient of the discrete energy
# ---------------------------------------------------------------------------

def _convolve_same(values: np.ndarray, stencil: np.ndarray) -> np.ndarray:
    """Plain convolution: the adjoint of :func:`correlate_same`."""
    return convolve(values, stencil, mode="same", method="auto")


def nonlocal_gradient(model: EnergyModel, u: GridField, eps: float, mask=None,
                      include_fidelity: bool = False) -> np.ndarray:
    """Exact gradient of the discrete energy with respect to nodal values.

    Chains the derivative of the transition function through the transposed
    convolution stencil, the derivative of the bulk density and the
    transposed difference stencils; requires a smooth transition function.
    Returns an array shaped like ``u.values``.
    """
    if not model.f.smooth:
        raise ValueError("non-smooth transition; use exp_saturating for minimization")
    dom = u.domain
    _check_resolution(eps, dom.spacing)
    n = dom.dimension
    h = dom.spacing
    m = _mask_array(mask, dom.shape)
    strain = sym_gradient(u)
    w = model.W.value(strain) * m
    stencil = kernel_stencil(model.kernel, h, eps)
    inner = eps * correlate_same(w, stencil)
    # F = (h^n / eps) sum m f(inner); d inner / dw = eps * stencil weights
    fprime = model.f.deriv(inner) * m
    g_w = dom.cell_measure * _convolve_same(fprime, stencil) * m
    wprime = model.W.deriv(strain)
    grad = np.zeros_like(u.values)
    for i in range(n):
        for j in range(n):
            grad[..., i] += diff_axis_adjoint(g_w * wprime[..., i, j], j, h)
    if include_fidelity:
        if model.psi is None:
            raise ValueError("model carries no fidelity term")
        mag = np.linalg.norm(u.values, axis=-1)
        fac = np.zeros_like(mag)
        pos = mag > 0
        fac[pos] = model.psi.deriv(mag[pos]) / mag[pos]
        grad += dom.cell_measure * (fac * m)[..., None] * u.values
    return grad
