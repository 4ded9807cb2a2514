"""Kernel normalization, scaling, truncation, validation and stencils."""

import numpy as np
import pytest

from anisofrac import (ConvexBody, Kernel, KernelProfile, core_mass, gauge,
                       kernel_stencil, make_kernel, stencil_mass, truncate,
                       validate_kernel)

BALL = ConvexBody.ball(1.0)
SQUARE = ConvexBody.square(1.0)
ELLIPSE = ConvexBody.ellipse(1.5, 0.7, angle=0.3)
RHOMBUS = ConvexBody.polygon([(2, 0), (0, 1), (-2, 0), (0, -1)])

PROFILES = [KernelProfile("uniform"), KernelProfile("cone"),
            KernelProfile("truncated_gaussian", sigma=0.5)]


def riemann_mass_oracle(kernel, n=801):
    """Independent 2D Riemann sum of the density over the bounding box."""
    r = kernel.body.circumradius
    x = np.linspace(-r, r, n + 1)[:-1] + r / n
    xx, yy = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return float(kernel.density(pts).sum()) * (2 * r / n) ** 2


class TestNormalization:
    def test_uniform_disk_density(self):
        k = make_kernel(BALL, KernelProfile("uniform"))
        assert k.norm_const == pytest.approx(np.pi, rel=1e-12)
        assert k.density([0.3, 0.2]) == pytest.approx(1.0 / np.pi)
        assert k.density([1.5, 0.0]) == 0.0

    def test_uniform_square_density(self):
        k = make_kernel(SQUARE, KernelProfile("uniform"))
        assert k.density([0.6, -0.9]) == pytest.approx(0.25)

    def test_cone_disk_closed_form(self):
        # Z = 2 pi * integral of (1 - r) r dr = pi / 3, checked against an
        # independent planar Riemann sum as well
        k = make_kernel(BALL, KernelProfile("cone"))
        assert k.norm_const == pytest.approx(np.pi / 3.0, rel=1e-10)
        assert riemann_mass_oracle(k) == pytest.approx(1.0, abs=2e-3)

    def test_degenerate_profile_rejected(self):
        dead = KernelProfile("table", table_r=(0.0, 1.0), table_v=(0.0, 0.0))
        with pytest.raises(ValueError, match="degenerate profile"):
            make_kernel(BALL, dead)


class TestScaling:
    def test_mass_one_at_32_cells(self):
        for eps in (1.0, 0.25, 0.037):
            k = make_kernel(BALL, KernelProfile("uniform"))
            spacing = 2 * eps * k.body.circumradius / 32
            assert stencil_mass(k, spacing, eps) == pytest.approx(1.0, abs=1e-3)

    def test_origin_value(self):
        k = make_kernel(BALL, KernelProfile("cone"))
        eps = 0.2
        assert k.scaled(eps).density([0.0, 0.0]) == pytest.approx(
            float(k.density([0.0, 0.0])) / eps ** 2)

    def test_support_radius(self):
        k = make_kernel(ELLIPSE, KernelProfile("uniform"))
        assert k.scaled(0.3).support_radius == pytest.approx(0.3 * 1.5)
        assert k.scaled(0.3).density([0.0, 0.3 * 0.7 * 1.01]) == 0.0


class TestCoreMass:
    def test_uniform_scaling_law(self):
        for body in (BALL, SQUARE, RHOMBUS):
            k = make_kernel(body, KernelProfile("uniform"))
            for eta in (0.5, 0.25, 0.1):
                assert core_mass(k, eta) == pytest.approx(eta ** 2, rel=1e-9)

    def test_cone_closed_form(self):
        k = make_kernel(BALL, KernelProfile("cone"))
        for eta in (0.5, 0.3):
            assert core_mass(k, eta) == pytest.approx(3 * eta ** 2 - 2 * eta ** 3,
                                                      rel=1e-9)

    def test_monotone_and_vanishing(self):
        k = make_kernel(ELLIPSE, KernelProfile("truncated_gaussian", sigma=0.5))
        vals = [core_mass(k, eta) for eta in (0.5, 0.25, 0.1, 0.01)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-3

    def test_crude_upper_bound(self):
        for body, prof in [(BALL, KernelProfile("uniform")),
                           (BALL, KernelProfile("cone")),
                           (SQUARE, KernelProfile("truncated_gaussian", sigma=0.5))]:
            k = make_kernel(body, prof)
            sup_rho = float(k.density(np.zeros((1, 2))))
            for eta in (0.1, 0.3, 0.7):
                bound = eta ** 2 * sup_rho * body.measure
                assert core_mass(k, eta) <= bound + 1e-12

    def test_range_validation(self):
        k = make_kernel(BALL, KernelProfile("uniform"))
        for eta in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                core_mass(k, eta)


class TestTruncation:
    def test_uniform_disk_annulus_value(self):
        k = make_kernel(BALL, KernelProfile("uniform"))
        tk = truncate(k, 0.5)
        assert tk.core == pytest.approx(0.25)
        assert tk.density([0.7, 0.0]) == pytest.approx((1 / np.pi) / 0.75)
        assert tk.density([0.3, 0.0]) == 0.0

    def test_mass_one(self):
        for body in (BALL, SQUARE):
            for prof in PROFILES:
                tk = truncate(make_kernel(body, prof), 0.4)
                spacing = 2 * body.circumradius / 48
                assert stencil_mass(tk, spacing) == pytest.approx(1.0, abs=1e-3)

    def test_pointwise_domination(self):
        k = make_kernel(BALL, KernelProfile("cone"))
        tk = truncate(k, 0.5)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, (500, 2))
        assert np.all(tk.density(pts) <= k.density(pts) / (1 - tk.core) + 1e-15)

    def test_exhausted_truncation(self):
        concentrated = KernelProfile("table", table_r=(0.0, 0.3, 0.31, 1.0),
                                     table_v=(1.0, 1.0, 0.0, 0.0))
        k = make_kernel(BALL, concentrated)
        with pytest.raises(ValueError, match="truncation exhausts kernel"):
            truncate(k, 0.5)

    def test_truncate_scale_commutes(self):
        # scaled evaluator of the truncation equals truncating the scaled one
        k = make_kernel(BALL, KernelProfile("cone"))
        eta, eps = 0.4, 0.2
        tk = truncate(k, eta)
        rng = np.random.default_rng(1)
        pts = rng.uniform(-0.25, 0.25, (500, 2))
        direct = tk.scaled(eps).density(pts)
        g = gauge(BALL, pts / eps)
        manual = np.where(g >= eta, k.scaled(eps).density(pts), 0.0) / (1 - tk.core)
        assert np.allclose(direct, manual, rtol=1e-12, atol=1e-15)


class TestMonotonicity:
    def test_gauge_monotone_density(self):
        rng = np.random.default_rng(2)
        for body in (BALL, SQUARE, ELLIPSE, RHOMBUS):
            for prof in PROFILES:
                k = make_kernel(body, prof)
                pts = rng.uniform(-body.circumradius, body.circumradius, (1000, 2))
                g = gauge(body, pts)
                rho = k.density(pts)
                order = np.argsort(g)
                assert np.all(np.diff(rho[order]) <= 1e-12)

    def test_table_profile_may_violate(self):
        increasing = KernelProfile("table", table_r=(0.0, 0.5, 1.0),
                                   table_v=(0.1, 0.5, 1.0))
        k = make_kernel(BALL, increasing)
        assert not k.satisfies_n2


class TestValidation:
    def test_uniform_disk_report(self):
        k = make_kernel(BALL, KernelProfile("uniform"))
        rep = validate_kernel(k)
        assert rep["n1"]["pass"] and rep["n2"]["pass"]
        assert rep["ball_minorant"]["eta"] == pytest.approx(0.5)
        assert rep["ball_minorant"]["m_eta"] == pytest.approx(1 / np.pi)

    def test_square_uniform_minorant(self):
        k = make_kernel(SQUARE, KernelProfile("uniform"))
        rep = validate_kernel(k, eta=0.9)
        assert rep["ball_minorant"]["m_eta"] == pytest.approx(0.25)
        assert rep["ball_minorant"]["positive"]

    def test_increasing_profile_fails_n2(self):
        increasing = KernelProfile("table", table_r=(0.0, 0.5, 1.0),
                                   table_v=(0.1, 0.5, 1.0))
        rep = validate_kernel(make_kernel(BALL, increasing))
        assert not rep["n2"]["pass"]
        assert rep["n1"]["pass"]


class TestStencilMassInvariant:
    def test_all_shipped_kernels_at_32_cells(self):
        for body in (BALL, SQUARE, ELLIPSE, RHOMBUS):
            for prof in PROFILES:
                k = make_kernel(body, prof)
                spacing = 2 * body.circumradius / 32
                assert stencil_mass(k, spacing) == pytest.approx(1.0, abs=1e-3)
                assert stencil_mass(truncate(k, 0.4), spacing) == pytest.approx(
                    1.0, abs=1e-3)
                assert stencil_mass(k, 0.37 * spacing, 0.37) == pytest.approx(
                    1.0, abs=1e-3)

    def test_one_dimensional(self):
        k = make_kernel(ConvexBody.ball(1.0, dimension=1), KernelProfile("uniform"))
        assert stencil_mass(k, 2 / 32) == pytest.approx(1.0, abs=1e-6)
        st = kernel_stencil(k, 2 / 32)
        assert st.ndim == 1 and st.sum() == pytest.approx(1.0, abs=1e-6)
