"""Mean-field flow, tangent dynamics, and exponent measurements."""

import numpy as np
import pytest

from dickesim import classical
from dickesim.model import ModelParams


def params(n_spins=10, g=0.66, delta=0.5, b=0.7):
    return ModelParams(n_spins=n_spins, g_khz=g, delta_khz=delta, b_khz=b,
                       n_max=1)


def unstable_rate_analytic(p):
    """Largest real eigenvalue root of the fixed-point secular quartic.

    Linearizing at the polarized fixed point gives
    (s^2 + B^2)(s^2 + delta^2) = B_c B delta^2 in angular units.
    """
    wb, wd = p.omega_b, p.omega_delta
    wbc = 2 * np.pi * p.b_critical_khz
    roots = np.roots([1.0, 0.0, wb**2 + wd**2, 0.0,
                      wb**2 * wd**2 - wbc * wb * wd**2])
    return float(roots.real.max())


class TestFlowDefinition:
    def test_fixed_point_is_stationary(self):
        p = params()
        for rescaled in (False, True):
            fp = classical.critical_point_image(p, rescaled=rescaled)
            rhs = classical.mean_field_rhs(fp, p, rescaled=rescaled)
            assert np.abs(rhs).max() == 0.0

    def test_jacobian_matches_finite_differences(self):
        p = params()
        rng = np.random.default_rng(1)
        x = rng.standard_normal(5)
        jac = classical.jacobian(x, p)
        eps = 1e-7
        for j in range(5):
            dx = np.zeros(5)
            dx[j] = eps
            col = (classical.mean_field_rhs(x + dx, p)
                   - classical.mean_field_rhs(x - dx, p)) / (2 * eps)
            assert np.allclose(jac[:, j], col, atol=1e-5)

    def test_tangent_rhs_is_jacobian_product(self):
        p = params()
        rng = np.random.default_rng(2)
        x = rng.standard_normal(5)
        v = rng.standard_normal(5)
        got = classical.tangent_rhs(x, v, p)
        assert np.allclose(got, classical.jacobian(x, p) @ v, atol=1e-12)

    def test_g_zero_closed_form(self):
        # decoupled: (sy, sz) precess at omega_B, alpha rotates at delta
        p = ModelParams(n_spins=4, g_khz=0.0, delta_khz=0.5, b_khz=0.7,
                        n_max=1)
        x0 = np.array([0.3, 1.0, -0.4, 0.8, 0.2])
        t = np.linspace(0, 3, 61)
        traj = classical.integrate(x0, p, t)
        wb, wd = p.omega_b, p.omega_delta
        sy = x0[1] * np.cos(wb * t) - x0[2] * np.sin(wb * t)
        sz = x0[2] * np.cos(wb * t) + x0[1] * np.sin(wb * t)
        alpha = (x0[3] + 1j * x0[4]) * np.exp(-1j * wd * t)
        assert np.abs(traj[:, 0] - x0[0]).max() < 1e-8
        assert np.abs(traj[:, 1] - sy).max() < 1e-7
        assert np.abs(traj[:, 2] - sz).max() < 1e-7
        assert np.abs(traj[:, 3] - alpha.real).max() < 1e-7
        assert np.abs(traj[:, 4] - alpha.imag).max() < 1e-7

    def test_conservation_along_chaotic_trajectory(self):
        p = params()
        fp = classical.critical_point_image(p)
        x0 = fp + np.array([0.02, -0.01, 0.015, 0.01, 0.0])
        t = np.linspace(0, 30, 301)
        traj = classical.integrate(x0, p, t)
        e = classical.energy(traj, p)
        s = classical.spin_norm(traj)
        assert np.abs(e - e[0]).max() / abs(e[0]) < 1e-8
        assert np.abs(s - s[0]).max() / s[0] < 1e-8

    def test_batched_integration_matches_loop(self):
        p = params()
        rng = np.random.default_rng(3)
        x0 = rng.standard_normal((4, 5))
        t = np.linspace(0, 2, 21)
        batch = classical.integrate(x0, p, t)
        for i in range(4):
            single = classical.integrate(x0[i], p, t)
            assert np.abs(batch[:, i, :] - single).max() < 1e-9

    def test_rescaled_trajectory_maps_to_bare(self):
        p = params(n_spins=14)
        rng = np.random.default_rng(4)
        n = p.n_spins
        bare0 = rng.standard_normal(5)
        bare0[:3] *= 0.5 * n / np.linalg.norm(bare0[:3])  # |S| = N/2
        scaled0 = np.concatenate([2 * bare0[:3] / n, bare0[3:] / np.sqrt(n)])
        t = np.linspace(0, 5, 51)
        bare = classical.integrate(bare0, p, t)
        scaled = classical.integrate(scaled0, p, t, rescaled=True)
        back = np.concatenate([0.5 * n * scaled[:, :3],
                               np.sqrt(n) * scaled[:, 3:]], axis=1)
        assert np.abs(bare - back).max() < 1e-6

    def test_sign_convention_mirror(self):
        # flipping sigma together with alpha_I -> -alpha_I leaves the flow
        p = params()
        rng = np.random.default_rng(5)
        x0 = rng.standard_normal(5)
        mirror0 = x0 * np.array([1, 1, 1, 1, -1])
        t = np.linspace(0, 4, 41)
        plus = classical.integrate(x0, p, t, sign=+1)
        minus = classical.integrate(mirror0, p, t, sign=-1)
        assert np.abs(plus[:, :4] - minus[:, :4]).max() < 1e-7
        assert np.abs(plus[:, 4] + minus[:, 4]).max() < 1e-7

    def test_normalized_energy_at_fixed_point(self):
        p = params()
        fp = classical.critical_point_image(p)
        assert classical.normalized_energy(fp, p) == pytest.approx(-1.0)
        fpr = classical.critical_point_image(rescaled=True)
        assert classical.normalized_energy(fpr, p, rescaled=True) == \
            pytest.approx(-1.0)


class TestLyapunov:
    def test_matches_fixed_point_linearization(self):
        p = params()
        fp = classical.critical_point_image(p)
        analytic = unstable_rate_analytic(p)
        res = classical.lyapunov_max(fp, p, t_end=80.0, seed=3)
        assert res.converged.all()
        assert res.scalar() == pytest.approx(analytic, rel=0.03)

    def test_analytic_rate_equals_jacobian_spectrum(self):
        p = params()
        fp = classical.critical_point_image(p)
        jac_rate = np.linalg.eigvals(classical.jacobian(fp, p)).real.max()
        assert unstable_rate_analytic(p) == pytest.approx(jac_rate, abs=1e-9)

    def test_seed_insensitive(self):
        p = params()
        fp = classical.critical_point_image(p)
        r1 = classical.lyapunov_max(fp, p, t_end=60.0, seed=1).scalar()
        r2 = classical.lyapunov_max(fp, p, t_end=60.0, seed=77).scalar()
        assert r1 == pytest.approx(r2, rel=0.05)

    def test_renorm_interval_insensitive(self):
        p = params()
        fp = classical.critical_point_image(p)
        r1 = classical.lyapunov_max(fp, p, t_end=60.0,
                                    renorm_interval=0.1).scalar()
        r2 = classical.lyapunov_max(fp, p, t_end=60.0,
                                    renorm_interval=0.05).scalar()
        assert r1 == pytest.approx(r2, rel=0.05)

    def test_regular_regime_converges_to_zero(self):
        # far above the critical field the polarized point is stable
        p = params(b=20.0)
        fp = classical.critical_point_image(p)
        x0 = fp + 1e-3 * np.array([1.0, 1.0, 1.0, 1.0, 1.0])
        res = classical.lyapunov_max(x0, p, t_end=60.0)
        assert res.converged.all()
        assert abs(res.scalar()) < 0.1

    def test_batch_shares_grid(self):
        p = params()
        fp = classical.critical_point_image(p)
        pts = np.stack([fp, fp + np.array([0.01, 0, 0, 0.01, 0])])
        res = classical.lyapunov_max(pts, p, t_end=40.0)
        assert res.rate.shape == (2,)
        assert res.history_rate.shape[1] == 2

    def test_horizon_too_short_rejected(self):
        p = params()
        fp = classical.critical_point_image(p)
        with pytest.raises(ValueError):
            classical.lyapunov_max(fp, p, t_end=0.3)


class TestTwinDivergence:
    def test_quadratic_observable_doubles_rate(self):
        p = params()
        fp = classical.critical_point_image(p)
        analytic = unstable_rate_analytic(p)
        tw = classical.lambda_c_nonlinear(fp, p, observable="n", seed=5)
        assert tw.rate == pytest.approx(2 * analytic, rel=0.05)

    def test_linear_observable_keeps_rate(self):
        p = params()
        fp = classical.critical_point_image(p)
        analytic = unstable_rate_analytic(p)
        tw = classical.lambda_c_nonlinear(fp, p, observable="alpha_r", seed=5)
        assert tw.rate == pytest.approx(analytic, rel=0.05)

    def test_d0_insensitive(self):
        p = params()
        fp = classical.critical_point_image(p)
        r1 = classical.lambda_c_nonlinear(fp, p, d0=1e-8, seed=5).rate
        r2 = classical.lambda_c_nonlinear(fp, p, d0=1e-9, seed=5).rate
        assert r1 == pytest.approx(r2, rel=0.05)

    def test_unknown_observable(self):
        p = params()
        with pytest.raises(ValueError):
            classical.lambda_c_nonlinear(np.zeros(5), p, observable="q")


class TestPhaseScan:
    def test_sampling_properties(self):
        rng = np.random.default_rng(10)
        pts = classical.sample_phase_points(500, 1.5, rng)
        assert pts.shape == (500, 5)
        assert np.abs(np.linalg.norm(pts[:, :3], axis=1) - 1.0).max() < 1e-12
        assert (pts[:, 3] ** 2 + pts[:, 4] ** 2 <= 1.5**2 + 1e-12).all()

    def test_scan_structure_and_determinism(self):
        cells = classical.phase_diagram_scan(
            0.66, 0.5, [0.7], n_samples=12, t_end=20.0,
            energy_edges=np.linspace(-2, 2, 5), seed=42)
        assert len(cells) == 4
        assert sum(c.n_samples for c in cells) <= 12
        again = classical.phase_diagram_scan(
            0.66, 0.5, [0.7], n_samples=12, t_end=20.0,
            energy_edges=np.linspace(-2, 2, 5), seed=42)
        for a, b in zip(cells, again):
            assert a.lambda_max == b.lambda_max or (
                np.isnan(a.lambda_max) and np.isnan(b.lambda_max))
        ratio = np.sqrt(0.66**2 * 4 / 0.5 / 0.7)
        assert cells[0].sqrt_bc_over_b == pytest.approx(ratio)

    def test_chaotic_field_has_positive_cells(self):
        cells = classical.phase_diagram_scan(
            0.66, 0.5, [0.7], n_samples=24, t_end=100.0,
            energy_edges=np.linspace(-1.5, 1.5, 4), seed=9)
        finite = [c.lambda_max for c in cells if np.isfinite(c.lambda_max)]
        assert finite and max(finite) > 1.0
