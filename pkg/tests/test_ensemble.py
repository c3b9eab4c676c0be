import math

import numpy as np
import pytest
from scipy import integrate
from scipy.integrate import solve_ivp

from wigner_otoc import ensemble, semicircle as sc


class TestSampling:
    def test_deterministic_in_seed(self):
        spec = ensemble.WignerSpec(n=32, symmetry="complex-hermitian", seed=5)
        assert np.array_equal(ensemble.sample_wigner(spec, 2), ensemble.sample_wigner(spec, 2))

    def test_streams_independent(self):
        spec = ensemble.WignerSpec(n=32, seed=5)
        assert not np.allclose(ensemble.sample_wigner(spec, 0), ensemble.sample_wigner(spec, 1))
        assert not np.allclose(
            ensemble.sample_wigner(spec, 0, purpose="a"), ensemble.sample_wigner(spec, 0, purpose="b")
        )

    @pytest.mark.parametrize("law", ["gaussian", "rademacher", "uniform"])
    @pytest.mark.parametrize("symmetry", ["real-symmetric", "complex-hermitian"])
    def test_offdiagonal_second_moment(self, law, symmetry):
        spec = ensemble.WignerSpec(n=512, symmetry=symmetry, entry_law=law, seed=3)
        w = ensemble.sample_wigner(spec)
        iu = np.triu_indices(512, k=1)
        second = np.mean(np.abs(math.sqrt(512) * w[iu]) ** 2)
        assert second == pytest.approx(1.0, abs=0.02)
        assert np.abs(w - w.conj().T).max() == 0.0

    def test_complex_second_moment_vanishes(self):
        spec = ensemble.WignerSpec(n=512, symmetry="complex-hermitian", seed=3)
        w = ensemble.sample_wigner(spec)
        iu = np.triu_indices(512, k=1)
        assert abs(np.mean((math.sqrt(512) * w[iu]) ** 2)) < 0.05

    def test_semicircle_histogram(self):
        # pooled eigenvalue histogram against the density, 40 bins on [-2, 2]
        edges = np.linspace(-2.0, 2.0, 41)
        spec = ensemble.WignerSpec(n=2048, symmetry="real-symmetric", seed=17)
        counts = np.zeros(40)
        n_samples = 30
        for i in range(n_samples):
            lam = np.linalg.eigvalsh(ensemble.sample_wigner(spec, i))
            counts += np.histogram(lam, bins=edges)[0]
        density = counts / (n_samples * 2048 * np.diff(edges))
        expected = np.array(
            [integrate.quad(sc.rho_sc, lo, hi)[0] / (hi - lo) for lo, hi in zip(edges[:-1], edges[1:])]
        )
        assert np.max(np.abs(density - expected)) < 0.02


class TestEigendecompose:
    def test_sorted_diag(self):
        fact = ensemble.eigendecompose(np.diag([3.0, 1.0, 2.0]))
        assert np.allclose(fact.eigenvalues, [1.0, 2.0, 3.0])

    def test_reconstruction_and_unitarity(self):
        spec = ensemble.WignerSpec(n=256, symmetry="complex-hermitian", seed=9)
        w = ensemble.sample_wigner(spec)
        fact = ensemble.eigendecompose(w)
        norm = np.abs(w).max()
        assert np.abs(fact.reconstruct() - w).max() <= 1e-10 * max(norm, 1.0)
        u = fact.eigenvectors
        assert np.abs(u.conj().T @ u - np.eye(256)).max() <= 1e-10
        assert fact.eigenvalues.sum() == pytest.approx(np.trace(w).real, abs=1e-10)


class TestOUFlow:
    def test_time_zero_identity(self):
        spec = ensemble.WignerSpec(n=16, seed=1)
        w = ensemble.sample_wigner(spec)
        rng = ensemble.rng_for(1, 0, "ou")
        assert np.array_equal(ensemble.ou_evolve(w, 0.0, rng), w)

    def test_moment_preservation(self):
        spec = ensemble.WignerSpec(n=512, symmetry="complex-hermitian", seed=23)
        w = ensemble.sample_wigner(spec)
        rng = ensemble.rng_for(23, 0, "ou")
        wt = ensemble.ou_evolve(w, 0.5, rng)
        iu = np.triu_indices(512, k=1)
        assert np.mean(np.abs(math.sqrt(512) * wt[iu]) ** 2) == pytest.approx(1.0, abs=0.02)

    def test_density_stationary(self):
        # Kolmogorov-Smirnov distance to the semicircle CDF stays at its
        # t = 0 level along the flow
        spec = ensemble.WignerSpec(n=1024, symmetry="real-symmetric", seed=29)
        grid = np.linspace(-2.2, 2.2, 200)
        cdf = np.array([integrate.quad(sc.rho_sc, -2, g)[0] for g in grid])

        def ks(t):
            dists = []
            for i in range(10):
                w = ensemble.sample_wigner(spec, i)
                rng = ensemble.rng_for(29, i, "ks")
                wt = ensemble.ou_evolve(w, t, rng) if t > 0 else w
                lam = np.linalg.eigvalsh(wt)
                emp = np.searchsorted(np.sort(lam), grid) / lam.size
                dists.append(np.max(np.abs(emp - cdf)))
            return float(np.mean(dists))

        base = ks(0.0)
        for t in (0.5, 1.0):
            assert ks(t) <= 2.0 * base

    def test_exact_and_pathwise_agree_in_law(self):
        spec = ensemble.WignerSpec(n=256, symmetry="real-symmetric", seed=31)
        moments_exact = np.zeros(4)
        moments_em = np.zeros(4)
        n_samples = 12
        for i in range(n_samples):
            w = ensemble.sample_wigner(spec, i)
            lam_e = np.linalg.eigvalsh(ensemble.ou_evolve(w, 0.5, ensemble.rng_for(31, i, "ex")))
            lam_p = np.linalg.eigvalsh(
                ensemble.ou_evolve(w, 0.5, ensemble.rng_for(31, i, "em"), mode="euler-maruyama", h=0.01)
            )
            moments_exact += np.array([np.mean(lam_e**p) for p in (1, 2, 3, 4)]) / n_samples
            moments_em += np.array([np.mean(lam_p**p) for p in (1, 2, 3, 4)]) / n_samples
        assert np.allclose(moments_exact, moments_em, atol=0.05)

    def test_guards(self):
        spec = ensemble.WignerSpec(n=8, seed=1)
        w = ensemble.sample_wigner(spec)
        rng = ensemble.rng_for(1, 0, "g")
        with pytest.raises(ValueError):
            ensemble.ou_evolve(w, 11.0, rng)
        with pytest.raises(ValueError):
            ensemble.ou_evolve(w, 0.5, rng, mode="euler-maruyama", h=0.1)


class TestCharacteristics:
    def test_imaginary_axis_invariant(self):
        traj = ensemble.integrate_characteristic(2j, 0.7)
        assert np.max(np.abs(traj.zpath.real)) == 0.0

    def test_imaginary_axis_closed_form(self):
        # on the axis the flow is separable: y_t = 2 sinh(asinh(y0/2) - t/2)
        y0, t = 2.0, 0.6
        traj = ensemble.integrate_characteristic(1j * y0, t)
        expected = 2.0 * math.sinh(math.asinh(y0 / 2.0) - t / 2.0)
        assert traj.z_end == pytest.approx(1j * expected, abs=1e-6)

    def test_derivative_identity(self):
        z0 = ensemble.shoot_initial_condition(0.3 + 0.05j, 0.5)
        grid = np.linspace(0.0, 0.5, 801)
        traj = ensemble.integrate_characteristic(z0, 0.5, grid=grid)
        m_vals = sc.m_sc(traj.zpath)
        dm = np.gradient(m_vals, traj.times)
        assert np.max(np.abs(dm[3:-3] - m_vals[3:-3] / 2.0)) < 1e-6

    def test_round_trip(self):
        for z in (0.4 + 0.08j, -1.0 + 0.3j, 1.5 - 0.2j):
            back = ensemble.integrate_characteristic(z, 0.8, direction="backward")
            fwd = ensemble.integrate_characteristic(back.z_end, 0.8, direction="forward")
            assert abs(fwd.z_end - z) < 1e-6

    def test_eta_strictly_decreasing_and_ell_monotone(self):
        traj = ensemble.integrate_characteristic(0.5 + 1.2j, 0.8)
        assert np.all(np.diff(traj.eta_path) < 0)
        assert np.all(np.diff(traj.ell_path) <= 1e-9)

    def test_rho_comparability(self, rng):
        for _ in range(10):
            z = complex(rng.uniform(-2.5, 2.5), rng.uniform(1e-3, 1.0))
            try:
                traj = ensemble.integrate_characteristic(z, 1.0, direction="backward")
            except ensemble.AxisCrossingError:
                continue
            ratio = traj.rho_path.max() / traj.rho_path.min()
            assert ratio <= 10.0

    def test_axis_crossing_abort(self):
        with pytest.raises(ensemble.AxisCrossingError) as err:
            ensemble.integrate_characteristic(0.0 + 0.05j, 5.0)
        assert err.value.t_cross > 0

    def test_against_generic_ode_oracle(self):
        z0 = -0.7 + 1.3j

        def field(t, y):
            z = complex(y[0], y[1])
            f = -sc.m_sc(z) - z / 2.0
            return [f.real, f.imag]

        sol = solve_ivp(field, (0.0, 0.9), [z0.real, z0.imag], rtol=1e-10, atol=1e-12)
        traj = ensemble.integrate_characteristic(z0, 0.9)
        assert traj.z_end == pytest.approx(complex(sol.y[0, -1], sol.y[1, -1]), abs=1e-7)


class TestShooting:
    def test_small_eta_bulk_target(self):
        z0 = ensemble.shoot_initial_condition(0.0 + 0.01j, 0.5)
        assert ensemble.dist_to_bulk(z0) >= 0.1
        fwd = ensemble.integrate_characteristic(z0, 0.5)
        assert abs(fwd.z_end - (0.0 + 0.01j)) < 1e-6

    def test_continuity_in_time(self):
        z = 0.5 + 0.4j
        z0 = ensemble.shoot_initial_condition(z, 1e-3)
        assert abs(z0 - z) <= 1e-2

    def test_imaginary_axis_quadrature_oracle(self):
        # backward flow on the axis: y0 = 2 sinh(asinh(y/2) + T/2)
        z0 = ensemble.shoot_initial_condition(2j, 0.4)
        expected = 2.0 * math.sinh(math.asinh(1.0) + 0.2)
        assert z0 == pytest.approx(1j * expected, abs=1e-6)

    def test_guards(self):
        with pytest.raises(ValueError):
            ensemble.shoot_initial_condition(0.3 + 0.4j, 0.0)
        with pytest.raises(ValueError):
            ensemble.shoot_initial_condition(0.3 + 0.4j, 1.5)
