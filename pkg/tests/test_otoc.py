import math

import numpy as np
import pytest
import scipy.linalg as sla

from wigner_otoc import ensemble, otoc, semicircle as sc

from conftest import random_hermitian


@pytest.fixture(scope="module")
def fact64():
    spec = ensemble.WignerSpec(n=64, symmetry="real-symmetric", seed=97)
    return ensemble.eigendecompose(ensemble.sample_wigner(spec))


class TestExampleObservables:
    def test_small_construction(self):
        a, b = otoc.build_example_observables(16, 0.5, 0.5)
        sa, va = a.diag_support
        sb, vb = b.diag_support
        assert sa.size == 4 and sb.size == 4
        assert set(sa) == {0, 1, 2, 3}
        assert set(sb) == {12, 13, 14, 15}
        assert a.trace_moment(2) == pytest.approx(1.0)
        assert a.traceless and b.traceless

    def test_product_vanishes(self):
        a, b = otoc.build_example_observables(64, 0.7, 0.6)
        assert np.abs(a.matrix @ b.matrix).max() == 0.0

    def test_exact_unit_normalization_on_dyadic_sizes(self):
        a, b = otoc.build_example_observables(1024, 0.7, 0.7)
        assert a.trace_moment(2) == pytest.approx(1.0, abs=1e-12)
        assert a.diag_support[0].size == 128

    def test_eighth_moment_formula(self):
        n, ae = 256, 0.5
        a, _ = otoc.build_example_observables(n, ae, ae)
        ra = a.diag_support[0].size
        assert a.trace_moment(8) == pytest.approx(n ** (4 * (1 - ae)) * ra / n, rel=1e-12)
        assert math.sqrt(a.trace_moment(8)) == pytest.approx(n ** (2 * (1 - ae)) * math.sqrt(ra / n), rel=1e-12)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            otoc.build_example_observables(16, 0.9, 0.9)

    def test_empty_support_rejected(self):
        with pytest.raises(ValueError):
            otoc.build_example_observables(16, 0.0, 0.5)


class TestObservable:
    def test_hermiticity_enforced(self, rng):
        m = rng.standard_normal((6, 6))
        with pytest.raises(ValueError):
            otoc.Observable.from_matrix(m + np.triu(np.ones((6, 6)), 1))

    def test_moment_cache(self, rng):
        a = otoc.Observable.from_matrix(random_hermitian(rng, 10))
        first = a.schatten(4)
        assert a.schatten(4) == first
        assert a.schatten(math.inf) == pytest.approx(np.abs(np.linalg.eigvalsh(a.matrix)).max())


class TestMomentSet:
    def test_identical_pair(self, rng):
        a = otoc.Observable.from_matrix(random_hermitian(rng, 12, traceless=True))
        m = otoc.moment_set(a, a)
        assert m.ab == pytest.approx(m.a2)
        assert m.a2b2 == pytest.approx(a.trace_moment(4))
        assert m.abab == pytest.approx(a.trace_moment(4))

    def test_disjoint_pair(self):
        a, b = otoc.build_example_observables(32, 0.5, 0.5)
        m = otoc.moment_set(a, b)
        assert m.ab == 0 and m.a2b2 == 0 and m.abab == 0

    def test_commutator_identity(self, rng):
        a = random_hermitian(rng, 10)
        b = random_hermitian(rng, 10)
        m = otoc.moment_set(a, b)
        comm = a @ b - b @ a
        half_norm = 0.5 * np.trace(comm.conj().T @ comm).real / 10
        assert m.a2b2 - m.abab.real == pytest.approx(half_norm, abs=1e-12)
        assert m.a2b2 - m.abab.real >= -1e-12


class TestEmpiricalOtoc:
    def test_zero_time_commuting(self, fact64):
        a, b = otoc.build_example_observables(64, 0.5, 0.5)
        _, _, c = otoc.empirical_otoc(fact64, a, b, [0.0])
        assert abs(c[0]) < 1e-12

    def test_zero_time_general(self, fact64, rng):
        a = random_hermitian(rng, 64)
        b = random_hermitian(rng, 64)
        _, _, c = otoc.empirical_otoc(fact64, a, b, [0.0])
        m = otoc.moment_set(a, b)
        assert c[0] == pytest.approx(m.a2b2 - m.abab.real, abs=1e-10)

    def test_commuting_evolution_constant(self):
        w = np.diag(np.linspace(-1, 1, 16))
        fact = ensemble.eigendecompose(w)
        a = np.diag(np.arange(16.0) - 7.5)
        b = np.diag(np.ones(16))
        _, _, c = otoc.empirical_otoc(fact, a, b, [0.0, 0.7, 2.3])
        assert np.allclose(c, c[0], atol=1e-12)

    def test_matrix_exponential_oracle(self, fact64):
        a, b = otoc.build_example_observables(64, 0.5, 0.5)
        t = 1.3
        w = fact64.reconstruct()
        u = sla.expm(-1j * w * t)
        a_t = u @ a.matrix @ u.conj().T
        comm = a_t @ b.matrix - b.matrix @ a_t
        c_brute = 0.5 * np.trace(comm.conj().T @ comm).real / 64
        d_brute = np.trace(a_t @ a_t @ b.matrix @ b.matrix).real / 64
        d, f, c = otoc.empirical_otoc(fact64, a, b, [t])
        assert c[0] == pytest.approx(c_brute, abs=1e-10)
        assert d[0] == pytest.approx(d_brute, abs=1e-10)

    def test_low_rank_matches_dense(self, fact64):
        a, b = otoc.build_example_observables(64, 0.6, 0.5)
        dense_a = otoc.Observable.from_matrix(a.matrix)
        dense_b = otoc.Observable.from_matrix(b.matrix)
        ts = np.linspace(0, 4, 9)
        d1, f1, c1 = otoc.empirical_otoc(fact64, a, b, ts)
        d2, f2, c2 = otoc.empirical_otoc(fact64, dense_a, dense_b, ts)
        assert np.abs(d1 - d2).max() < 1e-10
        assert np.abs(f1 - f2).max() < 1e-10

    def test_positivity(self, fact64, rng):
        a = random_hermitian(rng, 64)
        b = random_hermitian(rng, 64)
        _, _, c = otoc.empirical_otoc(fact64, a, b, np.linspace(0, 6, 25))
        assert np.min(c) >= -1e-10


class TestTheoreticalOtoc:
    def test_zero_time(self, rng):
        a = otoc.Observable.from_matrix(random_hermitian(rng, 16, traceless=True))
        b = otoc.Observable.from_matrix(random_hermitian(rng, 16, traceless=True))
        m = otoc.moment_set(a, b)
        val = otoc.theoretical_otoc(m, [0.0])[0]
        assert val == pytest.approx(m.a2b2 - m.abab.real, abs=1e-12)

    def test_long_time_thermal(self, rng):
        a = otoc.Observable.from_matrix(random_hermitian(rng, 16, traceless=True))
        b = otoc.Observable.from_matrix(random_hermitian(rng, 16, traceless=True))
        m = otoc.moment_set(a, b)
        val = otoc.theoretical_otoc(m, [200.0])[0]
        assert val == pytest.approx(m.a2 * m.b2, rel=1e-3)

    def test_example1_reduction_identity(self, rng):
        # with A = B the four-term expression collapses to the two-term form
        a, _ = otoc.build_example_observables(128, 0.5, 0.5)
        m = otoc.moment_set(a, a)
        ts = rng.uniform(0, 8, 25)
        general = otoc.theoretical_otoc(m, ts)
        p = sc.phi(ts)
        p2 = sc.phi(2 * ts)
        a2, a4 = m.a2, m.a2b2
        reduced = a2**2 * (1 - p**2 * (1 + 2 * p2 - 2 * p**2)) + a4 * (p**2 - p**4)
        assert np.abs(general - reduced).max() < 1e-12

    def test_leading_term_matches_ensemble_average(self):
        # the sign of the cross term is observable: at t = 0.474 the two
        # candidate signs differ by ~0.58 while the ensemble average has
        # a standard error two orders below that
        n, samples = 64, 300
        a, _ = otoc.build_example_observables(n, 0.5, 0.5)
        m = otoc.moment_set(a, a)
        t = np.array([0.474])
        spec = ensemble.WignerSpec(n=n, symmetry="real-symmetric", seed=113)
        vals = []
        for i in range(samples):
            fact = ensemble.eigendecompose(ensemble.sample_wigner(spec, i))
            vals.append(otoc.empirical_otoc(fact, a, a, t)[2][0])
        mean = float(np.mean(vals))
        theory = otoc.theoretical_otoc(m, t)[0]
        assert abs(mean - theory) < 0.1

    def test_example2_form(self):
        a, b = otoc.build_example_observables(128, 0.5, 0.5)
        m = otoc.moment_set(a, b)
        ts = np.linspace(0, 6, 31)
        assert np.abs(otoc.theoretical_otoc(m, ts) - m.a2 * m.b2 * (1 - sc.phi(ts) ** 2)).max() < 1e-14

    def test_rejects_tracial(self, rng):
        a = otoc.Observable.from_matrix(random_hermitian(rng, 8) + 2 * np.eye(8))
        m = otoc.moment_set(a, a)
        with pytest.raises(ValueError):
            otoc.theoretical_otoc(m, [1.0])

    def test_short_time_laws(self):
        # quadratic growth; the coefficients follow second-order
        # perturbation theory: <A^2><B^2> + 2<AB>^2 + <A^2B^2> for
        # commuting pairs, which the disjoint pair reduces to
        # <A^2><B^2> and the identical pair to <A^4> + 3<A^2>^2
        a, b = otoc.build_example_observables(256, 0.5, 0.5)
        t = 1e-3
        m2 = otoc.moment_set(a, b)
        val2 = otoc.theoretical_otoc(m2, [t])[0]
        assert val2 / t**2 == pytest.approx(m2.a2 * m2.b2, rel=0.01)
        m1 = otoc.moment_set(a, a)
        val1 = otoc.theoretical_otoc(m1, [t])[0]
        assert val1 / t**2 == pytest.approx(m1.a2b2 + 3 * m1.a2**2, rel=0.01)

    def test_short_time_perturbative_oracle(self, rng):
        # brute-force check of the quadratic coefficient: ensemble
        # average of C(t)/t^2 at tiny t against the commutator formula
        n, samples = 48, 200
        a, b = otoc.build_example_observables(n, 0.6, 0.6)
        m = otoc.moment_set(a, a)
        t = np.array([5e-3])
        spec = ensemble.WignerSpec(n=n, symmetry="real-symmetric", seed=127)
        vals = []
        for i in range(samples):
            fact = ensemble.eigendecompose(ensemble.sample_wigner(spec, i))
            vals.append(otoc.empirical_otoc(fact, a, a, t)[2][0] / t[0] ** 2)
        coeff = float(np.mean(vals))
        assert coeff == pytest.approx(m.a2b2 + 3 * m.a2**2, rel=0.1)


class TestFiniteTemperature:
    def test_empirical_beta_zero_exact(self, fact64):
        a, b = otoc.build_example_observables(64, 0.5, 0.5)
        ts = np.linspace(0, 3, 7)
        c_beta = otoc.empirical_otoc_beta(fact64, a, b, ts, 0.0)
        _, _, c_inf = otoc.empirical_otoc(fact64, a, b, ts)
        assert np.abs(c_beta - c_inf).max() <= 1e-12

    def test_empirical_beta_commuting_zero(self):
        w = np.diag(np.linspace(-1, 1, 16))
        fact = ensemble.eigendecompose(w)
        a = np.diag(np.arange(16.0) - 7.5)
        b = np.diag(np.linspace(0, 1, 16) - 0.5)
        for beta in (0.0, 1.0, 2.0):
            c = otoc.empirical_otoc_beta(fact, a, b, [0.5, 1.5], beta)
            assert np.abs(c).max() < 1e-12

    def test_theory_beta_zero_exact(self, rng):
        a = otoc.Observable.from_matrix(random_hermitian(rng, 16, traceless=True))
        m = otoc.moment_set(a, a)
        ts = np.linspace(0, 5, 21)
        assert np.abs(otoc.theoretical_otoc_beta(m, ts, 0.0) - otoc.theoretical_otoc(m, ts)).max() <= 1e-12

    def test_example2_beta_independent(self):
        a, b = otoc.build_example_observables(256, 0.7, 0.7)
        m = otoc.moment_set(a, b)
        ts = np.linspace(0, 8, 41)
        base = otoc.theoretical_otoc_beta(m, ts, 0.0)
        for beta in (1.0, 3.0):
            assert np.abs(otoc.theoretical_otoc_beta(m, ts, beta) - base).max() <= 1e-12

    def test_example1_peak_grows_with_beta(self):
        a, _ = otoc.build_example_observables(1024, 0.5, 0.5)
        m = otoc.moment_set(a, a)
        ts = np.linspace(0.2, 2.5, 120)
        peak0 = np.max(otoc.theoretical_otoc_beta(m, ts, 0.0))
        peak3 = np.max(otoc.theoretical_otoc_beta(m, ts, 3.0))
        assert peak3 > peak0

    def test_small_beta_finite_difference(self, fact64):
        # d/dbeta at 0 of the Gibbs trace matches a central difference
        a, b = otoc.build_example_observables(64, 0.5, 0.5)
        t = np.array([1.1])
        h = 1e-4
        c_plus = otoc.empirical_otoc_beta(fact64, a, b, t, h)[0]
        _, _, c0 = otoc.empirical_otoc(fact64, a, b, t)
        # one-sided derivative from the trace formula
        lam = fact64.eigenvalues
        at = fact64.eigenvectors.conj().T @ a.matrix @ fact64.eigenvectors
        bt = fact64.eigenvectors.conj().T @ b.matrix @ fact64.eigenvectors
        u = np.exp(-1j * lam * t[0])
        a_t = (u[:, None] * at) * u.conj()[None, :]
        comm = a_t @ bt - bt @ a_t
        col = np.sum(np.abs(comm) ** 2, axis=0)
        # derivative of (1/2) sum_i w_i col_i with w_i = e^(-beta lam_i)/Z
        expected_deriv = -0.5 * (np.mean(lam * col) - np.mean(lam) * np.mean(col))
        fd = (c_plus - c0[0]) / h
        assert fd == pytest.approx(expected_deriv, rel=1e-2, abs=1e-6)

    def test_beta_guard(self, fact64):
        a, b = otoc.build_example_observables(64, 0.5, 0.5)
        with pytest.raises(ValueError):
            otoc.empirical_otoc_beta(fact64, a, b, [1.0], 50.0)
        with pytest.raises(ValueError):
            otoc.empirical_otoc_beta(fact64, a, b, [1.0], -1.0)


class TestSff:
    def test_value_at_zero(self):
        assert otoc.sff_closed_form(0.0, 64) == pytest.approx(1.0, abs=1e-14)

    def test_ramp_end(self):
        n = 32
        t = 2.0 * n
        expected = (sc.bessel_j1(2 * t) / t) ** 2 + 1.0 / n
        assert otoc.sff_closed_form(t, n) == pytest.approx(expected, rel=1e-12)

    def test_empirical_consistency_small(self):
        spec = ensemble.WignerSpec(n=128, symmetry="complex-hermitian", seed=103)
        eigs = [np.linalg.eigvalsh(ensemble.sample_wigner(spec, i)) for i in range(60)]
        ts = np.linspace(0.0, 8.0, 33)
        mean, std = otoc.empirical_sff(eigs, ts)
        se = std / math.sqrt(len(eigs))
        theory = otoc.sff_closed_form(ts, 128)
        frac = np.mean(np.abs(mean - theory) <= 3 * se + 1e-12)
        assert frac >= 0.9


class TestGueOverlap:
    def test_zero_time(self, rng):
        a = random_hermitian(rng, 16)
        b = random_hermitian(rng, 16)
        val = otoc.gue_overlap_prediction(a, b, 0.0, 16)
        assert val == pytest.approx(np.trace(a @ b).real / 16, rel=1e-12)

    def test_stationary_value(self, rng):
        n = 16
        a = random_hermitian(rng, n)
        b = random_hermitian(rng, n)
        mean_a = np.trace(a).real / n
        mean_b = np.trace(b).real / n
        mean_ab = np.trace(a @ b).real / n
        stationary = (1 - 1 / (n + 1)) * mean_a * mean_b + mean_ab / (n + 1)
        val = otoc.gue_overlap_prediction(a, b, 1e7, n)
        assert val == pytest.approx(stationary, rel=1e-4)


class TestEstimators:
    def test_example2_scales(self):
        a, b = otoc.build_example_observables(1024, 0.7, 0.7)
        m = otoc.moment_set(a, b)
        ts = np.linspace(0, 10, 400)
        th = otoc.theoretical_otoc(m, ts)
        t_star = otoc.estimate_scrambling_time(ts, th)
        assert 1.0 <= t_star.value <= 3.0
        t_relax = otoc.estimate_relaxation_time(ts, th, m.a2 * m.b2)
        assert t_relax.status == "ok"
        assert t_relax.value <= 3.0

    def test_example1_peak_height(self):
        # the peak scales like <A^4> ~ N^(1-a) with sharp prefactor
        # max_t (phi^2 - phi^4) = 1/4
        n, ae = 1024, 0.5
        a, _ = otoc.build_example_observables(n, ae, ae)
        m = otoc.moment_set(a, a)
        ts = np.linspace(0, 5, 400)
        peak = np.max(otoc.theoretical_otoc(m, ts))
        nominal = n ** (1 - ae) / 4.0
        assert nominal / 2 <= peak <= 2 * nominal

    def test_band_statuses(self):
        ts = np.linspace(0, 1, 11)
        inside = np.ones(11)
        est = otoc.estimate_relaxation_time(ts, inside, 1.0)
        assert est.status == "never-exited"
        assert est.value == 0.0
        outside = np.full(11, 5.0)
        est = otoc.estimate_relaxation_time(ts, outside, 1.0)
        assert est.status == "never-entered"
        assert est.value is None
