import numpy as np
import pytest

from wigner_otoc import ensemble


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def small_fact():
    """A 48-dimensional complex Hermitian factorization shared by tests."""
    spec = ensemble.WignerSpec(n=48, symmetry="complex-hermitian", seed=101)
    w = ensemble.sample_wigner(spec)
    return w, ensemble.eigendecompose(w)


def random_hermitian(rng, n, complex_entries=True, traceless=False):
    if complex_entries:
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    else:
        a = rng.standard_normal((n, n))
    a = (a + a.conj().T) / 2.0
    if traceless:
        a -= (np.trace(a) / n) * np.eye(n)
    return a
