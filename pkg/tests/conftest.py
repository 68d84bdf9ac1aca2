import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--skip-n14", action="store_true", default=False,
                     help="finite-size scaling without the N=14 size (tested at 2 sigma)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_complex(rng, n, m=None):
    m = n if m is None else m
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def random_unitary(rng, n):
    q, r = np.linalg.qr(random_complex(rng, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))
