import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gkdvlab.spectral import Field, Grid

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


def random_real_field(grid, seed, band=None, zero_mean=False):
    """Real field with random coefficients on the retained modes (or ``|xi| <= band``)."""
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.M, dtype=complex)
    sel = (grid.k > 0) & grid.retained
    if band is not None:
        sel &= np.abs(grid.xi) <= band
    z = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    c[sel] = z
    c[(-grid.k[sel]) % grid.M] = np.conj(z)
    if not zero_mean:
        c[0] = rng.standard_normal()
    return Field(grid, c, "spectral", True)


@pytest.fixture
def small_grid():
    return Grid(2 * np.pi, 64)
