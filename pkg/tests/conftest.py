"""Shared fixtures and field generators."""

import numpy as np
import pytest

from nslift.field import Grid, SpectralField, dealias, project_leray, symmetrize


def random_field(grid: Grid, rng: np.random.Generator, kmax: int | None = None,
                 solenoidal: bool = True, mean: bool = False) -> SpectralField:
    """Random real field on ``|k_i| ≤ kmax`` (dealias cube by default)."""
    kmax = grid.kmax_dealias if kmax is None else kmax
    shape = (3,) + grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = np.all(np.abs(grid.wavenumbers) <= kmax, axis=0)
    c = c * mask / np.sqrt(mask.sum())
    if not mean:
        c[:, 0, 0, 0] = 0.0
    f = symmetrize(SpectralField(grid, c))
    f = dealias(f)
    return project_leray(f) if solenoidal else f


@pytest.fixture(scope="session")
def grid8():
    return Grid(8)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
