import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpddsim.arrays import (InvalidInputError, UlaGeometry, UpaGeometry, path_outer_product,
                            ula_response, upa_response)

angles = st.floats(-10, 10, allow_nan=False)


def test_ula_broadside_and_endfire():
    g = UlaGeometry(2)
    np.testing.assert_allclose(ula_response(g, 0.0), np.ones(2) / np.sqrt(2), atol=1e-15)
    np.testing.assert_allclose(ula_response(g, np.pi / 2), np.array([1, -1]) / np.sqrt(2),
                               atol=1e-15)


def test_ula_phase_progression():
    a = ula_response(UlaGeometry(4), np.pi / 6)
    # per-element phase step: -2 pi * 0.5 * sin(pi/6) = -pi/2
    expected = np.exp(-0.5j * np.pi * np.arange(4)) / 2
    np.testing.assert_allclose(a, expected, atol=1e-14)


def test_upa_small_cases():
    np.testing.assert_allclose(upa_response(UpaGeometry(1, 1), 0.3, 1.1), [1.0])
    np.testing.assert_allclose(upa_response(UpaGeometry(2, 1), 0.0, np.pi / 2),
                               np.ones(2) / np.sqrt(2), atol=1e-15)
    b = upa_response(UpaGeometry(2, 2), np.pi / 2, np.pi / 2)
    # x-major ordering: x phase flips sign, z phase constant
    np.testing.assert_allclose(b, np.array([1, 1, -1, -1]) / 2, atol=1e-15)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_angles_rejected(bad):
    with pytest.raises(InvalidInputError):
        ula_response(UlaGeometry(3), bad)
    with pytest.raises(InvalidInputError):
        upa_response(UpaGeometry(2, 2), 0.1, bad)


def test_geometry_validation():
    with pytest.raises(InvalidInputError):
        UlaGeometry(0)
    with pytest.raises(InvalidInputError):
        UpaGeometry(2, 2, dx=0)


@given(st.integers(1, 12), angles)
def test_ula_unit_norm(n, phi):
    assert abs(np.linalg.norm(ula_response(UlaGeometry(n), phi)) - 1) < 1e-12


@given(st.integers(1, 6), st.integers(1, 6), angles, angles)
def test_upa_unit_norm(nx, nz, phi, theta):
    assert abs(np.linalg.norm(upa_response(UpaGeometry(nx, nz), phi, theta)) - 1) < 1e-12


@given(st.integers(1, 10), angles, st.floats(0.1, 2.0))
def test_ula_matches_degenerate_upa(n, phi, d):
    ula = ula_response(UlaGeometry(n, d), phi)
    upa = upa_response(UpaGeometry(n, 1, d, d), phi, np.pi / 2)
    np.testing.assert_allclose(ula, upa, atol=1e-12)


@given(st.integers(1, 6), st.integers(1, 6), angles, angles, angles, angles)
def test_outer_product_rank_one(nr, nt, a, b, c, d):
    B = path_outer_product(upa_response(UpaGeometry(nr, 2), a, b),
                           upa_response(UpaGeometry(nt, 1), c, d))
    s = np.linalg.svd(B, compute_uv=False)
    assert abs(np.linalg.norm(B) - 1) < 1e-12
    assert abs(s[0] - 1) < 1e-12
    assert np.all(s[1:] < 1e-12)


def test_outer_product_trivial():
    np.testing.assert_allclose(path_outer_product(np.array([1.0]), np.array([1.0])), [[1.0]])
