import numpy as np
import pytest
from numpy.testing import assert_allclose

from ltnet import config, linalg
from ltnet.errors import CapExceededError, DimensionError, PerronError


def test_diagonal_spectrum():
    s = linalg.eigen(np.diag([-1.0, -3.0]))
    assert_allclose(sorted(s.eigenvalues.real), [-3.0, -1.0])
    assert s.abscissa == -1.0
    assert s.radius == 3.0


def test_rotation_spectrum():
    s = linalg.eigen([[0.0, 1.0], [-1.0, 0.0]])
    assert_allclose(sorted(s.eigenvalues.imag), [-1.0, 1.0], atol=1e-12)
    assert abs(s.abscissa) < 1e-12
    assert_allclose(s.radius, 1.0)


def test_pair_linear_region_is_unstable():
    # -I + W for a=4, b=c=3, d=0: characteristic polynomial l^2 - 2l + 6
    s = linalg.eigen([[3.0, -3.0], [3.0, -1.0]])
    assert_allclose(s.abscissa, 1.0)
    assert_allclose(np.abs(s.eigenvalues.imag), [np.sqrt(5), np.sqrt(5)])


def test_triangular_matrix_uses_exact_diagonal():
    A = np.array([[-2.0, 5.0, 1.0], [0.0, -1.0, 7.0], [0.0, 0.0, -4.0]])
    assert linalg.eigen(A).abscissa == -1.0


def test_eigen_rejects_non_square():
    with pytest.raises(DimensionError):
        linalg.eigen(np.zeros((2, 3)))


def test_eigen_dimension_cap(monkeypatch):
    monkeypatch.setattr(config, "EIG_DIM_CAP", 3)
    with pytest.raises(CapExceededError):
        linalg.eigen(np.eye(4))


def test_solve_identity_and_back_substitution():
    assert_allclose(linalg.solve(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    assert_allclose(linalg.solve([[1.0, -0.5], [0.0, 1.0]], [1.0, 2.0]), [2.0, 2.0])


def test_solve_several_right_hand_sides():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    B = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert_allclose(linalg.solve(A, B), np.linalg.inv(A))


def test_rank_deficient_solve_reports_singularity():
    result = linalg.solve([[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0])
    assert isinstance(result, linalg.SingularReport)
    assert result.condition > config.SINGULAR_COND


@pytest.mark.parametrize("n", [1, 3, 6])
def test_identity_is_p_matrix(n):
    assert linalg.is_p_matrix(np.eye(n))


def test_mutual_inhibition_breaks_p_property():
    assert not linalg.is_p_matrix([[1.0, 2.0], [2.0, 1.0]])


def test_diagonally_dominant_is_p_matrix(rng):
    for _ in range(20):
        A = rng.uniform(-1, 1, (4, 4))
        A += np.diag(np.abs(A).sum(axis=1) + 0.1)
        assert linalg.is_p_matrix(A)


def test_principal_minor_count():
    minors = list(linalg.principal_minors(np.eye(4)))
    assert len(minors) == 2 ** 4 - 1
    assert minors[0] == ((0,), 1.0)


def test_perron_vector_of_cycle():
    Fc = np.array([[0.0, 2.0, 0.0], [0.0, 0.0, 2.0], [2.0, 0.0, 0.0]])
    rho, v = linalg.perron_vector(Fc)
    assert_allclose(rho, 2.0)
    assert_allclose(v, np.ones(3) / np.sqrt(3))


def test_perron_vector_rejects_reducible():
    with pytest.raises(PerronError):
        linalg.perron_vector([[1.0, 0.0], [0.0, 2.0]])


def test_tolerance_scales_with_norm():
    assert linalg.tolerance(np.eye(2)) == config.REL_TOL
    assert_allclose(linalg.tolerance([[100.0, 0.0], [0.0, 1.0]]), 100 * config.REL_TOL)
