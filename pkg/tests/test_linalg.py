import numpy as np
import pytest

from hbht.linalg import as_matrix, least_squares_on_support, matvec, read_csv, rmatvec, write_csv


def test_matvec_examples():
    assert np.array_equal(matvec(np.eye(2), [3, -1]), [3, -1])
    assert np.array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3, 7])
    assert np.array_equal(matvec(np.zeros((1, 3)), [5, 6, 7]), [0])


def test_matvec_dimension_mismatch():
    with pytest.raises(ValueError):
        matvec(np.eye(2), [1, 2, 3])
    with pytest.raises(ValueError):
        rmatvec(np.eye(2), [1, 2, 3])


def test_non_finite_entries_rejected():
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])


def test_adjointness():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m, n = rng.integers(1, 12, size=2)
        A = rng.standard_normal((m, n))
        u, v = rng.standard_normal(n), rng.standard_normal(m)
        lhs, rhs = matvec(A, u) @ v, u @ rmatvec(A, v)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_ls_identity_columns():
    z, flag = least_squares_on_support(np.eye(3), [1, 2, 3], [0, 2])
    assert np.allclose(z, [1, 0, 3]) and not flag
    assert z[1] == 0.0


def test_ls_hand_normal_equations():
    # [[2,1],[1,2]] z = (3,3) gives z = (1,1)
    A = [[1, 0], [1, 1], [0, 1]]
    z, flag = least_squares_on_support(A, [1, 2, 1], [0, 1])
    assert np.allclose(z, [1, 1], atol=1e-14)
    assert not flag


def test_ls_orthonormal_columns_project():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    S = np.array([1, 4, 6])
    y = rng.standard_normal(8)
    z, _ = least_squares_on_support(Q, y, S)
    assert np.allclose(z[S], Q[:, S].T @ y, atol=1e-13)
    assert np.all(np.delete(z, S) == 0)


def test_ls_square_nonsingular_is_inverse():
    rng = np.random.default_rng(2)
    for _ in range(20):
        A = rng.standard_normal((6, 6)) + 3 * np.eye(6)
        y = rng.standard_normal(6)
        z, flag = least_squares_on_support(A, y, np.arange(6))
        ref = np.linalg.solve(A, y)
        assert np.linalg.norm(z - ref) <= 1e-10 * np.linalg.norm(ref)
        assert not flag


def test_ls_beats_random_perturbations():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((10, 15))
    y = rng.standard_normal(10)
    S = np.array([0, 3, 7, 9])
    z, _ = least_squares_on_support(A, y, S)
    best = np.linalg.norm(y - A @ z)
    for _ in range(100):
        w = z.copy()
        w[S] += 1e-3 * rng.standard_normal(S.size)
        assert best <= np.linalg.norm(y - A @ w)


def test_ls_rank_deficient_min_norm_and_flag():
    A = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
    z, flag = least_squares_on_support(A, [2.0, 2.0], [0, 1])
    assert flag
    # identical columns: the minimum-norm solution splits the weight evenly
    assert np.allclose(z, [1.0, 1.0, 0.0])


def test_ls_empty_support():
    z, flag = least_squares_on_support(np.eye(3), [1, 2, 3], [])
    assert np.array_equal(z, np.zeros(3)) and not flag


def test_ls_errors():
    with pytest.raises(ValueError):
        least_squares_on_support(np.eye(3), [1, 2], [0])
    with pytest.raises(ValueError):
        least_squares_on_support(np.eye(3), [1, 2, 3], [5])


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    A = rng.standard_normal((3, 5))
    write_csv(tmp_path / "a.csv", A)
    assert np.array_equal(read_csv(tmp_path / "a.csv"), A)
    v = rng.standard_normal(4)
    write_csv(tmp_path / "v.csv", v)
    assert np.array_equal(read_csv(tmp_path / "v.csv", vector=True), v)
