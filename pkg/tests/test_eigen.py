import numpy as np
import pytest

from simcal.eigen import smallest_eigvec


def random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A @ A.conj().T / n


def test_matches_dense_solver():
    rng = np.random.default_rng(11)
    for n in (2, 3, 5, 8, 13, 20):
        for _ in range(10):
            A = random_hermitian(rng, n)
            lam, v = smallest_eigvec(A)
            w, V = np.linalg.eigh(A)
            assert lam == pytest.approx(w[0], abs=1e-9 * max(1.0, w[-1]))
            ref = V[:, 0]
            # eigenvectors match up to a unit phase
            overlap = abs(np.vdot(ref, v))
            assert overlap == pytest.approx(1.0, abs=1e-8)


def test_unit_norm_and_residual():
    rng = np.random.default_rng(2)
    A = random_hermitian(rng, 12)
    lam, v = smallest_eigvec(A)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(A @ v - lam * v) < 1e-8 * np.linalg.norm(A)


def test_exact_null_space():
    # rank-deficient PSD matrix: the smallest eigenvalue is exactly zero
    rng = np.random.default_rng(7)
    B = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    A = B @ B.conj().T     # rank 4, two zero eigenvalues
    lam, v = smallest_eigvec(A)
    assert lam < 1e-10
    assert np.linalg.norm(A @ v) < 1e-8


def test_tiny_scale_matrix():
    # absolute scale must not matter
    rng = np.random.default_rng(5)
    A = random_hermitian(rng, 6) * 1e-10
    lam, v = smallest_eigvec(A)
    w = np.linalg.eigvalsh(A)
    assert lam == pytest.approx(w[0], rel=1e-6, abs=1e-20)
