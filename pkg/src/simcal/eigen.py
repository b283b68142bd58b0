"""Smallest-eigenpair solver for Hermitian positive semidefinite matrices.

Inverse power iteration with a small diagonal shift; falls back to a full
dense eigendecomposition for small matrices if iteration fails to converge.
"""

from __future__ import annotations

import numpy as np


class EigenError(RuntimeError):
    pass


def smallest_eigvec(A: np.ndarray, tol: float = 1e-12, max_iter: int = 500
                    ) -> tuple[float, np.ndarray]:
    """Return (lambda_min, unit eigenvector) of a Hermitian PSD matrix."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = max(np.abs(np.trace(A)).real / n, 1.0)
    shift = 1e-12 * scale
    B = A + shift * np.eye(n)

    # deterministic start vector with all components populated
    v = np.exp(1j * np.linspace(0.0, 1.0, n)) / np.sqrt(n)
    a_norm = np.linalg.norm(A, ord="fro") + shift
    lam = float(np.real(v.conj() @ A @ v))
    for it in range(max_iter):
        try:
            w = np.linalg.solve(B, v)
        except np.linalg.LinAlgError:
            break
        w /= np.linalg.norm(w)
        lam = float(np.real(w.conj() @ A @ w))
        resid = np.linalg.norm(A @ w - lam * w)
        v = w
        if resid <= tol * a_norm:
            return lam, v

    if n <= 64:
        # Jacobi-style full decomposition fallback for small problems
        evals, evecs = np.linalg.eigh(A)
        return float(evals[0]), evecs[:, 0]
    raise EigenError(
        f"inverse iteration did not converge in {max_iter} iterations "
        f"(last residual relative to ||A||: {resid / a_norm:.3e})")
