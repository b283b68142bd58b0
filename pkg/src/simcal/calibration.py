"""Calibration-coefficient estimators: Argos, Argos-mean, classic TLS, and the
two-step ML-TLS (per-link delay/coefficient ML followed by a joint TLS over
all links).

Coefficient conventions:
  link coefficient  c_link[m, n] = c_ue[n] / c_bs[m]   (absolute, gauge-free)
  node coefficients c_bs, c_ue are defined up to one global complex scale and
  are stored gauge-fixed so the reference BS port (last port) equals 1.
The full per-subcarrier coefficient of a link is
  C(m, n, k) = c_link[m, n] * exp(-j 4 pi k df tau_hat[m, n])
evaluated at the calibration symbol (frequency-offset drift after that symbol
is the phase tracker's job).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigen import smallest_eigvec
from .pilots import EquivalentChannel

MIN_MAG = 1e-12


class EstimationError(RuntimeError):
    pass


@dataclass
class CalibrationSet:
    """Estimated calibration coefficients plus per-link timing offsets."""

    c_bs: np.ndarray | None = None          # (M,) or (M, K)
    c_ue: np.ndarray | None = None          # (N,) or (N, K)
    c_link: np.ndarray | None = None        # (M, N), absolute link coefficients
    tau_hat: np.ndarray | None = None       # (M, N), one-way seconds
    e_hat: np.ndarray | None = None         # (M, N), dimensionless
    per_subcarrier: np.ndarray | None = None  # (M, N, K) raw per-k coefficients
    k_indices: np.ndarray | None = None     # absolute subcarriers of per_subcarrier
    tau_bs: np.ndarray | None = None        # (M,) per-node decomposition
    tau_ue: np.ndarray | None = None        # (N,)
    e_bs: np.ndarray | None = None
    e_ue: np.ndarray | None = None
    reference: str = "last BS port = 1"
    invalid: np.ndarray | None = None       # mask of unusable entries

    def link_coeff(self, m: int, n: int, k_indices: np.ndarray, df: float) -> np.ndarray:
        """C(m, n, k) over absolute subcarrier indices at the calibration symbol."""
        k = np.asarray(k_indices, dtype=float)
        if self.per_subcarrier is not None:
            if self.k_indices is None:
                raise EstimationError("per-subcarrier set lacks its k grid")
            pos = _match_indices(self.k_indices, k)
            return self.per_subcarrier[m, n, pos]
        if self.c_link is None or self.tau_hat is None:
            raise EstimationError("no link coefficients available; run calibration first")
        return self.c_link[m, n] * np.exp(-4j * np.pi * k * df * self.tau_hat[m, n])

    def bs_port_coeff(self, k_indices: np.ndarray, df: float) -> np.ndarray:
        """Per-BS-port factor F_m(k) of the link coefficient, up to a common
        per-UE scalar: F_m(k) = exp(+j 4 pi k df tau_bs[m]) / c_bs[m].

        Dividing an UL channel by F gives the DL prediction up to a factor
        common to all ports, which coherent combining does not see.
        """
        k = np.asarray(k_indices, dtype=float)
        if self.c_bs is None:
            raise EstimationError("no BS-side coefficients available")
        if self.c_bs.ndim == 2:
            pos = _match_indices(self.k_indices, k)
            return self.c_bs[:, pos] ** -1
        if self.tau_bs is None:
            return (1.0 / self.c_bs)[:, None] * np.ones_like(k)[None, :]
        return (1.0 / self.c_bs)[:, None] * np.exp(
            4j * np.pi * k[None, :] * df * self.tau_bs[:, None])

    def to_csv(self, path) -> None:
        """Serialize link coefficients as (m, n, tau_hat_s, c_re, c_im)."""
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "n", "tau_hat_s", "c_re", "c_im"])
            if self.c_link is None:
                return
            M, N = self.c_link.shape
            for m in range(M):
                for n in range(N):
                    tau = 0.0 if self.tau_hat is None else self.tau_hat[m, n]
                    c = self.c_link[m, n]
                    w.writerow([m, n, repr(float(tau)),
                                repr(float(c.real)), repr(float(c.imag))])


def _match_indices(have: np.ndarray, want: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(have, want)
    if np.any(pos >= len(have)) or np.any(have[np.minimum(pos, len(have) - 1)] != want):
        raise EstimationError("requested subcarriers missing from the calibration grid")
    return pos


def ideal_link_coeff(trp_imp, ue_imp, k_indices, df, fc, T, l=0.0) -> np.ndarray:
    """Ground-truth calibration coefficient of a link (injected-truth oracle)."""
    k = np.asarray(k_indices, dtype=float)
    tau_nm = ue_imp.tau_s - trp_imp.tau_s
    e_nm = ue_imp.e - trp_imp.e
    ratio = (trp_imp.beta_r * ue_imp.beta_t) / (ue_imp.beta_r * trp_imp.beta_t)
    return ratio * np.exp(-4j * np.pi * k * df * tau_nm) \
                 * np.exp(4j * np.pi * e_nm * fc * l * T)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def argos(G: np.ndarray, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise calibration: C = G / H^T.

    G has shape (M, N[, K]), H has shape (N, M[, K]).  Column n of the result
    is the BS coefficient vector referenced to user n.  Returns (C, invalid)
    where invalid marks entries with a (near-)zero denominator.
    """
    G = np.asarray(G, dtype=complex)
    H = np.asarray(H, dtype=complex)
    Ht = np.swapaxes(H, 0, 1)
    if Ht.shape != G.shape:
        raise ValueError(f"shape mismatch: G {G.shape} vs H^T {Ht.shape}")
    invalid = np.abs(Ht) < MIN_MAG
    denom = np.where(invalid, 1.0, Ht)
    C = G / denom
    C[invalid] = np.nan
    return C, invalid


def argos_mean(G: np.ndarray, H: np.ndarray, ref: int = -1) -> CalibrationSet:
    """Average per-user Argos columns after normalizing each to unit value at
    the reference BS port; the reference coefficient is exactly 1.

    The averaged column is the per-port factor of the link coefficient, i.e.
    the reciprocal of the node coefficient, so it is inverted before storing
    (CalibrationSet keeps node-convention c_bs)."""
    C, invalid = argos(G, H)
    ref_vals = C[ref]                       # shape (N[, K])
    if np.any(np.abs(ref_vals) < MIN_MAG) or np.any(np.isnan(ref_vals)):
        raise EstimationError("reference-port coefficient invalid for some user")
    normed = C / ref_vals[None, ...]
    c_col = np.nanmean(normed, axis=1)      # (M[, K])
    if np.any(np.abs(c_col) < MIN_MAG):
        raise EstimationError("averaged coefficient vanished on some port")
    cal = CalibrationSet(c_bs=1.0 / c_col, invalid=invalid)
    return cal


def tls_classic(G: np.ndarray, H: np.ndarray, ref: int = -1) -> CalibrationSet:
    """Classic TLS calibration: smallest eigenvector of Q^H Q with
    Q = [I_M (x) G^T, -H (x) I_N] (column-wise Kronecker blocks)."""
    G = np.asarray(G, dtype=complex)
    H = np.asarray(H, dtype=complex)
    if G.ndim == 3:
        M, N, K = G.shape
        c_bs = np.empty((M, K), dtype=complex)
        c_ue = np.empty((N, K), dtype=complex)
        per_k = np.empty((M, N, K), dtype=complex)
        for i in range(K):
            sub = tls_classic(G[:, :, i], H[:, :, i], ref=ref)
            c_bs[:, i] = sub.c_bs
            c_ue[:, i] = sub.c_ue
            per_k[:, :, i] = sub.c_ue[None, :] / sub.c_bs[:, None]
        return CalibrationSet(c_bs=c_bs, c_ue=c_ue, per_subcarrier=per_k)

    M, N = G.shape
    if H.shape != (N, M):
        raise ValueError(f"H must be (N, M) = ({N}, {M}), got {H.shape}")
    Q = np.zeros((N * M, M + N), dtype=complex)
    for m in range(M):
        # column m: vec(G^T C_BS) contribution, e_m kron (row m of G)
        Q[m * N:(m + 1) * N, m] = G[m, :]
    for n in range(N):
        # column M+n: -vec(C_UE H) contribution, (row n of H) kron e_n
        Q[n::N, M + n] = -H[n, :]
    A = Q.conj().T @ Q
    _, v = smallest_eigvec(A)
    c_bs, c_ue = v[:M], v[M:]
    c_bs, c_ue = _gauge_fix(c_bs, c_ue, ref)
    c_link = c_ue[None, :] / c_bs[:, None]
    return CalibrationSet(c_bs=c_bs, c_ue=c_ue, c_link=c_link,
                          tau_hat=np.zeros((M, N)))


def _gauge_fix(c_bs: np.ndarray, c_ue: np.ndarray, ref: int = -1):
    scale = c_bs[ref]
    if np.abs(scale) < MIN_MAG:
        raise EstimationError("reference BS port coefficient is numerically zero")
    return c_bs / scale, c_ue / scale


# ---------------------------------------------------------------------------
# two-step ML-TLS
# ---------------------------------------------------------------------------

def ml_delay_coeff(g: np.ndarray, k_indices: np.ndarray, df: float,
                   tau_window: tuple[float, float], doubled: bool = True,
                   grid_step: float | None = None, refine_iters: int = 40
                   ) -> tuple[float, complex]:
    """ML delay + complex coefficient from one link's comb samples.

    Fits g(k) = c * exp(-j a k df tau) with a = 4 pi (round-trip equivalent
    channel, the default) or 2 pi (one-way sensing data).  With the doubled
    basis the returned tau is already the one-way offset.  2D input (K, S) is
    averaged coherently across symbols first (static assumption).

    Coarse grid argmax of |phi(tau)^H g|^2 followed by golden-section
    refinement on the bracketing interval.
    """
    g = np.asarray(g, dtype=complex)
    if g.ndim == 2:
        g = g.mean(axis=1)
    k = np.asarray(k_indices, dtype=float)
    if g.size == 0 or k.size != g.size:
        raise EstimationError("need matching, non-empty samples and subcarriers")
    if g.size < 2:
        raise EstimationError("need at least 2 comb subcarriers")
    if not np.any(np.abs(g) > MIN_MAG):
        raise EstimationError("all-zero input: objective is flat, no delay estimate")

    rate = (4.0 if doubled else 2.0) * np.pi * df
    K_comb = len(k)
    df_comb = (k[1] - k[0]) * df
    if grid_step is None:
        grid_step = 1.0 / (8.0 * K_comb * df_comb)
    lo, hi = tau_window
    taus = np.arange(lo, hi + grid_step, grid_step)

    def objective(tau_arr):
        # phi(tau)^H g = sum_k g_k exp(+j rate k tau)
        E = np.exp(1j * rate * np.outer(np.atleast_1d(tau_arr), k))
        return np.abs(E @ g) ** 2

    obj = objective(taus)
    i0 = int(np.argmax(obj))
    a = taus[max(0, i0 - 1)]
    b = taus[min(len(taus) - 1, i0 + 1)]

    # golden-section maximization on [a, b]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1 = objective(x1)[0]
    f2 = objective(x2)[0]
    for _ in range(refine_iters):
        if f1 > f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = objective(x1)[0]
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = objective(x2)[0]
    tau_hat = 0.5 * (a + b)
    # keep the exact grid point if refinement cannot beat it
    if objective(taus[i0])[0] >= objective(tau_hat)[0]:
        tau_hat = taus[i0]

    phi = np.exp(-1j * rate * k * tau_hat)
    c_hat = (phi.conj() @ g) / (phi.conj() @ phi)
    return float(tau_hat), complex(c_hat)


def tls_joint(c_hat: np.ndarray, ref: int = -1) -> CalibrationSet:
    """Joint TLS over per-link ML coefficients c_hat[m, n] ~ c_ue[n] / c_bs[m].

    Minimizes sum_{n,m} |c_bs[m] c_hat[m,n] - c_ue[n]|^2 via the smallest
    eigenvector of the Hermitian block matrix the cost factors into.
    """
    c_hat = np.asarray(c_hat, dtype=complex)
    M, N = c_hat.shape
    if not np.all(np.isfinite(c_hat)):
        raise EstimationError("non-finite link coefficient input")
    scale = float(np.mean(np.abs(c_hat)))
    if scale < MIN_MAG:
        raise EstimationError("all link coefficients are numerically zero")
    # rescale so both node blocks sit at O(1); otherwise the zero eigenvalue
    # hides in a cluster of near-zero ones and the eigenvector smears
    cs = c_hat / scale
    A = np.zeros((M + N, M + N), dtype=complex)
    A[:M, :M] = np.diag(np.sum(np.abs(cs) ** 2, axis=1))
    A[M:, M:] = M * np.eye(N)
    A_ub = -cs.T                         # (N, M): coefficient of u_n^* b_m
    A[M:, :M] = A_ub
    A[:M, M:] = A_ub.conj().T
    _, v = smallest_eigvec(A)
    c_bs, c_ue = _gauge_fix(v[:M], v[M:] * scale, ref)
    c_link = c_ue[None, :] / c_bs[:, None]
    return CalibrationSet(c_bs=c_bs, c_ue=c_ue, c_link=c_link)


def decompose_link_offsets(x: np.ndarray, ref: int = -1):
    """Least-squares split of per-link offsets x[m, n] = x_ue[n] - x_bs[m].

    The additive gauge is fixed so x_bs[ref] = 0 (offsets only matter up to a
    constant common to all BS ports)."""
    x = np.asarray(x, dtype=float)
    mu = x.mean()
    a = x.mean(axis=1) - mu / 2.0          # a_m estimates -x_bs[m] + const
    b = x.mean(axis=0) - mu / 2.0          # b_n estimates  x_ue[n] + const
    x_bs = -a
    x_ue = b
    shift = x_bs[ref]
    return x_bs - shift, x_ue - shift


def two_step_ml_tls(eq_channels: dict, M: int, N: int, df: float,
                    tau_window: tuple[float, float], ref: int = -1
                    ) -> CalibrationSet:
    """Full two-step estimator over a set of equivalent channels.

    eq_channels maps (m, n) to an EquivalentChannel; per link the ML stage
    yields (tau_hat, c_hat), then the joint TLS refits the node coefficients.
    """
    tau = np.zeros((M, N))
    c_ml = np.zeros((M, N), dtype=complex)
    for m in range(M):
        for n in range(N):
            eq = eq_channels[(m, n)]
            vals = eq.values
            kidx = eq.k_indices
            if eq.usable is not None:
                vals = vals[eq.usable]
                kidx = kidx[eq.usable]
            tau[m, n], c_ml[m, n] = ml_delay_coeff(
                vals, kidx, df, tau_window, doubled=True)
    cal = tls_joint(c_ml, ref=ref)
    cal.tau_hat = tau
    tau_bs, tau_ue = decompose_link_offsets(tau, ref=ref)
    cal.tau_bs, cal.tau_ue = tau_bs, tau_ue
    return cal
