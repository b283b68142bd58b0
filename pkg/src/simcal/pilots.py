"""Bidirectional calibration pilot frame: comb mapping, LS channel estimation,
conjugate-precoded CARS, and formation of the round-trip equivalent channel.

Comb indices are 0-based internally (the config boundary shifts any 1-based
inputs).  Pilot base sequences are fixed to all-ones, since the estimators
divide them out anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_MAG = 1e-12


@dataclass(frozen=True)
class PilotMap:
    """Orthogonal frequency-comb mapping for M BS ports and N calibration UEs."""

    M: int
    N: int
    K_base: int

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be >= 1")
        if self.K_base % self.N != 0:
            raise ValueError(f"N={self.N} must divide K={self.K_base}")

    def bs_indices(self, m: int) -> np.ndarray:
        """Subcarriers carrying BS port m's pilots: k*M + m, k in [0, K)."""
        if not 0 <= m < self.M:
            raise ValueError(f"BS comb index {m} out of range [0, {self.M})")
        return np.arange(self.K_base) * self.M + m

    def ue_indices(self, m: int, n: int) -> np.ndarray:
        """Subcarriers of UE n's CARS back to BS port m: k*M*N + n*M + m."""
        if not 0 <= n < self.N:
            raise ValueError(f"UE comb index {n} out of range [0, {self.N})")
        if not 0 <= m < self.M:
            raise ValueError(f"BS comb index {m} out of range [0, {self.M})")
        return np.arange(self.K_base // self.N) * self.M * self.N + n * self.M + m


def build_pilot_map(M: int, N: int, K: int) -> PilotMap:
    return PilotMap(M=M, N=N, K_base=K)


def estimate_channel(rx_obs: np.ndarray, pilot: np.ndarray | complex = 1.0) -> np.ndarray:
    """Per-subcarrier LS estimate on occupied comb positions: obs / pilot."""
    pilot = np.asarray(pilot, dtype=complex)
    if np.any(np.abs(pilot) < MIN_MAG):
        raise ValueError("pilot symbols must be nonzero")
    return np.asarray(rx_obs, dtype=complex) / pilot


def form_cars(estimate: np.ndarray, equalize: bool = False
              ) -> tuple[np.ndarray, np.ndarray]:
    """Conjugate-precoded CARS sequence.

    With ``equalize=False`` the symbols are unit power per subcarrier
    (conj(h)/|h|), so the echo keeps a residual |h| amplitude.  With
    ``equalize=True`` the far end also inverts the magnitude (conj(h)/|h|^2),
    making the echo directly the round-trip coefficient at the cost of
    per-subcarrier power variation.

    Returns (symbols, usable_mask); subcarriers whose estimate magnitude is
    below MIN_MAG are flagged unusable and transmit zero.
    """
    est = np.asarray(estimate, dtype=complex)
    mag = np.abs(est)
    usable = mag >= MIN_MAG
    symbols = np.zeros_like(est)
    power = 2.0 if equalize else 1.0
    symbols[usable] = np.conj(est[usable]) / mag[usable] ** power
    return symbols, usable


@dataclass
class EquivalentChannel:
    """Round-trip equivalent channel of one link on its comb subset."""

    values: np.ndarray       # complex, shape (K_comb,) or (K_comb, n_symbols)
    k_indices: np.ndarray    # absolute subcarrier indices
    symbol_index: float      # l' of the CARS transmission (first, if several)
    side: str = "BS"         # "BS" or "UE"
    usable: np.ndarray | None = None


def form_equivalent_channel(echo_obs: np.ndarray, k_indices: np.ndarray,
                            symbol_index: float, side: str = "BS",
                            usable: np.ndarray | None = None) -> EquivalentChannel:
    """Wrap a CARS echo observation as the equivalent round-trip channel.

    The echo is the UL (resp. DL) channel multiplied by the unit-modulus
    conjugate precoder built from the earlier DL (resp. UL) estimate, so its
    phase carries the RF ratio and the doubled timing/frequency-offset
    exponentials; positions flagged unusable by the precoder stay absent.
    """
    vals = np.asarray(echo_obs, dtype=complex)
    k = np.asarray(k_indices)
    if vals.shape[0] != k.shape[0]:
        raise ValueError("echo and comb index lengths differ")
    if usable is None:
        usable = np.ones(vals.shape[0], dtype=bool)
    return EquivalentChannel(values=vals, k_indices=k, symbol_index=symbol_index,
                             side=side, usable=np.asarray(usable, dtype=bool))


def cars_round_trip(dl_channel_on_comb: np.ndarray, ul_channel_on_comb: np.ndarray,
                    k_indices: np.ndarray, cars_symbol: float,
                    noise=None, side: str = "BS",
                    equalize: bool = False) -> EquivalentChannel:
    """One full CARS exchange for a single link.

    dl_channel_on_comb: the (possibly noisy) estimate the far end precodes from,
    at the earlier pilot symbol.  ul_channel_on_comb: the true channel the CARS
    propagates through at the CARS symbol (1D over the comb, or 2D (K, S) for
    several CARS symbols).  noise: optional additive noise array matching the
    echo shape.
    """
    symbols, usable = form_cars(dl_channel_on_comb, equalize=equalize)
    ul = np.asarray(ul_channel_on_comb, dtype=complex)
    if ul.ndim == 2:
        echo = ul * symbols[:, None]
    else:
        echo = ul * symbols
    if noise is not None:
        echo = echo + noise
    return form_equivalent_channel(echo, k_indices, cars_symbol, side=side,
                                   usable=usable)
