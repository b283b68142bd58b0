"""Forward phase tracking of calibration coefficients from one-way pilots.

The tracker accumulates per-(m, n, k) phase increments phi_hat from the UL
SRS (or DL CSI-RS) and updates the coefficient as C(l'') = C(l') * exp(j 2
phi_hat): the coefficient phase advances at twice the one-way pilot rate
(+4 pi e fc T per snapshot vs. +2 pi e fc T on the pilot).  In dynamic scenes
the sensing-assisted variant subtracts the reconstructed OTA phase ratio
before doubling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_MAG = 1e-12
ALIAS_MARGIN = 1e-9


@dataclass
class TrackState:
    """State of one link's tracker (arrays over the tracked comb)."""

    base_coeff: np.ndarray        # C at the base symbol l', shape (K,)
    last_pilot: np.ndarray        # pilot channel slice at the last update, (K,)
    phi_hat: np.ndarray           # accumulated one-way phase, (K,)
    current_symbol: float
    aliased: bool = False         # some increment reached pi: ambiguity
    fallback: bool = False        # sensing-assisted update ran without recon

    @classmethod
    def start(cls, base_coeff: np.ndarray, pilot: np.ndarray, symbol: float
              ) -> "TrackState":
        base = np.atleast_1d(np.asarray(base_coeff, dtype=complex))
        pil = np.atleast_1d(np.asarray(pilot, dtype=complex))
        if base.shape != pil.shape:
            raise ValueError("coefficient and pilot slices must share a grid")
        return cls(base_coeff=base.copy(), last_pilot=pil.copy(),
                   phi_hat=np.zeros(base.shape), current_symbol=float(symbol))

    def coefficient(self) -> np.ndarray:
        """Tracked coefficient at the current symbol."""
        return self.base_coeff * np.exp(2j * self.phi_hat)


def _phase_step(state: TrackState, new_pilot: np.ndarray, correction=0.0):
    new_pilot = np.atleast_1d(np.asarray(new_pilot, dtype=complex))
    trackable = (np.abs(new_pilot) >= MIN_MAG) & (np.abs(state.last_pilot) >= MIN_MAG)
    ratio = np.ones_like(new_pilot)
    ratio[trackable] = new_pilot[trackable] / state.last_pilot[trackable]
    dphi = np.angle(ratio) - correction
    dphi = np.angle(np.exp(1j * dphi))        # wrap to (-pi, pi]
    dphi[~trackable] = 0.0                    # untracked entries carried forward
    if np.any(np.abs(dphi[trackable]) >= np.pi - ALIAS_MARGIN):
        state.aliased = True
    return dphi, trackable


def track_quasi_static(state: TrackState, new_pilot: np.ndarray, symbol: float
                       ) -> tuple[TrackState, np.ndarray]:
    """One quasi-static update: phi step = angle(G(l'')/G(l')) per subcarrier.

    Assumes the OTA channel is static between updates; with moving UEs the
    Doppler phase leaks into the coefficient by design (use the
    sensing-assisted variant there).  Returns (state, tracked coefficient).
    """
    dphi, trackable = _phase_step(state, new_pilot)
    state.phi_hat = state.phi_hat + dphi
    new_last = state.last_pilot.copy()
    new_last[trackable] = np.atleast_1d(np.asarray(new_pilot, dtype=complex))[trackable]
    state.last_pilot = new_last
    state.current_symbol = float(symbol)
    return state, state.coefficient()


def track_sensing_assisted(state: TrackState, new_pilot: np.ndarray, symbol: float,
                           recon_new: np.ndarray | None = None,
                           recon_last: np.ndarray | None = None
                           ) -> tuple[TrackState, np.ndarray]:
    """Sensing-assisted update: the reconstructed OTA phase ratio is removed
    from the pilot phase step before the coefficient update.

    recon_new / recon_last are the predicted OTA channel slices at the new and
    previous pilot symbols.  If either is missing the update falls back to the
    quasi-static rule and flags the state.
    """
    if recon_new is None or recon_last is None:
        state.fallback = True
        return track_quasi_static(state, new_pilot, symbol)
    recon_new = np.atleast_1d(np.asarray(recon_new, dtype=complex))
    recon_last = np.atleast_1d(np.asarray(recon_last, dtype=complex))
    ok = (np.abs(recon_new) >= MIN_MAG) & (np.abs(recon_last) >= MIN_MAG)
    correction = np.zeros(recon_new.shape)
    correction[ok] = np.angle(recon_new[ok] / recon_last[ok])
    dphi, trackable = _phase_step(state, new_pilot, correction=correction)
    state.phi_hat = state.phi_hat + dphi
    new_last = state.last_pilot.copy()
    new_last[trackable] = np.atleast_1d(np.asarray(new_pilot, dtype=complex))[trackable]
    state.last_pilot = new_last
    state.current_symbol = float(symbol)
    return state, state.coefficient()


def aggregate_phase(phi: np.ndarray, k_indices: np.ndarray) -> float:
    """Robust per-link phase: median across k after removing the k-linear
    (timing) component by a least-squares fit."""
    k = np.asarray(k_indices, dtype=float)
    phi = np.asarray(phi, dtype=float)
    slope = np.polyfit(k, phi, 1)[0]
    return float(np.median(phi - slope * k))


def estimate_offset_from_track(phi_per_step: float, fc: float, T: float,
                               dl: float = 1.0) -> float:
    """Fractional frequency offset implied by a per-step one-way phase increment."""
    return phi_per_step / (2.0 * np.pi * fc * T * dl)
