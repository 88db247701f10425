"""Propagation, sensed-power aggregation, SINR and Shannon-with-cap rate mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_DISTANCE_M = 0.5


def dbm_to_mw(dbm):
    out = np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def mw_to_dbm(mw):
    out = 10.0 * np.log10(np.asarray(mw, dtype=float))
    return float(out) if out.ndim == 0 else out


def thermal_noise_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


@dataclass(frozen=True)
class PhyConfig:
    bandwidth_hz: float = 20e6
    carrier_ghz: float = 5.18
    tx_power_dbm: float = 23.0  # BS / AP
    ue_tx_power_dbm: float = 23.0  # UE / STA
    noise_figure_db: float = 7.0
    shadowing_db: float = 3.0
    sinr_threshold_db: float = -3.0
    max_spectral_efficiency: float = 8.0
    rate_margin_db: float = 3.0
    pathloss_model: str = "inh_los"

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        for p in (self.tx_power_dbm, self.ue_tx_power_dbm):
            if not 0.0 <= p <= 30.0:
                raise ValueError(f"tx power {p} dBm outside [0, 30]")
        if self.pathloss_model not in PATHLOSS_MODELS:
            raise ValueError(f"unknown pathloss model {self.pathloss_model!r}; choose from {sorted(PATHLOSS_MODELS)}")
        if self.shadowing_db < 0 or self.max_spectral_efficiency <= 0:
            raise ValueError("shadowing and spectral-efficiency cap must be nonnegative / positive")

    @property
    def noise_dbm(self) -> float:
        return thermal_noise_dbm(self.bandwidth_hz, self.noise_figure_db)


def path_loss_los(d, fc_ghz: float = 5.18):
    """Indoor-office LOS path loss in dB; distances below 0.5 m are clamped."""
    d = np.maximum(np.asarray(d, dtype=float), MIN_DISTANCE_M)
    out = 32.4 + 17.3 * np.log10(d) + 20.0 * math.log10(fc_ghz)
    return float(out) if out.ndim == 0 else out


def path_loss_nlos(d, fc_ghz: float = 5.18):
    """Indoor-office NLOS path loss, never below the LOS value."""
    dd = np.maximum(np.asarray(d, dtype=float), MIN_DISTANCE_M)
    nlos = 17.3 + 38.3 * np.log10(dd) + 24.9 * math.log10(fc_ghz)
    out = np.maximum(nlos, path_loss_los(dd, fc_ghz))
    return float(out) if out.ndim == 0 else out


PATHLOSS_MODELS = {"inh_los": path_loss_los, "inh_nlos": path_loss_nlos}


def path_loss(d, fc_ghz: float = 5.18, model: str = "inh_los"):
    return PATHLOSS_MODELS[model](d, fc_ghz)


def distance_matrix(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def draw_shadowing(n_nodes: int, sigma_db: float, rng) -> np.ndarray:
    """Symmetric per-link log-normal shadowing in dB, frozen for the whole drop."""
    s = rng.normal(0.0, sigma_db, size=(n_nodes, n_nodes)) if sigma_db > 0 else np.zeros((n_nodes, n_nodes))
    s = np.triu(s, 1)
    return s + s.T


def gain_matrix(pos: np.ndarray, shadow_db: np.ndarray, cfg: PhyConfig) -> np.ndarray:
    """Linear channel gain between every node pair (pathloss plus frozen shadowing)."""
    loss_db = path_loss(distance_matrix(pos), cfg.carrier_ghz, cfg.pathloss_model) + shadow_db
    return 10.0 ** (-loss_db / 10.0)


def sensed_power(rx_gains, tx_powers_mw, active, noise_mw: float) -> float:
    """Linear-domain sum of active transmitters' received power plus noise, in dBm."""
    total = noise_mw
    for g, p, on in zip(rx_gains, tx_powers_mw, active):
        if on:
            total += p * g
    return 10.0 * math.log10(total)


def spectral_efficiency(sinr_linear: float, cap: float) -> float:
    return min(math.log2(1.0 + sinr_linear), cap)


def sinr_and_rate(signal_mw: float, interference_mw: float, noise_mw: float, cfg: PhyConfig):
    """(SINR in dB, Shannon rate in b/s capped at the spectral-efficiency limit)."""
    denom = interference_mw + noise_mw
    if signal_mw <= 0:
        return -math.inf, 0.0
    sinr = signal_mw / denom if denom > 0 else math.inf
    se = cfg.max_spectral_efficiency if math.isinf(sinr) else spectral_efficiency(sinr, cfg.max_spectral_efficiency)
    return (math.inf if math.isinf(sinr) else 10.0 * math.log10(sinr)), cfg.bandwidth_hz * se


def segment_succeeds(sinr_db: float, cfg: PhyConfig) -> bool:
    return sinr_db >= cfg.sinr_threshold_db


def link_rate(snr_linear: float, cfg: PhyConfig) -> tuple[float, float]:
    """Rate committed at PPDU start and the SINR (linear) needed to decode it.

    The transmitter picks the Shannon rate of the interference-free SNR less a
    margin; the payload then decodes only if the realized SINR supports that
    rate and clears the decoding floor.
    """
    floor = 10.0 ** (cfg.sinr_threshold_db / 10.0)
    eff = snr_linear * 10.0 ** (-cfg.rate_margin_db / 10.0)
    se = min(max(math.log2(1.0 + eff), math.log2(1.0 + floor)), cfg.max_spectral_efficiency)
    required = max(floor, 2.0 ** se - 1.0)
    return cfg.bandwidth_hz * se, required
