"""Synthetic clustered-multipath MIMO-OFDM channel generation.

Channels are sums of rays grouped into clusters. Each ray carries a complex
gain, a delay, a Doppler shift and a departure angle; the per-carrier channel
row is the gain-weighted sum of steering vectors with delay and Doppler phase
rotations. Wideband matrices stack one row per frequency bin (one bin per
resource block), and datasets stack the real/imaginary split of many slots
column-wise so each column is one antenna's frequency response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import as_complex_matrix, as_real_matrix, require

__all__ = [
    "SPEED_OF_LIGHT",
    "SUBCARRIERS_PER_RB",
    "ChannelConfig",
    "RaySet",
    "steering_vector",
    "draw_cluster_params",
    "generate_channel_vector",
    "assemble_wideband",
    "real_stack",
    "complex_unstack",
    "generate_slot",
    "build_dataset",
    "add_estimation_noise",
]

SPEED_OF_LIGHT = 299_792_458.0
SUBCARRIERS_PER_RB = 12


@dataclass(frozen=True)
class ChannelConfig:
    """Parameters of the clustered channel model and the OFDM grid.

    ``n_freq`` counts resource-block-granularity bins, so adjacent bins are
    ``SUBCARRIERS_PER_RB * subcarrier_spacing_hz`` apart.
    """

    n_tx: int = 32
    n_freq: int = 48
    carrier_hz: float = 3.5e9
    subcarrier_spacing_hz: float = 15e3
    n_clusters: int = 23
    rays_per_cluster: int = 20
    delay_spread_s: float = 300e-9
    delay_cap_factor: float = 3.0
    ue_speed_mps: float = 30.0 / 3.6
    element_spacing_wavelengths: float = 0.5
    cluster_angle_spread_rad: float = 0.04
    slot_spacing_s: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        require(self.n_tx >= 1, "n_tx must be >= 1")
        require(self.n_freq >= 1, "n_freq must be >= 1")
        require(self.n_clusters >= 1, "n_clusters must be >= 1")
        require(self.rays_per_cluster >= 1, "rays_per_cluster must be >= 1")
        for name in (
            "carrier_hz",
            "subcarrier_spacing_hz",
            "delay_spread_s",
            "ue_speed_mps",
            "element_spacing_wavelengths",
            "cluster_angle_spread_rad",
            "slot_spacing_s",
        ):
            require(getattr(self, name) >= 0.0, f"{name} must be >= 0")
        require(self.delay_cap_factor > 0.0, "delay_cap_factor must be > 0")
        grid = self.frequency_grid()
        require(bool(np.all(np.diff(grid) > 0)), "frequency grid must be strictly increasing")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def bin_spacing_hz(self) -> float:
        return SUBCARRIERS_PER_RB * self.subcarrier_spacing_hz

    def frequency_grid(self) -> np.ndarray:
        """Bin center frequencies, symmetric around the carrier."""
        i = np.arange(self.n_freq, dtype=np.float64)
        return self.carrier_hz + (i - self.n_freq / 2.0) * self.bin_spacing_hz


@dataclass
class RaySet:
    """Vectorized per-ray parameters: gains, delays, Doppler shifts, angles."""

    gains: np.ndarray  # complex, total power normalized to 1
    delays_s: np.ndarray
    dopplers_rad_s: np.ndarray
    aods_rad: np.ndarray

    def __len__(self) -> int:
        return self.gains.shape[0]


def steering_vector(theta: float, n_tx: int, spacing: float = 0.5) -> np.ndarray:
    """Uniform-linear-array response; entry n is exp(j*2*pi*n*spacing*sin(theta))."""
    require(n_tx >= 1, "n_tx must be >= 1")
    n = np.arange(n_tx, dtype=np.float64)
    return np.exp(2j * np.pi * n * spacing * math.sin(theta))


def draw_cluster_params(config: ChannelConfig, rng: np.random.Generator) -> RaySet:
    """Sample one realization of the clustered ray parameters.

    Cluster delays are exponential with mean ``delay_spread_s``, clipped at
    ``delay_cap_factor`` times the spread (clustered-delay-line tables keep
    normalized delays bounded), and shared by the cluster's rays. Departure
    angles are uniform around a per-cluster center drawn from [-pi/2, pi/2],
    clipped back into that range. Doppler shifts are
    2*pi*(v/wavelength)*cos(motion angle). Gains are complex Gaussian,
    rescaled so the total power over all rays is exactly one.
    """
    n_c, n_p = config.n_clusters, config.rays_per_cluster
    n_rays = n_c * n_p

    cluster_delays = np.minimum(
        rng.exponential(scale=max(config.delay_spread_s, 0.0), size=n_c),
        config.delay_cap_factor * config.delay_spread_s,
    )
    delays = np.repeat(cluster_delays, n_p)

    centers = rng.uniform(-np.pi / 2, np.pi / 2, size=n_c)
    jitter = rng.uniform(
        -config.cluster_angle_spread_rad, config.cluster_angle_spread_rad, size=n_rays
    )
    aods = np.clip(np.repeat(centers, n_p) + jitter, -np.pi / 2, np.pi / 2)

    motion = rng.uniform(0.0, 2 * np.pi, size=n_rays)
    dopplers = 2 * np.pi * (config.ue_speed_mps / config.wavelength_m) * np.cos(motion)

    gains = rng.normal(size=n_rays) + 1j * rng.normal(size=n_rays)
    gains /= np.sqrt(np.sum(np.abs(gains) ** 2))

    return RaySet(gains=gains, delays_s=delays, dopplers_rad_s=dopplers, aods_rad=aods)


def _steering_matrix(rays: RaySet, config: ChannelConfig) -> np.ndarray:
    n = np.arange(config.n_tx, dtype=np.float64)
    phase = (
        2j * np.pi * config.element_spacing_wavelengths * np.sin(rays.aods_rad)[:, None] * n
    )
    return np.exp(phase)  # (n_rays, n_tx)


def generate_channel_vector(
    rays: RaySet, freq_hz: float, t_s: float, config: ChannelConfig
) -> np.ndarray:
    """Per-carrier channel row: sum over rays of gain, delay and Doppler phases
    times the steering vector."""
    require(len(rays) >= 1, "ray set must be nonempty")
    phases = rays.gains * np.exp(
        -2j * np.pi * freq_hz * rays.delays_s + 1j * rays.dopplers_rad_s * t_s
    )
    return phases @ _steering_matrix(rays, config)


def assemble_wideband(rays: RaySet, config: ChannelConfig, t_s: float) -> np.ndarray:
    """Wideband matrix with row i the channel at frequency-grid bin i."""
    freqs = config.frequency_grid()
    freq_phase = np.exp(-2j * np.pi * np.outer(freqs, rays.delays_s))  # (n_freq, n_rays)
    ray_gain = rays.gains * np.exp(1j * rays.dopplers_rad_s * t_s)
    return (freq_phase * ray_gain) @ _steering_matrix(rays, config)


def real_stack(h: np.ndarray) -> np.ndarray:
    """Stack real part over imaginary part: (n_freq, n_tx) -> (2*n_freq, n_tx)."""
    h = as_complex_matrix(h, "H")
    return np.vstack([h.real, h.imag])


def complex_unstack(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`real_stack`. Rejects odd row counts."""
    r = as_real_matrix(r, "R")
    if r.shape[0] % 2 != 0:
        raise ValueError(f"real-stacked CSI must have an even row count, got {r.shape[0]}")
    half = r.shape[0] // 2
    return r[:half] + 1j * r[half:]


def _slot_rng(seed: int, slot_index: int) -> np.random.Generator:
    # Per-slot seed derivation (seed XOR slot index) keeps slots independently
    # generatable, e.g. in parallel.
    return np.random.default_rng(int(seed) ^ int(slot_index))


def generate_slot(config: ChannelConfig, slot_index: int, seed: int | None = None) -> np.ndarray:
    """Complex wideband channel of one slot, with its own derived RNG."""
    seed = config.rng_seed if seed is None else seed
    rng = _slot_rng(seed, slot_index)
    rays = draw_cluster_params(config, rng)
    return assemble_wideband(rays, config, t_s=slot_index * config.slot_spacing_s)


def build_dataset(config: ChannelConfig, slot_count: int, seed: int | None = None) -> np.ndarray:
    """Concatenate ``slot_count`` real-stacked slots into a (2*n_freq, n_tx*slot_count)
    dataset whose columns are the manifold samples."""
    require(slot_count >= 1, "slot_count must be >= 1")
    cols = [real_stack(generate_slot(config, s, seed=seed)) for s in range(slot_count)]
    return np.hstack(cols)


def add_estimation_noise(x: np.ndarray, snr_db: float, rng) -> np.ndarray:
    """Additive white Gaussian noise at the requested dataset-level SNR.

    The noise variance is set from the mean signal power, so the empirical
    Frobenius power ratio matches the linear SNR up to sampling error.
    ``snr_db = inf`` returns the input unchanged.
    """
    if math.isnan(snr_db):
        raise ValueError("snr_db must not be NaN")
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    rng = np.random.default_rng(rng)
    signal_power = np.mean(x**2)
    sigma = math.sqrt(signal_power / 10.0 ** (snr_db / 10.0))
    return x + rng.normal(scale=sigma, size=x.shape)
