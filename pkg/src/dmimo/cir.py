"""Analytical channel impulse response for a diffusive M x M MIMO link.

Transmitters are point sources releasing ``N`` molecules instantaneously and
receivers are passive spheres. The expected count inside a receiver is the
free-space Green's function times the receiver volume (uniform-concentration
approximation).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np


@dataclass(frozen=True)
class DiffusionParams:
    D: float = 1e-9
    N: float = 1e5
    T_int: float = 2e-4
    L: int = 3

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError(f"diffusion coefficient must be positive, got {self.D}")
        if not self.N >= 1:
            raise ValueError(f"molecule count must be >= 1, got {self.N}")
        if not self.T_int > 0:
            raise ValueError(f"symbol interval must be positive, got {self.T_int}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"tap count must be a positive integer, got {self.L}")


@dataclass(frozen=True)
class Topology:
    """Transmitter/receiver centres in metres, one row per link pair."""

    tx_positions: np.ndarray
    rx_positions: np.ndarray
    rx_radius: float = 50e-9

    def __post_init__(self):
        tx = np.array(self.tx_positions, dtype=float, ndmin=2)
        rx = np.array(self.rx_positions, dtype=float, ndmin=2)
        if tx.shape != rx.shape or tx.shape[1] != 3 or tx.shape[0] < 1:
            raise ValueError(
                f"need matching (M, 3) position arrays, got {tx.shape} and {rx.shape}"
            )
        if not self.rx_radius > 0:
            raise ValueError(f"receiver radius must be positive, got {self.rx_radius}")
        dist = distances(tx, rx)
        if np.any(dist <= self.rx_radius):
            raise ValueError("a transmitter lies inside a receiver sphere")
        tx.flags.writeable = False
        rx.flags.writeable = False
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)

    @property
    def M(self) -> int:
        return self.tx_positions.shape[0]

    def distances(self) -> np.ndarray:
        """``(M, M)`` array, entry ``[i, j]`` = ||Tx_i - Rx_j||."""
        return distances(self.tx_positions, self.rx_positions)

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self.rx_radius == other.rx_radius
            and np.array_equal(self.tx_positions, other.tx_positions)
            and np.array_equal(self.rx_positions, other.rx_positions)
        )

    __hash__ = None


def distances(tx, rx):
    return np.linalg.norm(tx[:, None, :] - rx[None, :, :], axis=-1)


def paired_grid(d: float, h: float, M: int = 2, rx_radius: float = 50e-9) -> Topology:
    """Parallel links along x with length ``d``, stacked ``h`` apart in y."""
    y = np.arange(M) * h
    tx = np.column_stack([np.zeros(M), y, np.zeros(M)])
    rx = np.column_stack([np.full(M, d), y, np.zeros(M)])
    return Topology(tx, rx, rx_radius)


@dataclass(frozen=True)
class NoiseModel:
    mode: Literal["relative", "absolute"] = "relative"
    value: float = 0.3

    def __post_init__(self):
        if self.mode not in ("relative", "absolute"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if not self.value >= 0:
            raise ValueError(f"noise value must be >= 0, got {self.value}")


def receiver_volume(rx_radius: float) -> float:
    return 4.0 / 3.0 * np.pi * rx_radius**3


def green_mean(t, r, params: DiffusionParams, rx_radius: float):
    """Expected molecule count in a receiver at distance ``r`` after time ``t``."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(t <= 0) or np.any(r <= 0):
        raise ValueError("green_mean needs t > 0 and r > 0")
    spread = 4.0 * params.D * t
    out = (
        params.N
        * receiver_volume(rx_radius)
        * (np.pi * spread) ** -1.5
        * np.exp(-(r**2) / spread)
    )
    return out if out.ndim else float(out)


def peak_time(r, D):
    """Time at which :func:`green_mean` peaks, ``r**2 / (6 D)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or not D > 0:
        raise ValueError("peak_time needs r > 0 and D > 0")
    out = r**2 / (6.0 * D)
    return out if out.ndim else float(out)


def sampling_times(topology: Topology, params: DiffusionParams) -> np.ndarray:
    """Per-receiver first sampling instant: peak of the paired link."""
    return peak_time(np.diag(topology.distances()), params.D)


def build_cir(
    topology: Topology,
    params: DiffusionParams,
    noise: NoiseModel = NoiseModel(),
    sample_times=None,
) -> np.ndarray:
    """Stacked ``(M*L + 1, M)`` CIR matrix.

    Row ``l*M + i`` of column ``j`` holds the tap ``l`` of link Tx_i -> Rx_j;
    the last row holds the noise mean of each receiver. ``sample_times`` fixes
    the per-receiver sampling instants (defaults to the paired-link peak of
    ``topology`` itself); pass the nominal schedule when jittering.
    """
    M, L = topology.M, params.L
    if sample_times is None:
        sample_times = sampling_times(topology, params)
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.shape != (M,):
        raise ValueError(f"need {M} sampling times, got shape {sample_times.shape}")
    dist = topology.distances()
    taps = np.arange(L)[:, None, None] * params.T_int + sample_times[None, None, :]
    # taps[l, i, j]
    values = green_mean(taps, dist[None], params, topology.rx_radius)
    C = np.empty((M * L + 1, M))
    C[:-1] = values.reshape(M * L, M)
    if noise.mode == "relative":
        C[-1] = noise.value * np.diag(values[0])
    else:
        C[-1] = noise.value
    return C


def jitter(topology: Topology, sigma: float, rng: np.random.Generator) -> Topology:
    """Perturb every coordinate by independent N(0, sigma^2) draws."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return topology
    M = topology.M
    noise = rng.normal(0.0, sigma, size=(2, M, 3))
    return replace(
        topology,
        tx_positions=topology.tx_positions + noise[0],
        rx_positions=topology.rx_positions + noise[1],
    )
