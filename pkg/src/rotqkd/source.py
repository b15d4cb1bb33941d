"""Quantum-dot source, four-path demultiplexer and threshold detectors.

The source emits at most two photons per pulse. With mean photon number
``mu`` and zero-delay correlation ``g2`` the number distribution is::

    P(2) = g2 * mu**2 / 2
    P(1) = mu - 2 P(2)
    P(0) = 1 - P(1) - P(2)

which reproduces ``g2 ~= 2 P(2) / (P(1) + 2 P(2))**2`` to leading order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

N_PATHS = 4
HBT_CHUNK = 10_000_000
MIN_COINCIDENCES = 100


class InsufficientStatisticsError(RuntimeError):
    """Too few pulses for a meaningful coincidence ratio."""

    def __init__(self, message: str, required_pulses: int):
        super().__init__(message)
        self.required_pulses = required_pulses


@dataclass(frozen=True)
class SourceParams:
    rep_rate: float = 79e6
    mean_photon_mu: float = 2e6 / 79e6
    g2: float = 0.03
    eta_det: float = 0.90
    dark_rate: float = 10.0
    gate_seconds: float = 1e-9

    def __post_init__(self):
        for name in ("rep_rate", "mean_photon_mu", "g2", "dark_rate", "gate_seconds"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not 0.0 <= self.eta_det <= 1.0:
            raise ValueError(f"eta_det must lie in [0, 1], got {self.eta_det}")
        if not 0.0 <= self.p_dark <= 1.0:
            raise ValueError("dark_rate * gate_seconds must be a probability")
        p0, p1, p2 = photon_number_probabilities(self)
        if p1 < 0 or p0 < 0 or p2 > 1:
            raise ValueError(f"mu={self.mean_photon_mu}, g2={self.g2} give invalid probabilities {(p0, p1, p2)}")

    @property
    def p_dark(self) -> float:
        """Dark-click probability per detector per gate."""
        return self.dark_rate * self.gate_seconds

    @classmethod
    def ideal(cls, mean_photon_mu: float = 1.0) -> "SourceParams":
        """No multiphoton emission, unit efficiency, no dark counts."""
        return cls(mean_photon_mu=mean_photon_mu, g2=0.0, eta_det=1.0, dark_rate=0.0)


def photon_number_probabilities(params: SourceParams) -> tuple[float, float, float]:
    mu = params.mean_photon_mu
    p2 = params.g2 * mu * mu / 2
    p1 = mu - 2 * p2
    return 1.0 - p1 - p2, p1, p2


def sample_photon_numbers(params: SourceParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized photon numbers in {0, 1, 2} (int8)."""
    p0, p1, _ = photon_number_probabilities(params)
    u = rng.random(size)
    return (u >= p0).astype(np.int8) + (u >= p0 + p1).astype(np.int8)


def sample_photon_number(params: SourceParams, rng: np.random.Generator) -> int:
    return int(sample_photon_numbers(params, 1, rng)[0])


def empirical_g2(photon_numbers: np.ndarray) -> float:
    """``2 P(2) / (P(1) + 2 P(2))**2`` from observed photon numbers."""
    n = photon_numbers.size
    p1 = np.count_nonzero(photon_numbers == 1) / n
    p2 = np.count_nonzero(photon_numbers == 2) / n
    return 2 * p2 / (p1 + 2 * p2) ** 2


def demux_route(pulse_index: int) -> int:
    """Round-robin path assignment of the synchronized EOM switch."""
    if pulse_index < 0:
        raise ValueError("pulse_index must be >= 0")
    return pulse_index % N_PATHS


def click_probability(p_arrival, eta: float, p_dark: float):
    """``1 - (1 - eta p_arrival)(1 - p_dark)``; broadcasts over arrays."""
    return 1.0 - (1.0 - eta * np.asarray(p_arrival)) * (1.0 - p_dark)


def detect(arrival_prob_per_detector, params: SourceParams, rng: np.random.Generator) -> np.ndarray:
    """Independent threshold-detector clicks, one boolean per detector."""
    p = np.asarray(arrival_prob_per_detector, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("arrival probabilities must lie in [0, 1]")
    return rng.random(p.shape) < click_probability(p, params.eta_det, params.p_dark)


@dataclass(frozen=True)
class HbtCounts:
    n_pulses: int
    clicks_a: int
    clicks_b: int
    zero_delay: int
    adjacent: int

    @property
    def g2(self) -> float:
        """Zero-delay coincidence rate over the mean adjacent-pulse rate."""
        zero_rate = self.zero_delay / self.n_pulses
        adjacent_rate = self.adjacent / (2 * (self.n_pulses - 1))
        return zero_rate / adjacent_rate


def _hbt_click_probability(params: SourceParams) -> float:
    _, p1, p2 = photon_number_probabilities(params)
    half = params.eta_det / 2
    light = p1 * half + p2 * (1 - (1 - half) ** 2)
    return 1 - (1 - light) * (1 - params.p_dark)


def hbt_expected_accidentals(n_pulses: int, params: SourceParams) -> float:
    """Expected adjacent-pulse coincidences (both orderings) for ``n_pulses``."""
    p = _hbt_click_probability(params)
    return 2 * (n_pulses - 1) * p * p


def _hbt_chunk(n: int, params: SourceParams, seed: np.random.SeedSequence):
    rng = np.random.default_rng(seed)
    p0, p1, _ = photon_number_probabilities(params)
    eta = params.eta_det
    u = rng.random(n)
    one = np.flatnonzero((u >= p0) & (u < p0 + p1))
    two = np.flatnonzero(u >= p0 + p1)
    # Each photon picks a beam-splitter output and is detected with eta.
    side = rng.random(one.size) < 0.5
    seen = rng.random(one.size) < eta
    side2 = rng.random((two.size, 2)) < 0.5
    seen2 = rng.random((two.size, 2)) < eta
    hit_a2 = np.any(side2 & seen2, axis=1)
    hit_b2 = np.any(~side2 & seen2, axis=1)
    dark_a = rng.integers(0, n, rng.binomial(n, params.p_dark))
    dark_b = rng.integers(0, n, rng.binomial(n, params.p_dark))
    a = np.unique(np.concatenate([one[side & seen], two[hit_a2], dark_a]))
    b = np.unique(np.concatenate([one[~side & seen], two[hit_b2], dark_b]))
    zero = np.intersect1d(a, b, assume_unique=True).size
    adjacent = (
        np.intersect1d(a + 1, b, assume_unique=True).size + np.intersect1d(b + 1, a, assume_unique=True).size
    )
    edges = (
        bool(a.size and a[0] == 0),
        bool(b.size and b[0] == 0),
        bool(a.size and a[-1] == n - 1),
        bool(b.size and b[-1] == n - 1),
    )
    return a.size, b.size, zero, adjacent, edges


def hbt_simulate(
    n_pulses: int, params: SourceParams, rng: np.random.Generator, workers: int = 1
) -> HbtCounts:
    """Simulate a 50:50 Hanbury-Brown-Twiss measurement of ``n_pulses`` pulses.

    Pulses are processed in fixed-size chunks with independent child seeds,
    so the counts do not depend on ``workers``.

    Raises:
        InsufficientStatisticsError: fewer than 100 expected accidental
            (adjacent-pulse) coincidences; carries the required pulse count.
    """
    expected = hbt_expected_accidentals(n_pulses, params) if n_pulses > 1 else 0.0
    if expected < MIN_COINCIDENCES:
        p = _hbt_click_probability(params)
        required = math.ceil(MIN_COINCIDENCES / (2 * p * p)) + 1 if p > 0 else -1
        raise InsufficientStatisticsError(
            f"{n_pulses} pulses give {expected:.3g} expected coincidences; need about {required} pulses",
            required,
        )
    sizes = [HBT_CHUNK] * (n_pulses // HBT_CHUNK)
    if n_pulses % HBT_CHUNK:
        sizes.append(n_pulses % HBT_CHUNK)
    root = np.random.SeedSequence(int(rng.integers(0, 2**63)))
    seeds = root.spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(lambda args: _hbt_chunk(args[0], params, args[1]), zip(sizes, seeds)))
    clicks_a = sum(p[0] for p in parts)
    clicks_b = sum(p[1] for p in parts)
    zero = sum(p[2] for p in parts)
    adjacent = sum(p[3] for p in parts)
    for prev, nxt in zip(parts, parts[1:]):
        a_first, b_first = nxt[4][0], nxt[4][1]
        a_last, b_last = prev[4][2], prev[4][3]
        adjacent += int(a_last and b_first) + int(b_last and a_first)
    return HbtCounts(n_pulses, clicks_a, clicks_b, zero, adjacent)


def hbt_g2_estimate(n_pulses: int, params: SourceParams, rng: np.random.Generator, workers: int = 1) -> float:
    return hbt_simulate(n_pulses, params, rng, workers).g2
