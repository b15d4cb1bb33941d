"""The quantum-dot source: photon numbers, detection and an HBT measurement."""
import numpy as np

from rotqkd.source import (
    SourceParams,
    demux_route,
    detect,
    empirical_g2,
    hbt_simulate,
    photon_number_probabilities,
    sample_photon_numbers,
)

params = SourceParams()
p0, p1, p2 = photon_number_probabilities(params)
print(f"P(0) = {p0:.5f}  P(1) = {p1:.5f}  P(2) = {p2:.3e}")

rng = np.random.default_rng(1)
n = sample_photon_numbers(params, 10_000_000, rng)
print("empirical g2 from photon numbers:", round(empirical_g2(n), 4))

# Demultiplexer schedule.
print("paths of pulses 0..7:", [demux_route(i) for i in range(8)])

# Detector efficiency check.
clicks = detect(np.ones(1_000_000), params, rng)
print("click frequency with one photon per gate:", clicks.mean())

# HBT with 2e8 pulses (the acceptance run uses 1e9).
counts = hbt_simulate(200_000_000, params, rng, workers=4)
print(f"HBT: {counts.zero_delay} zero-delay vs {counts.adjacent} adjacent coincidences")
print(f"g2(0) estimate = {counts.g2:.4f}")
