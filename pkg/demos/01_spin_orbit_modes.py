"""Spin-orbit modes, the q-plate and frame rotations.

Run with ``python demos/01_spin_orbit_modes.py``.
"""
import numpy as np

from rotqkd.optics import QPlateParams, qplate_operator, rotation_operator
from rotqkd.spinorbit import SpinOrbitState, all_modes, apply, inner_product

np.set_printoptions(precision=3, suppress=True)

# The truncated mode space: two circular polarizations times OAM -2..2.
print("modes:", [f"{m.sam.name}{m.oam:+d}" for m in all_modes()])

# A horizontally polarized Gaussian beam.
h = SpinOrbitState.polarization("H")
print("|H,0> amplitudes:", h.amplitudes)

# The q = 1/2 plate at full retardance swaps polarization into OAM.
qp = qplate_operator(QPlateParams(delta=np.pi, q=0.5, alpha0=0.0))
hybrid = apply(qp, h)
for mode in ("L", -1), ("R", 1):
    print(f"weight on |{mode[0]},{mode[1]:+d}>: {abs(hybrid.amplitude(*mode)) ** 2:.3f}")

# Rotating the receiver frame: polarization turns, the hybrid state does not.
print("\n theta   |<H|R(theta)H>|^2   |<psi|R(theta)psi>|^2")
for deg in (0, 12.5, 25, 50, 75, 90):
    rot = rotation_operator(np.radians(deg))
    pol = abs(inner_product(h, apply(rot, h))) ** 2
    hyb = abs(inner_product(hybrid, apply(rot, hybrid))) ** 2
    print(f"{deg:6.1f}   {pol:16.4f}   {hyb:20.4f}")

# Two passes through the plate give back the input with a minus sign.
twice = apply(qp @ qp, h)
print("\nQP^2 |H> == -|H>:", twice.allclose(-1 * h))
