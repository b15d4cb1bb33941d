"""Optical transformations on the spin-orbit space.

All matrices share the circular convention fixed in :mod:`rotqkd.spinorbit`.
Waveplates are specified by their Jones matrix in the H/V basis and then
changed into the (R, L) basis used by the state vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spinorbit import (
    DEFAULT_L_MAX,
    HV_TO_RL,
    NORM_TOL,
    TRACE_TOL,
    DensityMatrix,
    LinearOperator,
    Sam,
    SpinOrbitMode,
    SpinOrbitState,
    TruncationError,
    dimension,
    mode_index,
)


@dataclass(frozen=True)
class QPlateParams:
    """Retardation ``delta``, topological charge ``q`` and optical-axis angle ``alpha0``."""

    delta: float = np.pi
    q: float = 0.5
    alpha0: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.delta) or not np.isfinite(self.alpha0):
            raise ValueError("Q-plate parameters must be finite")
        if not float(2 * self.q).is_integer():
            raise ValueError(f"2q must be an integer, got q={self.q}")


@dataclass(frozen=True)
class WaveplateParams:
    retardance: float
    axis_angle: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.retardance) and np.isfinite(self.axis_angle)):
            raise ValueError("waveplate parameters must be finite")


HWP = np.pi
QWP = np.pi / 2


@dataclass(frozen=True)
class NoiseParams:
    depolarizing_p: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.depolarizing_p <= 1.0:
            raise ValueError(f"depolarizing_p must lie in [0, 1], got {self.depolarizing_p}")


def qplate_operator(params: QPlateParams, l_max: int = DEFAULT_L_MAX) -> LinearOperator:
    """Q-plate unitary coupling ``|R,m> <-> |L,m-2q>``.

    ``|R,m> -> cos(d/2)|R,m> + i e^{-2i a0} sin(d/2)|L,m-2q>``
    ``|L,m> -> cos(d/2)|L,m> + i e^{+2i a0} sin(d/2)|R,m+2q>``

    Modes whose partner falls outside ``|l| <= l_max`` are kept in the matrix
    with their diagonal part only and flagged as not retained, so applying the
    operator to a state populating them raises :class:`TruncationError`.
    """
    shift = int(round(2 * params.q))
    if abs(shift) > 2 * l_max:
        raise TruncationError(f"|2q| = {abs(shift)} leaves no mode inside l_max = {l_max}")
    dim = dimension(l_max)
    c = np.cos(params.delta / 2)
    s = np.sin(params.delta / 2)
    to_l = 1j * np.exp(-2j * params.alpha0) * s
    to_r = 1j * np.exp(2j * params.alpha0) * s
    mat = np.zeros((dim, dim), dtype=complex)
    retained = np.ones(dim, dtype=bool)
    for m in range(-l_max, l_max + 1):
        r_col = mode_index(SpinOrbitMode(Sam.R, m), l_max)
        l_col = mode_index(SpinOrbitMode(Sam.L, m), l_max)
        mat[r_col, r_col] = c
        mat[l_col, l_col] = c
        if s == 0.0:
            continue
        if abs(m - shift) <= l_max:
            mat[mode_index(SpinOrbitMode(Sam.L, m - shift), l_max), r_col] = to_l
        else:
            retained[r_col] = False
        if abs(m + shift) <= l_max:
            mat[mode_index(SpinOrbitMode(Sam.R, m + shift), l_max), l_col] = to_r
        else:
            retained[l_col] = False
    return LinearOperator(mat, unitary_expected=True, retained=retained)


def sam_sign(sam: Sam) -> int:
    """Spin phase index: -1 for R, +1 for L (see :func:`rotation_operator`)."""
    return -1 if sam == Sam.R else 1


def rotation_operator(theta: float, l_max: int = DEFAULT_L_MAX) -> LinearOperator:
    """Rotation of the reference frame by ``theta`` about the propagation axis.

    Diagonal with phase ``exp(i (s + l) theta)`` on ``|sam, l>``, where
    ``s = -1`` for R and ``+1`` for L. ``|R,+1>`` and ``|L,-1>`` pick up no
    phase at all; at ``l = 0`` the map sends ``|H> -> cos(theta)|H> - sin(theta)|V>``.
    """
    phases = np.empty(dimension(l_max), dtype=complex)
    for sam in Sam:
        for m in range(-l_max, l_max + 1):
            phases[mode_index(SpinOrbitMode(sam, m), l_max)] = np.exp(1j * (sam_sign(sam) + m) * theta)
    return LinearOperator(np.diag(phases), unitary_expected=True)


def jones_retarder(retardance: float, axis_angle: float) -> np.ndarray:
    """Linear retarder Jones matrix in the H/V basis, fast axis at ``axis_angle``."""
    c, s = np.cos(axis_angle), np.sin(axis_angle)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([1.0, np.exp(1j * retardance)]) @ rot.T


def polarization_operator(jones_hv: np.ndarray, l_max: int = DEFAULT_L_MAX, unitary: bool = True) -> LinearOperator:
    """Lift a 2x2 H/V-basis Jones matrix to the full space (identity on OAM)."""
    jones_rl = HV_TO_RL @ np.asarray(jones_hv, dtype=complex) @ HV_TO_RL.conj().T
    return LinearOperator(np.kron(jones_rl, np.eye(2 * l_max + 1)), unitary_expected=unitary)


def waveplate_operator(params: WaveplateParams, l_max: int = DEFAULT_L_MAX) -> LinearOperator:
    return polarization_operator(jones_retarder(params.retardance, params.axis_angle), l_max)


def pbs_split(state: SpinOrbitState) -> tuple[SpinOrbitState, SpinOrbitState]:
    """Polarizing beam splitter: (H-projected, V-projected) parts, unnormalized."""
    l_max = state.l_max
    p_h = polarization_operator(np.diag([1.0, 0.0]), l_max, unitary=False)
    p_v = polarization_operator(np.diag([0.0, 1.0]), l_max, unitary=False)
    return SpinOrbitState(p_h.matrix @ state.amplitudes), SpinOrbitState(p_v.matrix @ state.amplitudes)


def logical_subspace(l_max: int = DEFAULT_L_MAX) -> tuple[SpinOrbitState, SpinOrbitState]:
    """Rotation-invariant logical basis ``(|0>_L, |1>_L) = (|L,-1>, |R,+1>)``."""
    return SpinOrbitState.basis(Sam.L, -1, l_max), SpinOrbitState.basis(Sam.R, 1, l_max)


def polarization_subspace(l_max: int = DEFAULT_L_MAX, oam: int = 0) -> tuple[SpinOrbitState, SpinOrbitState]:
    return SpinOrbitState.basis(Sam.R, oam, l_max), SpinOrbitState.basis(Sam.L, oam, l_max)


def depolarize(rho: DensityMatrix, p: float, subspace: tuple[SpinOrbitState, SpinOrbitState]) -> DensityMatrix:
    """Depolarize ``rho`` inside a two-dimensional subspace.

    ``(1-p) rho + p [tr(P rho) P/2 + Q rho Q]`` with ``P`` the subspace
    projector and ``Q = 1 - P``. For states supported on the subspace this
    is the usual ``(1-p) rho + p I/2``; weight outside it is left in place.

    Raises:
        ValueError: ``p`` outside [0, 1], or ``rho`` has no weight on the subspace.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability must lie in [0, 1], got {p}")
    basis = np.stack([s.amplitudes for s in subspace], axis=1)
    if basis.shape[0] != rho.dim:
        raise ValueError("subspace and density matrix dimensions differ")
    if np.max(np.abs(basis.conj().T @ basis - np.eye(2))) > 1e-10:
        raise ValueError("subspace basis must be orthonormal")
    proj = basis @ basis.conj().T
    weight = float(np.real(np.trace(proj @ rho.matrix)))
    if weight < NORM_TOL:
        raise ValueError("state has no support on the depolarized subspace")
    if p == 0.0:
        return rho
    comp = np.eye(rho.dim) - proj
    mixed = weight * proj / 2 + comp @ rho.matrix @ comp
    out = (1 - p) * rho.matrix + p * mixed
    assert abs(np.trace(out).real - 1.0) < TRACE_TOL
    return DensityMatrix(out)

