"""Joint spin (SAM) x orbital (OAM) angular momentum space of a single photon.

Modes are ``|sam, l>`` with ``sam`` in {R, L} and ``|l| <= l_max``. The
canonical ordering is sam-major (R before L), then ``l`` ascending from
``-l_max``, so operators acting only on polarization are ``kron(J, I_oam)``.

Circular polarization convention (used by every module in the package)::

    |R> = (|H> - i|V>) / sqrt(2)
    |L> = (|H> + i|V>) / sqrt(2)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_L_MAX = 2

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9

SQRT1_2 = 1.0 / np.sqrt(2.0)

# Columns are |H>, |V> written in the (|R>, |L>) basis.
HV_TO_RL = np.array([[SQRT1_2, 1j * SQRT1_2], [SQRT1_2, -1j * SQRT1_2]])

# Polarization kets in the (|R>, |L>) basis.
POLARIZATION_KETS: dict[str, np.ndarray] = {
    "R": np.array([1.0, 0.0], dtype=complex),
    "L": np.array([0.0, 1.0], dtype=complex),
    "H": HV_TO_RL[:, 0].copy(),
    "V": HV_TO_RL[:, 1].copy(),
    "D": (HV_TO_RL[:, 0] + HV_TO_RL[:, 1]) * SQRT1_2,
    "A": (HV_TO_RL[:, 0] - HV_TO_RL[:, 1]) * SQRT1_2,
}


class SpinOrbitError(ValueError):
    """Base class for invalid operations on spin-orbit objects."""


class TruncationError(SpinOrbitError):
    """An OAM index falls outside the retained range ``|l| <= l_max``."""


class DimensionMismatchError(SpinOrbitError):
    pass


class NormViolationError(SpinOrbitError):
    """A norm-preserving operation changed the norm (usually truncation leakage)."""


class ZeroNormError(SpinOrbitError):
    pass


class Sam(enum.IntEnum):
    """Circular polarization handedness, ordered R < L."""

    R = 0
    L = 1


def dimension(l_max: int = DEFAULT_L_MAX) -> int:
    return 2 * (2 * l_max + 1)


def _check_l_max(l_max: int) -> None:
    if int(l_max) != l_max or l_max < 2:
        raise ValueError(f"l_max must be an integer >= 2, got {l_max!r}")


@dataclass(frozen=True)
class SpinOrbitMode:
    sam: Sam
    oam: int

    def __post_init__(self):
        object.__setattr__(self, "sam", Sam(self.sam))
        if int(self.oam) != self.oam:
            raise ValueError(f"OAM must be an integer, got {self.oam!r}")
        object.__setattr__(self, "oam", int(self.oam))


def mode_index(mode: SpinOrbitMode, l_max: int = DEFAULT_L_MAX) -> int:
    """Position of ``mode`` in the canonical ordering.

    Raises:
        TruncationError: if ``|mode.oam| > l_max``.
    """
    _check_l_max(l_max)
    if abs(mode.oam) > l_max:
        raise TruncationError(f"OAM {mode.oam} outside |l| <= {l_max}")
    return int(mode.sam) * (2 * l_max + 1) + mode.oam + l_max


def index_mode(index: int, l_max: int = DEFAULT_L_MAX) -> SpinOrbitMode:
    """Inverse of :func:`mode_index`."""
    _check_l_max(l_max)
    if not 0 <= index < dimension(l_max):
        raise TruncationError(f"index {index} outside [0, {dimension(l_max)})")
    sam, offset = divmod(index, 2 * l_max + 1)
    return SpinOrbitMode(Sam(sam), offset - l_max)


def all_modes(l_max: int = DEFAULT_L_MAX) -> list[SpinOrbitMode]:
    return [index_mode(i, l_max) for i in range(dimension(l_max))]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


def _l_max_for_dimension(dim: int) -> int:
    l_max, rem = divmod(dim - 2, 4)
    if rem or dim < dimension(2):
        raise DimensionMismatchError(f"{dim} is not a valid spin-orbit dimension")
    return l_max


@dataclass(frozen=True, eq=False)
class SpinOrbitState:
    """Complex amplitude vector over the canonical mode ordering.

    States need not be normalized (projections produce sub-normalized
    vectors), but the amplitudes must be finite. Operations that need a
    physical state reject zero-norm input with :class:`ZeroNormError`.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1:
            raise DimensionMismatchError("amplitudes must be a 1-d vector")
        _l_max_for_dimension(amps.size)
        if not np.all(np.isfinite(amps)):
            raise SpinOrbitError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def l_max(self) -> int:
        return _l_max_for_dimension(self.amplitudes.size)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def basis(cls, sam: Sam | str, oam: int, l_max: int = DEFAULT_L_MAX) -> "SpinOrbitState":
        if isinstance(sam, str):
            sam = Sam[sam]
        amps = np.zeros(dimension(l_max), dtype=complex)
        amps[mode_index(SpinOrbitMode(sam, oam), l_max)] = 1.0
        return cls(amps)

    @classmethod
    def from_modes(
        cls, amplitudes: Mapping[tuple[Sam | str, int], complex], l_max: int = DEFAULT_L_MAX
    ) -> "SpinOrbitState":
        """Build a state from ``{(sam, oam): amplitude}``; unnamed modes are zero."""
        amps = np.zeros(dimension(l_max), dtype=complex)
        for (sam, oam), value in amplitudes.items():
            if isinstance(sam, str):
                sam = Sam[sam]
            amps[mode_index(SpinOrbitMode(sam, oam), l_max)] += value
        return cls(amps)

    @classmethod
    def polarization(cls, label: str, oam: int = 0, l_max: int = DEFAULT_L_MAX) -> "SpinOrbitState":
        """Polarization state ``label`` in {H, V, D, A, R, L} carrying OAM ``oam``."""
        ket = POLARIZATION_KETS[label]
        return cls.from_modes({(Sam.R, oam): ket[0], (Sam.L, oam): ket[1]}, l_max)

    def normalize(self) -> "SpinOrbitState":
        norm = self.norm
        if norm < NORM_TOL:
            raise ZeroNormError("cannot normalize a zero-norm state")
        return SpinOrbitState(self.amplitudes / norm)

    def amplitude(self, sam: Sam | str, oam: int) -> complex:
        if isinstance(sam, str):
            sam = Sam[sam]
        return complex(self.amplitudes[mode_index(SpinOrbitMode(sam, oam), self.l_max)])

    def __add__(self, other: "SpinOrbitState") -> "SpinOrbitState":
        _same_dim(self.dim, other.dim)
        return SpinOrbitState(self.amplitudes + other.amplitudes)

    def __sub__(self, other: "SpinOrbitState") -> "SpinOrbitState":
        _same_dim(self.dim, other.dim)
        return SpinOrbitState(self.amplitudes - other.amplitudes)

    def __mul__(self, scalar: complex) -> "SpinOrbitState":
        return SpinOrbitState(self.amplitudes * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "SpinOrbitState":
        return SpinOrbitState(self.amplitudes / scalar)

    def __eq__(self, other):
        if not isinstance(other, SpinOrbitState):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.amplitudes, other.amplitudes)

    def __hash__(self):
        return hash(self.amplitudes.tobytes())

    def allclose(self, other: "SpinOrbitState", atol: float = 1e-10) -> bool:
        return self.dim == other.dim and np.allclose(self.amplitudes, other.amplitudes, atol=atol, rtol=0)


def _same_dim(a: int, b: int) -> None:
    if a != b:
        raise DimensionMismatchError(f"dimension mismatch: {a} vs {b}")


def _require_nonzero(state: SpinOrbitState) -> None:
    if state.norm < NORM_TOL:
        raise ZeroNormError("zero-norm state")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix.

    Any square dimension is accepted so the same type carries both full
    spin-orbit states and 2x2 analysis-qubit states.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError("density matrix must be square")
        if not np.all(np.isfinite(m)):
            raise SpinOrbitError("density matrix must be finite")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise SpinOrbitError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise SpinOrbitError(f"density matrix trace {np.trace(m).real:.3g} != 1")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise SpinOrbitError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, state: SpinOrbitState | np.ndarray) -> "DensityMatrix":
        vec = state.amplitudes if isinstance(state, SpinOrbitState) else np.asarray(state, dtype=complex)
        norm = np.linalg.norm(vec)
        if norm < NORM_TOL:
            raise ZeroNormError("zero-norm state")
        vec = vec / norm
        return cls(np.outer(vec, vec.conj()))

    @classmethod
    def mixture(cls, weights: Sequence[float], states: Iterable[SpinOrbitState | np.ndarray]) -> "DensityMatrix":
        total = sum(w * cls.pure(s).matrix for w, s in zip(weights, states, strict=True))
        return cls(total)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Dense square operator on the spin-orbit space.

    ``retained`` marks the basis modes on which the operator is expected to
    act unitarily; columns whose image would leave the truncated space are
    excluded. ``None`` means every mode.
    """

    matrix: np.ndarray
    unitary_expected: bool = False
    retained: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError("operator must be square")
        object.__setattr__(self, "matrix", _frozen(m))
        if self.retained is not None:
            mask = np.asarray(self.retained, dtype=bool)
            if mask.shape != (m.shape[0],):
                raise DimensionMismatchError("retained mask has wrong length")
            mask.setflags(write=False)
            object.__setattr__(self, "retained", mask)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, l_max: int = DEFAULT_L_MAX) -> "LinearOperator":
        return cls(np.eye(dimension(l_max)), unitary_expected=True)

    @property
    def dagger(self) -> "LinearOperator":
        # The adjoint is unitary on the image of the retained modes, which we
        # do not track; only full-space unitaries keep the flag.
        full = self.retained is None or bool(np.all(self.retained))
        return LinearOperator(self.matrix.conj().T, unitary_expected=self.unitary_expected and full)

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        _same_dim(self.dim, other.dim)
        retained = None
        if other.retained is not None:
            retained = other.retained
        if self.retained is not None:
            # Columns of other that land (only) inside self's retained modes.
            inside = np.abs(other.matrix[~self.retained, :]).max(axis=0, initial=0.0) < NORM_TOL
            retained = inside if retained is None else (retained & inside)
        return LinearOperator(
            self.matrix @ other.matrix,
            unitary_expected=self.unitary_expected and other.unitary_expected,
            retained=retained,
        )

    def unitarity_error(self) -> float:
        """Largest entry of ``|U^dagger U - I|`` restricted to retained modes."""
        cols = self.matrix if self.retained is None else self.matrix[:, self.retained]
        gram = cols.conj().T @ cols
        return float(np.max(np.abs(gram - np.eye(gram.shape[0])), initial=0.0))

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.unitarity_error() < tol


def inner_product(a: SpinOrbitState, b: SpinOrbitState) -> complex:
    """``<a|b>``, conjugate-linear in ``a``."""
    _same_dim(a.dim, b.dim)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def apply(op: LinearOperator, state: SpinOrbitState) -> SpinOrbitState:
    """Matrix-vector product with leakage and norm checks for unitaries.

    Raises:
        DimensionMismatchError: operator and state sizes differ.
        TruncationError: a unitary acts on a state populating modes whose
            image falls outside the truncated OAM range.
        NormViolationError: a unitary failed to preserve the norm.
    """
    _same_dim(op.dim, state.dim)
    out = op.matrix @ state.amplitudes
    if op.unitary_expected:
        if op.retained is not None:
            leaked = np.linalg.norm(state.amplitudes[~op.retained])
            if leaked > NORM_TOL:
                raise TruncationError(
                    f"state populates modes mapped outside the OAM truncation (weight {leaked**2:.3g})"
                )
        before, after = state.norm, float(np.linalg.norm(out))
        if abs(after - before) > UNITARY_TOL * max(1.0, before):
            raise NormViolationError(f"unitary changed norm {before:.12g} -> {after:.12g}")
    return SpinOrbitState(out)


def conjugate(op: LinearOperator, rho: DensityMatrix) -> DensityMatrix:
    """``U rho U^dagger``; trace loss from leakage is an error for unitaries."""
    _same_dim(op.dim, rho.dim)
    out = op.matrix @ rho.matrix @ op.matrix.conj().T
    out = 0.5 * (out + out.conj().T)
    if op.unitary_expected and abs(np.trace(out).real - 1.0) > UNITARY_TOL:
        raise NormViolationError("unitary conjugation did not preserve the trace")
    return DensityMatrix(out)


def fidelity(rho: DensityMatrix, target: SpinOrbitState | np.ndarray) -> float:
    """Overlap ``<target|rho|target>`` with a normalized pure target."""
    vec = target.amplitudes if isinstance(target, SpinOrbitState) else np.asarray(target, dtype=complex)
    _same_dim(rho.dim, vec.size)
    norm = np.linalg.norm(vec)
    if norm < NORM_TOL:
        raise ZeroNormError("fidelity target has zero norm")
    if abs(norm - 1.0) > 1e-9:
        raise SpinOrbitError("fidelity target must be normalized")
    return float(np.real(np.vdot(vec, rho.matrix @ vec)))


def projector(state: SpinOrbitState | np.ndarray) -> np.ndarray:
    vec = state.amplitudes if isinstance(state, SpinOrbitState) else np.asarray(state, dtype=complex)
    return np.outer(vec, vec.conj())


def _as_matrix(p) -> np.ndarray:
    return p.matrix if isinstance(p, LinearOperator) else np.asarray(p, dtype=complex)


def born_probabilities(state: SpinOrbitState | DensityMatrix, projectors: Sequence) -> np.ndarray:
    """Exact outcome probabilities ``<psi|P_i|psi>`` (or ``tr(P_i rho)``).

    The projector set must be complete on the support of the state: the
    probabilities sum to one within 1e-10.
    """
    mats = [_as_matrix(p) for p in projectors]
    if isinstance(state, DensityMatrix):
        for m in mats:
            _same_dim(m.shape[0], state.dim)
        probs = np.array([np.real(np.trace(m @ state.matrix)) for m in mats])
    else:
        _require_nonzero(state)
        psi = state.amplitudes / state.norm
        for m in mats:
            _same_dim(m.shape[0], psi.size)
        total = sum(mats) @ psi
        if np.linalg.norm(total - psi) > UNITARY_TOL:
            raise SpinOrbitError("projectors do not resolve the identity on the state's support")
        probs = np.array([np.real(np.vdot(psi, m @ psi)) for m in mats])
    if abs(probs.sum() - 1.0) > UNITARY_TOL:
        raise SpinOrbitError(f"projector set is not complete (probabilities sum to {probs.sum():.12g})")
    return np.clip(probs, 0.0, 1.0)


def born_sample(state: SpinOrbitState, projectors: Sequence, rng: np.random.Generator) -> int:
    """Draw a measurement outcome index according to the Born rule."""
    probs = born_probabilities(state, projectors)
    return int(rng.choice(len(probs), p=probs / probs.sum()))
