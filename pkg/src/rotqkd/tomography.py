"""Single-qubit polarization tomography on the decoded analysis subspace.

The analysis qubit is the zero-OAM polarization subspace written in the
H/V basis, so ``|R> = (1, -i)/sqrt(2)`` under the package convention.
Reconstruction maximizes the binomial likelihood over ``rho = T^dag T / tr``
with ``T`` lower triangular (four real parameters).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import xlogy

from .optics import NoiseParams
from .protocol import (
    BASIS_STATES,
    Basis,
    Encoding,
    alice_prepare,
    bob_decode,
    channel_transmit,
    qber_from_fidelities,
)
from .spinorbit import DensityMatrix, LinearOperator, SpinOrbitState

LABELS = ("H", "V", "D", "A", "R", "L")

_S = 1 / np.sqrt(2)
ANALYSIS_KETS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, -1j * _S], dtype=complex),
    "L": np.array([_S, 1j * _S], dtype=complex),
}

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
# (+1 eigenstate, -1 eigenstate) for each Pauli axis.
PAULI_PAIRS = {"x": ("D", "A"), "y": ("L", "R"), "z": ("H", "V")}


_POLISH_ROUNDS = 10


class TomographyError(ValueError):
    pass


@dataclass(frozen=True)
class TomographySetting:
    label: str
    projector: LinearOperator


@dataclass(frozen=True)
class CountRecord:
    setting: str
    shots: int
    clicks: int

    def __post_init__(self):
        if self.setting not in LABELS:
            raise TomographyError(f"unknown setting {self.setting!r}")
        if self.shots < 1 or not 0 <= self.clicks <= self.shots:
            raise TomographyError(f"need 0 <= clicks <= shots and shots >= 1, got {self.clicks}/{self.shots}")


@dataclass(frozen=True)
class MleOptions:
    max_iters: int = 5000
    tol: float = 1e-10
    restarts: int = 3
    seed: int = 0


@dataclass(frozen=True, eq=False)
class TomographyResult:
    rho: DensityMatrix
    log_likelihood: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)


def tomography_settings() -> list[TomographySetting]:
    return [
        TomographySetting(lab, LinearOperator(np.outer(ANALYSIS_KETS[lab], ANALYSIS_KETS[lab].conj())))
        for lab in LABELS
    ]


def analysis_state(rho: DensityMatrix) -> DensityMatrix:
    """Restrict a full spin-orbit state to the zero-OAM polarization qubit (H/V basis)."""
    l_max = (rho.dim - 2) // 4
    basis = np.stack([SpinOrbitState.polarization(lab, 0, l_max).amplitudes for lab in ("H", "V")], axis=1)
    block = basis.conj().T @ rho.matrix @ basis
    weight = np.trace(block).real
    if abs(weight - 1.0) > 1e-9:
        raise TomographyError(f"state has weight {weight:.6g} outside the analysis subspace")
    return DensityMatrix(block / weight)


def _projector_stack(labels: Sequence[str]) -> np.ndarray:
    return np.stack([np.outer(ANALYSIS_KETS[lab], ANALYSIS_KETS[lab].conj()) for lab in labels])


def simulate_counts(
    rho: DensityMatrix, settings: Sequence[TomographySetting], shots_per_setting: int, rng: np.random.Generator
) -> list[CountRecord]:
    """Independent binomial click counts ``Binomial(shots, tr(P rho))`` per setting."""
    if shots_per_setting < 1:
        raise TomographyError("shots_per_setting must be >= 1")
    if rho.dim != 2:
        raise TomographyError("tomography acts on the 2-dimensional analysis qubit")
    out = []
    for s in settings:
        p = float(np.clip(np.real(np.trace(s.projector.matrix @ rho.matrix)), 0.0, 1.0))
        out.append(CountRecord(s.label, shots_per_setting, int(rng.binomial(shots_per_setting, p))))
    return out


def _frequencies(counts: Iterable[CountRecord]) -> dict[str, float]:
    freq = {c.setting: c.clicks / c.shots for c in counts}
    missing = set(LABELS) - set(freq)
    if missing:
        raise TomographyError(f"missing settings: {sorted(missing)}")
    return freq


def linear_inversion(counts: Iterable[CountRecord]) -> np.ndarray:
    """``(I + r.sigma)/2`` from frequency differences; may be non-physical."""
    freq = _frequencies(counts)
    rho = np.eye(2, dtype=complex) / 2
    for axis, (plus, minus) in PAULI_PAIRS.items():
        rho = rho + 0.5 * (freq[plus] - freq[minus]) * PAULI[axis]
    return rho


def is_physical(matrix: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.linalg.eigvalsh(matrix).min() >= -tol)


def project_to_physical(matrix: np.ndarray) -> DensityMatrix:
    """Closest qubit state: shrink the Bloch vector onto the unit ball."""
    r = np.array([np.real(np.trace(matrix @ PAULI[a])) for a in "xyz"])
    norm = np.linalg.norm(r)
    if norm > 1:
        r = r / norm
    rho = np.eye(2, dtype=complex) / 2 + 0.5 * sum(r[i] * PAULI[a] for i, a in enumerate("xyz"))
    return DensityMatrix(rho)


def log_likelihood(rho: np.ndarray | DensityMatrix, counts: Sequence[CountRecord]) -> float:
    """Binomial log-likelihood ``sum c log p + (s - c) log(1 - p)`` with ``p = tr(P rho)``."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else rho
    proj = _projector_stack([c.setting for c in counts])
    p = np.clip(np.real(np.einsum("kij,ji->k", proj, m)), 0.0, 1.0)
    clicks = np.array([c.clicks for c in counts], dtype=float)
    shots = np.array([c.shots for c in counts], dtype=float)
    return float(np.sum(xlogy(clicks, p) + xlogy(shots - clicks, 1 - p)))


def _rho_from_params(t: np.ndarray) -> np.ndarray:
    T = np.array([[t[0], 0], [t[2] + 1j * t[3], t[1]]])
    g = T.conj().T @ T
    return g / np.trace(g).real


def _params_from_rho(rho: np.ndarray) -> np.ndarray:
    # rho = T^dag T with T lower triangular, via Cholesky of the index-reversed matrix.
    full_rank = 0.98 * rho + 0.01 * np.eye(2)
    J = np.eye(2)[::-1]
    L = np.linalg.cholesky(J @ full_rank @ J)
    T = (J @ L @ J).conj().T
    return np.array([T[0, 0].real, T[1, 1].real, T[1, 0].real, T[1, 0].imag])


def mle_reconstruct(counts: Sequence[CountRecord], opts: MleOptions = MleOptions()) -> TomographyResult:
    """Maximum-likelihood qubit state; always physical.

    Nelder-Mead runs from the projected linear-inversion estimate and from
    ``opts.restarts`` random perturbations of it; the best likelihood wins.
    A run converges when the simplex spread in log-likelihood falls below
    ``opts.tol`` (relative to the likelihood scale) before ``max_iters``.

    Raises:
        TomographyError: missing settings or no clicks at all.
    """
    counts = list(counts)
    _frequencies(counts)
    if sum(c.clicks for c in counts) == 0:
        raise TomographyError("all-zero counts carry no information")
    proj = _projector_stack([c.setting for c in counts])
    clicks = np.array([c.clicks for c in counts], dtype=float)
    misses = np.array([c.shots - c.clicks for c in counts], dtype=float)
    scale = float(clicks.sum() + misses.sum())

    def neg_ll(t):
        T = np.array([[t[0], 0], [t[2] + 1j * t[3], t[1]]])
        g = T.conj().T @ T
        tr = np.trace(g).real
        if tr <= 0:
            return np.inf
        p = np.clip(np.real(np.einsum("kij,ji->k", proj, g)) / tr, 0.0, 1.0)
        ll = np.sum(xlogy(clicks, p) + xlogy(misses, 1 - p)) / scale
        # Pins the free overall scale of T without moving the optimum in rho.
        return -ll + (tr - 1.0) ** 2

    start = _params_from_rho(project_to_physical(linear_inversion(counts)).matrix)
    rng = np.random.default_rng(opts.seed)
    starts = [start] + [start + rng.normal(scale=0.1, size=4) for _ in range(opts.restarts)]
    nm_options = {"maxiter": opts.max_iters, "fatol": opts.tol, "xatol": np.inf}
    best = None
    for x0 in starts:
        history: list[float] = []
        iterations = 0
        # Nelder-Mead can collapse early near the rank-1 boundary; restart it
        # from its own optimum until a restart no longer improves the fit.
        for _ in range(_POLISH_ROUNDS):
            budget = opts.max_iters - iterations
            if budget <= 0:
                break
            res = scipy.optimize.minimize(
                neg_ll,
                x0,
                method="Nelder-Mead",
                callback=lambda xk: history.append(-neg_ll(xk)),
                options={**nm_options, "maxiter": budget},
            )
            iterations += res.nit
            improved = neg_ll(x0) - res.fun
            x0 = res.x
            if improved < opts.tol:
                break
        converged = bool(res.success) and iterations < opts.max_iters
        if best is None or res.fun < best[0]:
            best = (res.fun, res.x, history, iterations, converged)
    _, x, history, iterations, converged = best
    rho = _rho_from_params(x)
    rho = DensityMatrix(0.5 * (rho + rho.conj().T))
    return TomographyResult(
        rho=rho,
        log_likelihood=log_likelihood(rho, counts),
        iterations=iterations,
        converged=converged,
        history=tuple(h * scale for h in history),
    )


def density_fidelity(rho: DensityMatrix | np.ndarray, sigma: DensityMatrix | np.ndarray) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    a = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    b = sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma)
    root = scipy.linalg.sqrtm(a)
    inner = scipy.linalg.sqrtm(root @ b @ root)
    return float(np.clip(np.real(np.trace(inner)) ** 2, 0.0, 1.0))


def pure_fidelity(rho: DensityMatrix, ket: np.ndarray) -> float:
    ket = np.asarray(ket, dtype=complex)
    ket = ket / np.linalg.norm(ket)
    return float(np.real(np.vdot(ket, rho.matrix @ ket)))


# --------------------------------------------------------------------------
# prepare -> transmit -> decode -> tomograph


PREPARED_STATES = {
    Encoding.POLARIZATION_ONLY: {"H": (Basis.Z, 0), "V": (Basis.Z, 1), "R": (Basis.Y, 0), "L": (Basis.Y, 1)},
    Encoding.HYBRID: {"+L": (Basis.Z, 0), "-L": (Basis.Z, 1), "0L": (Basis.Y, 0), "1L": (Basis.Y, 1)},
}


def target_ket(basis: Basis, bit: int) -> np.ndarray:
    """Ideal analysis-qubit ket Bob should reconstruct for ``(basis, bit)``."""
    return ANALYSIS_KETS[BASIS_STATES[Basis(basis)][bit]]


def received_state(
    basis: Basis, bit: int, encoding: Encoding, theta: float, noise: NoiseParams = NoiseParams(), alpha0: float = 0.0
) -> DensityMatrix:
    """Exact analysis-qubit state at Bob's polarization analyser."""
    rho = channel_transmit(alice_prepare(bit, basis, encoding, alpha0), theta, noise)
    return analysis_state(bob_decode(rho, encoding, alpha0))


def tomograph_prepared_state(
    label: str,
    encoding: Encoding,
    theta: float,
    shots: int,
    rng: np.random.Generator,
    noise: NoiseParams = NoiseParams(),
    opts: MleOptions = MleOptions(),
) -> tuple[TomographyResult, float]:
    """Reconstruct one prepared state after the channel; returns (result, fidelity to target)."""
    encoding = Encoding(encoding)
    basis, bit = PREPARED_STATES[encoding][label]
    counts = simulate_counts(received_state(basis, bit, encoding, theta, noise), tomography_settings(), shots, rng)
    result = mle_reconstruct(counts, opts)
    return result, pure_fidelity(result.rho, target_ket(basis, bit))


@dataclass(frozen=True)
class FidelityReport:
    fidelities: tuple[float, ...]
    predicted_qber: float


def state_fidelity_report(results: Sequence[TomographyResult], targets: Sequence[np.ndarray]) -> FidelityReport:
    """Fidelities of four reconstructions to their targets and the implied QBER."""
    if len(results) != 4 or len(targets) != 4:
        raise TomographyError("need exactly four reconstructed states and four targets")
    fids = tuple(float(np.clip(pure_fidelity(r.rho, t), 0.0, 1.0)) for r, t in zip(results, targets))
    return FidelityReport(fids, qber_from_fidelities(fids))


# --------------------------------------------------------------------------
# CSV interchange


def write_counts_csv(counts: Iterable[CountRecord], dest: str | PathLike | io.TextIOBase) -> None:
    def _write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["setting", "shots", "clicks"])
        for c in counts:
            writer.writerow([c.setting, c.shots, c.clicks])

    if isinstance(dest, io.TextIOBase):
        _write(dest)
    else:
        with open(dest, "w", newline="") as fh:
            _write(fh)


def read_counts_csv(src: str | PathLike | io.TextIOBase) -> list[CountRecord]:
    def _read(fh):
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["setting", "shots", "clicks"]:
            raise TomographyError(f"expected columns setting,shots,clicks, got {reader.fieldnames}")
        return [CountRecord(row["setting"], int(row["shots"]), int(row["clicks"])) for row in reader]

    if isinstance(src, io.TextIOBase):
        return _read(src)
    with open(src, newline="") as fh:
        return _read(fh)
