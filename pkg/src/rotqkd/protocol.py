"""BB84 with polarization-only or rotation-invariant hybrid encoding.

Alice prepares one of four polarization states at zero OAM; in hybrid mode a
q=1/2, delta=pi Q-plate turns them into spin-orbit states supported on
``span{|L,-1>, |R,+1>}``. Bob's rotated platform is modelled as a frame
rotation of the incoming state, followed by the decoding Q-plate (hybrid
only) and an ideal polarization analyser at zero OAM.

Rounds are simulated in fixed-size blocks; each block draws from its own
stream ``SeedSequence(seed, spawn_key=(block,))`` so results depend only on
the seed and round indices, never on the number of workers.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import wire
from .optics import (
    NoiseParams,
    QPlateParams,
    depolarize,
    logical_subspace,
    polarization_subspace,
    qplate_operator,
    rotation_operator,
)
from .source import SourceParams, detect, sample_photon_numbers
from .spinorbit import (
    DEFAULT_L_MAX,
    DensityMatrix,
    SpinOrbitState,
    apply,
    conjugate,
    projector,
)

BLOCK_SIZE = 1 << 16
SECURITY_THRESHOLD = 0.11


class Encoding(str, enum.Enum):
    POLARIZATION_ONLY = "polarization"
    HYBRID = "hybrid"


class Basis(enum.IntEnum):
    """Z = {H, V} (hybrid: {|+>_L, |->_L}); Y = {R, L} (hybrid: {|0>_L, |1>_L})."""

    Z = 0
    Y = 1


# Polarization label for (basis, bit).
BASIS_STATES = {Basis.Z: ("H", "V"), Basis.Y: ("R", "L")}
HYBRID_LABELS = {Basis.Z: ("+L", "-L"), Basis.Y: ("0L", "1L")}


@dataclass(frozen=True)
class ProtocolConfig:
    n_rounds: int
    encoding: Encoding = Encoding.HYBRID
    theta: float = 0.0
    source: SourceParams = field(default_factory=SourceParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    basis_bias: float = 0.5
    sample_fraction: float = 0.1
    seed: int = 0
    alpha0: float = 0.0
    discard_multiphoton: bool = False

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if not 0.0 < self.basis_bias < 1.0:
            raise ValueError("basis_bias must lie in (0, 1)")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must lie in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "encoding", Encoding(self.encoding))


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    alice_basis: Basis
    alice_bit: int
    bob_basis: Basis
    detected: bool
    bob_bit: int | None
    multiphoton: bool

    def __post_init__(self):
        if self.detected != (self.bob_bit is not None):
            raise ValueError("bob_bit must be present exactly when the round was detected")


@dataclass(frozen=True, eq=False)
class RoundBatch:
    """Columnar form of a list of :class:`RoundRecord` (``bob_bit = -1`` when undetected)."""

    round_index: np.ndarray
    alice_basis: np.ndarray
    alice_bit: np.ndarray
    bob_basis: np.ndarray
    detected: np.ndarray
    bob_bit: np.ndarray
    multiphoton: np.ndarray

    def __len__(self) -> int:
        return self.round_index.size

    def records(self) -> list[RoundRecord]:
        return [
            RoundRecord(int(i), Basis(int(ab)), int(a), Basis(int(bb)), bool(d), int(b) if d else None, bool(m))
            for i, ab, a, bb, d, b, m in zip(
                self.round_index.tolist(),
                self.alice_basis.tolist(),
                self.alice_bit.tolist(),
                self.bob_basis.tolist(),
                self.detected.tolist(),
                self.bob_bit.tolist(),
                self.multiphoton.tolist(),
            )
        ]

    @classmethod
    def from_records(cls, records: Sequence[RoundRecord]) -> "RoundBatch":
        return cls(
            round_index=np.array([r.round_index for r in records], dtype=np.int64),
            alice_basis=np.array([r.alice_basis for r in records], dtype=np.uint8),
            alice_bit=np.array([r.alice_bit for r in records], dtype=np.uint8),
            bob_basis=np.array([r.bob_basis for r in records], dtype=np.uint8),
            detected=np.array([r.detected for r in records], dtype=bool),
            bob_bit=np.array([-1 if r.bob_bit is None else r.bob_bit for r in records], dtype=np.int8),
            multiphoton=np.array([r.multiphoton for r in records], dtype=bool),
        )

    @classmethod
    def concatenate(cls, batches: Sequence["RoundBatch"]) -> "RoundBatch":
        names = cls.__dataclass_fields__
        return cls(**{n: np.concatenate([getattr(b, n) for b in batches]) for n in names})


@dataclass(frozen=True, eq=False)
class SiftedKey:
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    round_indices: np.ndarray

    def __post_init__(self):
        if not (self.alice_bits.size == self.bob_bits.size == self.round_indices.size):
            raise ValueError("sifted key arrays differ in length")
        if np.any(np.diff(self.round_indices) <= 0):
            raise ValueError("round indices must be strictly increasing")

    def __len__(self) -> int:
        return self.alice_bits.size

    @classmethod
    def from_bits(cls, alice_bits, bob_bits, round_indices=None) -> "SiftedKey":
        a = np.asarray(alice_bits, dtype=np.uint8)
        b = np.asarray(bob_bits, dtype=np.uint8)
        idx = np.arange(a.size) if round_indices is None else np.asarray(round_indices, dtype=np.int64)
        return cls(a, b, idx)


@dataclass(frozen=True)
class QberReport:
    sample_size: int
    error_count: int
    qber: float
    std_error: float


# --------------------------------------------------------------------------
# quantum chain


def encoder_qplate(alpha0: float = 0.0, l_max: int = DEFAULT_L_MAX):
    return qplate_operator(QPlateParams(delta=np.pi, q=0.5, alpha0=alpha0), l_max)


def alice_prepare(
    bit: int, basis: Basis, encoding: Encoding, alpha0: float = 0.0, l_max: int = DEFAULT_L_MAX
) -> SpinOrbitState:
    """BB84 state for ``(bit, basis)``; hybrid states carry the Q-plate phases."""
    state = SpinOrbitState.polarization(BASIS_STATES[Basis(basis)][bit], 0, l_max)
    if Encoding(encoding) is Encoding.HYBRID:
        state = apply(encoder_qplate(alpha0, l_max), state)
    return state


def noise_subspace(rho: DensityMatrix, l_max: int = DEFAULT_L_MAX):
    """The two-mode subspace (logical or zero-OAM polarization) holding ``rho``."""
    for sub in (logical_subspace(l_max), polarization_subspace(l_max)):
        basis = np.stack([s.amplitudes for s in sub], axis=1)
        if np.real(np.trace(basis.conj().T @ rho.matrix @ basis)) > 1 - 1e-9:
            return sub
    raise ValueError("state is neither in the logical nor the zero-OAM polarization subspace")


def channel_transmit(
    state: SpinOrbitState | DensityMatrix, theta: float, noise: NoiseParams = NoiseParams()
) -> DensityMatrix:
    """Frame rotation by ``theta`` followed by depolarization of the occupied subspace."""
    rho = state if isinstance(state, DensityMatrix) else DensityMatrix.pure(state)
    l_max = (rho.dim - 2) // 4
    rho = conjugate(rotation_operator(theta, l_max), rho)
    if noise.depolarizing_p == 0.0:
        return rho
    return depolarize(rho, noise.depolarizing_p, noise_subspace(rho, l_max))


def bob_decode(rho: DensityMatrix, encoding: Encoding, alpha0: float = 0.0) -> DensityMatrix:
    """Apply the decoding Q-plate in hybrid mode; identity otherwise."""
    if Encoding(encoding) is Encoding.POLARIZATION_ONLY:
        return rho
    return conjugate(encoder_qplate(alpha0, (rho.dim - 2) // 4), rho)


def bob_projectors(basis: Basis, l_max: int = DEFAULT_L_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Detector projectors (bit 0, bit 1) of the zero-OAM polarization analyser."""
    labels = BASIS_STATES[Basis(basis)]
    return tuple(projector(SpinOrbitState.polarization(lab, 0, l_max)) for lab in labels)


def bob_outcome_probabilities(
    rho: DensityMatrix, basis: Basis, encoding: Encoding, alpha0: float = 0.0
) -> np.ndarray:
    """Probabilities that the photon reaches detector 0 or 1; the rest is lost."""
    decoded = bob_decode(rho, encoding, alpha0)
    l_max = (rho.dim - 2) // 4
    return np.array([np.real(np.trace(p @ decoded.matrix)) for p in bob_projectors(basis, l_max)]).clip(0, 1)


def bob_measure(
    rho: DensityMatrix,
    basis: Basis,
    encoding: Encoding,
    source: SourceParams,
    rng: np.random.Generator,
    alpha0: float = 0.0,
) -> tuple[bool, int | None]:
    """Measure one photon: Born outcome, then detector efficiency and dark counts.

    A double click is resolved to a uniformly random bit.
    """
    p = bob_outcome_probabilities(rho, basis, encoding, alpha0)
    outcome = rng.choice(3, p=[p[0], p[1], max(0.0, 1 - p.sum())])
    arrival = np.zeros(2)
    if outcome < 2:
        arrival[outcome] = 1.0
    clicks = detect(arrival, source, rng)
    if not clicks.any():
        return False, None
    if clicks.all():
        return True, int(rng.integers(2))
    return True, int(clicks[1])


def outcome_table(
    encoding: Encoding, theta: float, noise: NoiseParams = NoiseParams(), alpha0: float = 0.0
) -> np.ndarray:
    """``table[alice_basis, alice_bit, bob_basis, detector]`` of exact Born probabilities."""
    table = np.empty((2, 2, 2, 2))
    for ab in Basis:
        for bit in (0, 1):
            rho = channel_transmit(alice_prepare(bit, ab, encoding, alpha0), theta, noise)
            for bb in Basis:
                table[ab, bit, bb] = bob_outcome_probabilities(rho, bb, encoding, alpha0)
    return table


def exact_error_probability(
    encoding: Encoding, theta: float, noise: NoiseParams = NoiseParams(), basis: Basis | None = None, alpha0: float = 0.0
) -> float:
    """Error probability of a matched-basis round with an ideal detector.

    With ``basis=None`` the two bases are averaged with equal weight.
    """
    table = outcome_table(encoding, theta, noise, alpha0)
    bases = list(Basis) if basis is None else [Basis(basis)]
    errs = []
    for b in bases:
        for bit in (0, 1):
            p = table[b, bit, b]
            errs.append(p[1 - bit] / p.sum())
    return float(np.mean(errs))


# --------------------------------------------------------------------------
# session


def block_seed(seed: int, block: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(block,))


def _simulate_block(config: ProtocolConfig, table: np.ndarray, block: int, start: int, n: int) -> RoundBatch:
    rng = np.random.default_rng(block_seed(config.seed, block))
    src = config.source
    a_basis = (rng.random(n) >= config.basis_bias).astype(np.uint8)
    a_bit = rng.integers(0, 2, n, dtype=np.uint8)
    b_basis = (rng.random(n) >= config.basis_bias).astype(np.uint8)
    photons = sample_photon_numbers(src, n, rng)
    probs = table[a_basis, a_bit, b_basis]
    hit0 = np.zeros(n, dtype=bool)
    hit1 = np.zeros(n, dtype=bool)
    for k in range(2):
        present = photons > k
        u = rng.random(n)
        seen = rng.random(n) < src.eta_det
        to0 = u < probs[:, 0]
        to1 = ~to0 & (u < probs[:, 0] + probs[:, 1])
        hit0 |= present & seen & to0
        hit1 |= present & seen & to1
    click0 = hit0 | (rng.random(n) < src.p_dark)
    click1 = hit1 | (rng.random(n) < src.p_dark)
    tie = rng.integers(0, 2, n, dtype=np.int8)
    detected = click0 | click1
    bob_bit = np.where(click0 & click1, tie, click1.astype(np.int8))
    bob_bit[~detected] = -1
    return RoundBatch(
        round_index=np.arange(start, start + n, dtype=np.int64),
        alice_basis=a_basis,
        alice_bit=a_bit,
        bob_basis=b_basis,
        detected=detected,
        bob_bit=bob_bit.astype(np.int8),
        multiphoton=photons >= 2,
    )


def simulate_rounds(config: ProtocolConfig, workers: int = 1) -> RoundBatch:
    """Vectorized session; equivalent to :func:`run_session` in columnar form."""
    table = outcome_table(config.encoding, config.theta, config.noise, config.alpha0)
    starts = range(0, config.n_rounds, BLOCK_SIZE)
    jobs = [(b, s, min(BLOCK_SIZE, config.n_rounds - s)) for b, s in enumerate(starts)]
    if workers <= 1:
        parts = [_simulate_block(config, table, *job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _simulate_block(config, table, *job), jobs))
    return RoundBatch.concatenate(parts)


def run_session(config: ProtocolConfig, workers: int = 1) -> list[RoundRecord]:
    return simulate_rounds(config, workers).records()


def sift(records: RoundBatch | Sequence[RoundRecord], discard_multiphoton: bool = False) -> SiftedKey:
    """Keep detected rounds where Alice and Bob used the same basis."""
    batch = records if isinstance(records, RoundBatch) else RoundBatch.from_records(list(records))
    if len(batch) == 0:
        return SiftedKey.from_bits([], [], [])
    keep = batch.detected & (batch.alice_basis == batch.bob_basis)
    if discard_multiphoton:
        keep &= ~batch.multiphoton
    return SiftedKey(
        batch.alice_bit[keep].astype(np.uint8),
        batch.bob_bit[keep].astype(np.uint8),
        batch.round_index[keep],
    )


def qber_report(sample_size: int, error_count: int) -> QberReport:
    q = error_count / sample_size
    return QberReport(sample_size, error_count, q, math.sqrt(q * (1 - q) / sample_size))


def estimate_qber(key: SiftedKey, fraction: float, rng: np.random.Generator) -> tuple[QberReport, SiftedKey]:
    """Disclose a random ``ceil(fraction * len)`` subset, report its QBER and drop it."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    n = len(key)
    if n == 0:
        raise ValueError("cannot estimate QBER from an empty key")
    k = min(n, math.ceil(fraction * n))
    sample = np.sort(rng.choice(n, size=k, replace=False))
    errors = int(np.count_nonzero(key.alice_bits[sample] != key.bob_bits[sample]))
    keep = np.ones(n, dtype=bool)
    keep[sample] = False
    remaining = SiftedKey(key.alice_bits[keep], key.bob_bits[keep], key.round_indices[keep])
    return qber_report(k, errors), remaining


@dataclass(frozen=True)
class ChannelTranscript:
    frames: tuple[bytes, ...]

    @property
    def n_bytes(self) -> int:
        return sum(len(f) for f in self.frames)


def sift_over_channel(
    batch: RoundBatch, fraction: float, rng: np.random.Generator, discard_multiphoton: bool = False
) -> tuple[SiftedKey, QberReport, SiftedKey, ChannelTranscript]:
    """Sifting and QBER estimation with every public message sent through the codec.

    Bob announces his detection mask and bases, Alice announces hers, Bob
    picks the sample positions and both disclose their sample bits; Alice
    answers with the QBER report. Each side only uses what it decoded.
    """
    frames = []

    def send(msg):
        frame = wire.encode(msg)
        frames.append(frame)
        return wire.decode(frame)

    mask = np.array(send(wire.DetectedMask(batch.detected.astype(int))).detected, dtype=bool)
    bob_bases = np.array(send(wire.BasisAnnounce(batch.bob_basis)).bases, dtype=np.uint8)
    alice_bases = np.array(send(wire.BasisAnnounce(batch.alice_basis)).bases, dtype=np.uint8)
    keep = mask & (alice_bases == bob_bases)
    if discard_multiphoton:
        keep &= ~batch.multiphoton
    key = SiftedKey(batch.alice_bit[keep], batch.bob_bit[keep].astype(np.uint8), batch.round_index[keep])
    if len(key) == 0:
        raise ValueError("no sifted bits to estimate the QBER from")
    k = min(len(key), math.ceil(fraction * len(key)))
    sample = np.array(send(wire.SampleIndices(np.sort(rng.choice(len(key), k, replace=False)))).indices)
    bob_sample = np.array(send(wire.SampleBits(key.bob_bits[sample])).bits)
    errors = int(np.count_nonzero(key.alice_bits[sample] != bob_sample))
    report = qber_report(k, errors)
    sent = send(wire.QberReportMessage(report.qber, report.sample_size, report.error_count))
    report = qber_report(sent.sample_size, sent.error_count)
    rest = np.ones(len(key), dtype=bool)
    rest[sample] = False
    remaining = SiftedKey(key.alice_bits[rest], key.bob_bits[rest], key.round_indices[rest])
    return key, report, remaining, ChannelTranscript(tuple(frames))


# --------------------------------------------------------------------------
# key-rate arithmetic


def theoretical_qber(theta: float) -> float:
    """Polarization-only QBER under a frame misalignment ``theta`` (radians)."""
    return 0.5 * math.sin(theta) ** 2


def qber_from_fidelities(fidelities: Sequence[float]) -> float:
    """Mean infidelity of the four prepared states."""
    f = list(fidelities)
    if len(f) != 4:
        raise ValueError(f"need exactly 4 fidelities, got {len(f)}")
    if any(not -1e-9 <= x <= 1 + 1e-9 for x in f):
        raise ValueError("fidelities must lie in [0, 1]")
    return 0.25 * sum(1.0 - x for x in f)


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def secret_key_fraction(qber: float) -> float:
    """Asymptotic BB84 key fraction ``max(0, 1 - 2 h2(qber))``."""
    if not 0.0 <= qber <= 0.5:
        raise ValueError(f"qber must lie in [0, 0.5], got {qber}")
    return max(0.0, 1.0 - 2.0 * binary_entropy(qber))


def calibrate_depolarizing(target_qber: float) -> float:
    """Depolarizing probability giving ``target_qber``: matched-basis error is p/2."""
    p = 2.0 * target_qber
    if not 0.0 <= p <= 1.0:
        raise ValueError("target QBER must lie in [0, 0.5]")
    return p
