import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rotqkd.optics import NoiseParams
from rotqkd.protocol import (
    Basis,
    Encoding,
    ProtocolConfig,
    RoundBatch,
    RoundRecord,
    SiftedKey,
    alice_prepare,
    binary_entropy,
    bob_measure,
    calibrate_depolarizing,
    channel_transmit,
    estimate_qber,
    exact_error_probability,
    qber_from_fidelities,
    qber_report,
    run_session,
    secret_key_fraction,
    sift,
    sift_over_channel,
    simulate_rounds,
    theoretical_qber,
)
from rotqkd.source import SourceParams
from rotqkd.spinorbit import DensityMatrix, SpinOrbitState, inner_product

CANONICAL_ANGLES = np.radians([0, 12.5, 25, 50, 75, 90])
HYB = Encoding.HYBRID
POL = Encoding.POLARIZATION_ONLY
IDEAL = SourceParams.ideal()


class TestPrepare:
    def test_hybrid_y0_is_logical_zero(self):
        psi = alice_prepare(0, Basis.Y, HYB)
        assert abs(inner_product(SpinOrbitState.basis("L", -1), psi)) == pytest.approx(1)

    def test_polarization_z0_is_h(self):
        assert alice_prepare(0, Basis.Z, POL).allclose(SpinOrbitState.polarization("H"))

    def test_hybrid_z0_equal_weights(self):
        psi = alice_prepare(0, Basis.Z, HYB)
        assert abs(psi.amplitude("L", -1)) ** 2 == pytest.approx(0.5)
        assert abs(psi.amplitude("R", 1)) ** 2 == pytest.approx(0.5)

    @pytest.mark.parametrize("enc", [POL, HYB])
    def test_bases_mutually_unbiased(self, enc):
        for a in (0, 1):
            for b in (0, 1):
                ov = inner_product(alice_prepare(a, Basis.Z, enc), alice_prepare(b, Basis.Y, enc))
                assert abs(ov) ** 2 == pytest.approx(0.5)
            ov = inner_product(alice_prepare(0, Basis.Z, enc), alice_prepare(1, Basis.Z, enc))
            assert abs(ov) == pytest.approx(0, abs=1e-15)


class TestChannel:
    def test_identity_at_zero(self):
        psi = alice_prepare(1, Basis.Y, POL)
        np.testing.assert_allclose(channel_transmit(psi, 0.0).matrix, DensityMatrix.pure(psi).matrix)

    def test_hybrid_state_unchanged_by_rotation(self):
        psi = alice_prepare(0, Basis.Y, HYB)
        ref = channel_transmit(psi, 0.0).matrix
        for theta in np.linspace(0, 2 * np.pi, 25):
            np.testing.assert_allclose(channel_transmit(psi, theta).matrix, ref, atol=1e-15)

    def test_h_goes_to_v(self):
        out = channel_transmit(SpinOrbitState.polarization("H"), np.pi / 2)
        np.testing.assert_allclose(out.matrix, DensityMatrix.pure(SpinOrbitState.polarization("V")).matrix, atol=1e-10)

    def test_noise_keeps_trace(self):
        out = channel_transmit(alice_prepare(0, Basis.Z, HYB), 0.3, NoiseParams(0.2))
        assert np.trace(out.matrix).real == pytest.approx(1)


class TestBobMeasure:
    def test_matched_bases_noiseless(self, rng):
        for basis in Basis:
            for bit in (0, 1):
                rho = channel_transmit(alice_prepare(bit, basis, HYB), 0.0)
                for _ in range(50):
                    assert bob_measure(rho, basis, HYB, IDEAL, rng) == (True, bit)

    def test_mismatched_bases_uniform(self, rng):
        rho = channel_transmit(alice_prepare(0, Basis.Z, POL), 0.0)
        n = 20_000
        bits = [bob_measure(rho, Basis.Y, POL, IDEAL, rng)[1] for _ in range(n)]
        assert abs(np.mean(bits) - 0.5) < 3 * math.sqrt(0.25 / n)

    def test_hybrid_at_50_degrees_no_errors(self, rng):
        rho = channel_transmit(alice_prepare(1, Basis.Z, HYB), np.radians(50))
        assert all(bob_measure(rho, Basis.Z, HYB, IDEAL, rng) == (True, 1) for _ in range(2000))

    def test_lost_photon_without_efficiency(self, rng):
        rho = channel_transmit(alice_prepare(0, Basis.Z, POL), 0.0)
        blind = SourceParams(eta_det=0.0, dark_rate=0.0)
        assert bob_measure(rho, Basis.Z, POL, blind, rng) == (False, None)


class TestExactErrors:
    def test_hybrid_flat(self):
        for theta in CANONICAL_ANGLES:
            assert exact_error_probability(HYB, theta) < 1e-10

    def test_polarization_law_on_grid(self):
        for deg in range(0, 181):
            theta = math.radians(deg)
            assert exact_error_probability(POL, theta) == pytest.approx(0.5 * math.sin(theta) ** 2, abs=1e-10)
            assert exact_error_probability(POL, theta, basis=Basis.Z) == pytest.approx(math.sin(theta) ** 2, abs=1e-10)
            assert exact_error_probability(POL, theta, basis=Basis.Y) == pytest.approx(0, abs=1e-10)

    @given(st.floats(0, 1), st.floats(-4, 4))
    def test_depolarized_error_is_half_p(self, p, theta):
        assert exact_error_probability(HYB, theta, NoiseParams(p)) == pytest.approx(p / 2, abs=1e-10)

    def test_calibration_inverts(self):
        p = calibrate_depolarizing(0.0404)
        assert p == pytest.approx(0.0808)
        assert exact_error_probability(HYB, 0.4, NoiseParams(p)) == pytest.approx(0.0404, abs=1e-12)


class TestSession:
    def test_rejects_zero_rounds(self):
        with pytest.raises(ValueError):
            ProtocolConfig(n_rounds=0)

    def test_single_round(self):
        records = run_session(ProtocolConfig(n_rounds=1))
        assert len(records) == 1 and records[0].round_index == 0

    def test_detected_fraction(self):
        src = SourceParams(dark_rate=0.0)
        batch = simulate_rounds(ProtocolConfig(n_rounds=1_000_000, source=src, seed=5))
        expected = src.mean_photon_mu * src.eta_det
        sigma = math.sqrt(expected * (1 - expected) / len(batch))
        assert abs(batch.detected.mean() - expected) < 3 * sigma

    def test_undetected_rounds_have_no_bit(self):
        records = run_session(ProtocolConfig(n_rounds=3000, seed=2))
        assert any(not r.detected for r in records)
        assert all((r.bob_bit is None) == (not r.detected) for r in records)

    def test_deterministic(self):
        cfg = ProtocolConfig(n_rounds=200_000, source=SourceParams.ideal(), theta=0.3, encoding=POL, seed=99)
        a = run_session(cfg)
        assert a == run_session(cfg)

    def test_worker_invariant(self):
        cfg = ProtocolConfig(n_rounds=300_000, source=SourceParams.ideal(), noise=NoiseParams(0.1), seed=4)
        a, b = simulate_rounds(cfg, workers=1), simulate_rounds(cfg, workers=4)
        for name in RoundBatch.__dataclass_fields__:
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_different_seeds_differ(self):
        a = simulate_rounds(ProtocolConfig(n_rounds=1000, seed=1))
        b = simulate_rounds(ProtocolConfig(n_rounds=1000, seed=2))
        assert not np.array_equal(a.alice_bit, b.alice_bit)

    def test_record_batch_round_trip(self):
        batch = simulate_rounds(ProtocolConfig(n_rounds=500, seed=3))
        again = RoundBatch.from_records(batch.records())
        for name in RoundBatch.__dataclass_fields__:
            np.testing.assert_array_equal(getattr(batch, name), getattr(again, name))

    def test_record_invariant(self):
        with pytest.raises(ValueError):
            RoundRecord(0, Basis.Z, 0, Basis.Z, True, None, False)


class TestSift:
    def test_full_retention(self):
        recs = [RoundRecord(i, Basis.Y, i % 2, Basis.Y, True, i % 2, False) for i in range(10)]
        key = sift(recs)
        assert len(key) == 10 and key.round_indices.tolist() == list(range(10))

    def test_empty(self):
        assert len(sift([])) == 0

    def test_half_retained(self):
        batch = simulate_rounds(ProtocolConfig(n_rounds=200_000, source=SourceParams.ideal(), seed=8))
        n_det = int(batch.detected.sum())
        kept = len(sift(batch))
        assert abs(kept / n_det - 0.5) < 3 * math.sqrt(0.25 / n_det)

    def test_multiphoton_discard(self):
        recs = [
            RoundRecord(0, Basis.Z, 0, Basis.Z, True, 0, True),
            RoundRecord(1, Basis.Z, 1, Basis.Z, True, 1, False),
        ]
        assert len(sift(recs)) == 2
        assert sift(recs, discard_multiphoton=True).round_indices.tolist() == [1]

    def test_key_invariants(self):
        with pytest.raises(ValueError):
            SiftedKey.from_bits([0, 1], [0, 1], [3, 3])
        with pytest.raises(ValueError):
            SiftedKey.from_bits([0, 1], [0], [0, 1])


class TestEstimateQber:
    def test_identical(self, rng):
        bits = rng.integers(0, 2, 1000)
        report, rest = estimate_qber(SiftedKey.from_bits(bits, bits), 0.1, rng)
        assert report.qber == 0 and report.sample_size == 100 and len(rest) == 900

    def test_complementary(self, rng):
        bits = rng.integers(0, 2, 1000)
        report, _ = estimate_qber(SiftedKey.from_bits(bits, 1 - bits), 0.25, rng)
        assert report.qber == 1 and report.std_error == 0

    def test_full_fraction(self, rng):
        key = SiftedKey.from_bits([0, 1, 1], [0, 0, 1])
        report, rest = estimate_qber(key, 1.0, rng)
        assert len(rest) == 0 and report.sample_size == 3 and report.error_count == 1

    def test_removed_positions(self, rng):
        key = SiftedKey.from_bits(np.zeros(50), np.zeros(50))
        _, rest = estimate_qber(key, 0.3, rng)
        assert len(rest) == 35
        assert np.all(np.diff(rest.round_indices) > 0)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            estimate_qber(SiftedKey.from_bits([], []), 0.1, rng)
        with pytest.raises(ValueError):
            estimate_qber(SiftedKey.from_bits([0], [0]), 0.0, rng)

    def test_std_error(self):
        r = qber_report(400, 40)
        assert r.std_error == pytest.approx(math.sqrt(0.1 * 0.9 / 400))


class TestKeyRate:
    def test_theoretical_qber(self):
        assert theoretical_qber(0) == 0
        assert theoretical_qber(math.pi / 2) == pytest.approx(0.5)
        assert theoretical_qber(math.radians(25)) == pytest.approx(0.0893030975783652, abs=1e-15)

    def test_qber_from_fidelities(self):
        assert qber_from_fidelities([1, 1, 1, 1]) == 0
        assert qber_from_fidelities([0.9596] * 4) == pytest.approx(0.0404)
        assert qber_from_fidelities([1, 1, 1, 0]) == 0.25
        with pytest.raises(ValueError):
            qber_from_fidelities([1, 1, 1])
        with pytest.raises(ValueError):
            qber_from_fidelities([1, 1, 1, 1.5])

    def test_binary_entropy(self):
        assert binary_entropy(0.5) == 1
        assert binary_entropy(0) == 0
        assert binary_entropy(0.11) == pytest.approx(0.4999159, abs=1e-7)

    def test_secret_key_fraction(self):
        assert secret_key_fraction(0) == 1
        assert secret_key_fraction(0.11) == pytest.approx(0, abs=1e-3)
        # 1 - 2 h2(0.0404) evaluated at 50 digits
        assert secret_key_fraction(0.0404) == pytest.approx(0.511753643957, abs=1e-11)
        assert secret_key_fraction(0.1100278644) == pytest.approx(0, abs=1e-9)
        assert secret_key_fraction(0.1101) == 0
        with pytest.raises(ValueError):
            secret_key_fraction(0.6)

    @given(st.floats(0, 0.1100), st.floats(0, 0.1100))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert secret_key_fraction(lo) >= secret_key_fraction(hi) > 0


class TestChannelSifting:
    def test_matches_local_sift(self):
        cfg = ProtocolConfig(n_rounds=50_000, source=SourceParams(mean_photon_mu=0.3), noise=NoiseParams(0.1), seed=6)
        batch = simulate_rounds(cfg)
        key, report, rest, transcript = sift_over_channel(batch, 0.2, np.random.default_rng(1))
        local = sift(batch)
        np.testing.assert_array_equal(key.round_indices, local.round_indices)
        np.testing.assert_array_equal(key.bob_bits, local.bob_bits)
        assert len(rest) + report.sample_size == len(key)
        assert len(transcript.frames) == 6
        assert transcript.n_bytes > 2 * 50_000 // 8
        local_report, _ = estimate_qber(local, 0.2, np.random.default_rng(1))
        assert local_report == report
