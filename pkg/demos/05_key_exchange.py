"""A full session: simulate, sift over the framed public channel, estimate QBER."""
import io
import math

import numpy as np

from rotqkd import wire
from rotqkd.optics import NoiseParams
from rotqkd.protocol import (
    Encoding,
    ProtocolConfig,
    calibrate_depolarizing,
    secret_key_fraction,
    sift_over_channel,
    simulate_rounds,
)

cfg = ProtocolConfig(
    n_rounds=4_000_000,
    encoding=Encoding.HYBRID,
    theta=math.radians(50),
    noise=NoiseParams(calibrate_depolarizing(0.0404)),
    seed=7,
)
batch = simulate_rounds(cfg, workers=2)
print(f"rounds {len(batch)}, detected {batch.detected.sum()}, multiphoton {batch.multiphoton.sum()}")

key, report, remaining, transcript = sift_over_channel(batch, cfg.sample_fraction, np.random.default_rng(1))
print(f"sifted {len(key)} bits; disclosed {report.sample_size}, errors {report.error_count}")
print(f"QBER = {report.qber:.4f} +/- {report.std_error:.4f}")
fraction = secret_key_fraction(report.qber)
print(f"key fraction {fraction:.3f} -> about {int(fraction * len(remaining))} secret bits")
print(f"public channel: {len(transcript.frames)} frames, {transcript.n_bytes} bytes")

# The same frames read back from a byte stream.
stream = io.BytesIO(b"".join(transcript.frames))
while (msg := wire.read_message(stream)) is not None:
    print(" ", type(msg).__name__)
