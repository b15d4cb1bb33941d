"""Command-line front end.

Usage::

    python -m rotqkd {qber-sweep,tomography,keygen,hbt} [--config FILE]
        [--seed N] [--out PATH] [--threads N]

The config file is a JSON object with one optional section per command
(``qber_sweep``, ``tomography``, ``keygen``, ``hbt``). Every key has a
default, so ``{}`` runs the canonical scenario: the six platform angles,
the quantum-dot source figures and noise calibrated to a 4.04% QBER.
Angles are given in degrees.

Exit codes: 0 success, 1 config error, 2 runtime error, 3 insufficient
statistics.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .optics import NoiseParams
from .protocol import (
    SECURITY_THRESHOLD,
    Encoding,
    ProtocolConfig,
    calibrate_depolarizing,
    estimate_qber,
    secret_key_fraction,
    sift,
    sift_over_channel,
    simulate_rounds,
    theoretical_qber,
)
from .source import InsufficientStatisticsError, SourceParams, hbt_simulate
from .tomography import (
    PREPARED_STATES,
    MleOptions,
    state_fidelity_report,
    target_ket,
    tomograph_prepared_state,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_STATISTICS = 0, 1, 2, 3

CANONICAL_ANGLES_DEG = (0.0, 12.5, 25.0, 50.0, 75.0, 90.0)
TARGET_QBER = 0.0404


class ConfigError(ValueError):
    pass


def _canonical_noise() -> dict:
    return {"depolarizing_p": calibrate_depolarizing(TARGET_QBER)}


@dataclass
class SweepConfig:
    theta_deg: list = field(default_factory=lambda: list(CANONICAL_ANGLES_DEG))
    encodings: list = field(default_factory=lambda: ["polarization", "hybrid"])
    n_rounds: int = 1_000_000
    source: dict = field(default_factory=dict)
    noise: dict = field(default_factory=_canonical_noise)
    basis_bias: float = 0.5
    sample_fraction: float = 1.0
    alpha0: float = 0.0
    discard_multiphoton: bool = False
    seed: int = 0


@dataclass
class TomographyConfig:
    theta_deg: list = field(default_factory=lambda: list(CANONICAL_ANGLES_DEG))
    encodings: list = field(default_factory=lambda: ["polarization", "hybrid"])
    states: list | None = None
    shots_per_setting: int = 100_000
    noise: dict = field(default_factory=_canonical_noise)
    mle: dict = field(default_factory=dict)
    seed: int = 0


@dataclass
class KeygenConfig:
    n_rounds: int = 1_000_000
    encoding: str = "hybrid"
    theta_deg: float = 0.0
    source: dict = field(default_factory=dict)
    noise: dict = field(default_factory=_canonical_noise)
    basis_bias: float = 0.5
    sample_fraction: float = 0.1
    alpha0: float = 0.0
    discard_multiphoton: bool = False
    seed: int = 0


@dataclass
class HbtConfig:
    n_pulses: int = 1_000_000_000
    source: dict = field(default_factory=dict)
    seed: int = 0


SECTIONS = {
    "qber-sweep": ("qber_sweep", SweepConfig),
    "tomography": ("tomography", TomographyConfig),
    "keygen": ("keygen", KeygenConfig),
    "hbt": ("hbt", HbtConfig),
}


def _strict(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _int(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _encoding(value, name: str) -> Encoding:
    try:
        return Encoding(value)
    except ValueError:
        raise ConfigError(f"{name} must be 'polarization' or 'hybrid', got {value!r}") from None


def _angles(values, name: str) -> list[float]:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{name} must be a non-empty list of angles in degrees")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) for v in values):
        raise ConfigError(f"{name} entries must be finite numbers")
    return [float(v) for v in values]


def load_config(path: str | os.PathLike | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {section for section, _ in SECTIONS.values()}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    return data


def _protocol_kwargs(cfg, where: str) -> dict:
    source = _strict(SourceParams, cfg.source, f"{where}.source")
    noise = _strict(NoiseParams, cfg.noise, f"{where}.noise")
    return dict(
        n_rounds=_int(cfg.n_rounds, f"{where}.n_rounds", 1),
        source=source,
        noise=noise,
        basis_bias=cfg.basis_bias,
        sample_fraction=cfg.sample_fraction,
        seed=_int(cfg.seed, f"{where}.seed"),
        alpha0=cfg.alpha0,
        discard_multiphoton=bool(cfg.discard_multiphoton),
    )


def _validated_protocol(kwargs: dict, where: str, **extra) -> ProtocolConfig:
    try:
        return ProtocolConfig(**kwargs, **extra)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _section(raw: dict, command: str, seed: int | None):
    key, cls = SECTIONS[command]
    cfg = _strict(cls, raw.get(key, {}), key)
    if seed is not None:
        cfg.seed = seed
    return cfg


# --------------------------------------------------------------------------
# commands; each returns {suffix: text} without touching the filesystem


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_qber_sweep(raw: dict, seed: int | None = None, threads: int = 1) -> dict[str, str]:
    """QBER versus platform angle for each encoding; one CSV row per (angle, encoding)."""
    cfg = _section(raw, "qber-sweep", seed)
    angles = _angles(cfg.theta_deg, "qber_sweep.theta_deg")
    encodings = [_encoding(e, "qber_sweep.encodings") for e in cfg.encodings]
    kwargs = _protocol_kwargs(cfg, "qber_sweep")
    points = [(deg, enc) for deg in angles for enc in encodings]
    # Independent session seed per sweep point, derived from the base seed.
    seeds = [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(kwargs["seed"]).spawn(len(points))]
    configs = [
        (deg, enc, _validated_protocol({**kwargs, "seed": s}, "qber_sweep", encoding=enc, theta=math.radians(deg)))
        for (deg, enc), s in zip(points, seeds)
    ]
    rows = []
    for i, (deg, enc, pcfg) in enumerate(configs):
        key = sift(simulate_rounds(pcfg, workers=threads), pcfg.discard_multiphoton)
        if len(key) == 0:
            raise RuntimeError(f"no sifted bits at theta={deg} deg ({enc.value}); increase n_rounds")
        report, _ = estimate_qber(key, pcfg.sample_fraction, np.random.default_rng([pcfg.seed, i]))
        rows.append(
            [
                repr(deg),
                enc.value,
                repr(report.qber),
                repr(report.std_error),
                repr(theoretical_qber(math.radians(deg))),
                repr(secret_key_fraction(min(report.qber, 0.5))),
            ]
        )
    header = ["theta_deg", "encoding", "qber", "std_err", "theory_polarization", "key_fraction"]
    return {".csv": _csv_text(header, rows)}


def cmd_tomography(raw: dict, seed: int | None = None, threads: int = 1) -> dict[str, str]:
    """Reconstruct each prepared state at each angle; CSV fidelity table plus JSON matrices."""
    cfg = _section(raw, "tomography", seed)
    angles = _angles(cfg.theta_deg, "tomography.theta_deg")
    encodings = [_encoding(e, "tomography.encodings") for e in cfg.encodings]
    shots = _int(cfg.shots_per_setting, "tomography.shots_per_setting", 1)
    noise = _strict(NoiseParams, cfg.noise, "tomography.noise")
    mle = _strict(MleOptions, cfg.mle, "tomography.mle")
    base_seed = _int(cfg.seed, "tomography.seed")
    plan = []
    for enc in encodings:
        labels = list(PREPARED_STATES[enc]) if cfg.states is None else list(cfg.states)
        bad = [lab for lab in labels if lab not in PREPARED_STATES[enc]]
        if bad or not labels:
            raise ConfigError(f"tomography.states {bad or labels} invalid for encoding {enc.value}")
        plan.extend((enc, deg, lab) for deg in angles for lab in labels)

    rows, matrices, qbers = [], [], []
    results = {}
    for i, (enc, deg, lab) in enumerate(plan):
        rng = np.random.default_rng([base_seed, i])
        result, fid = tomograph_prepared_state(lab, enc, math.radians(deg), shots, rng, noise, mle)
        results[(enc, deg, lab)] = result
        rows.append([lab, repr(deg), enc.value, repr(fid)])
        m = result.rho.matrix
        matrices.append(
            {
                "state": lab,
                "theta_deg": deg,
                "encoding": enc.value,
                "real": m.real.ravel().tolist(),
                "imag": m.imag.ravel().tolist(),
                "log_likelihood": result.log_likelihood,
                "converged": result.converged,
            }
        )
    for enc in encodings:
        labels = list(PREPARED_STATES[enc])
        for deg in angles:
            if all((enc, deg, lab) in results for lab in labels):
                targets = [target_ket(*PREPARED_STATES[enc][lab]) for lab in labels]
                rep = state_fidelity_report([results[(enc, deg, lab)] for lab in labels], targets)
                qbers.append({"encoding": enc.value, "theta_deg": deg, "predicted_qber": rep.predicted_qber})
    header = ["state", "theta_deg", "encoding", "fidelity"]
    return {
        ".csv": _csv_text(header, rows),
        ".json": _json_text({"shots_per_setting": shots, "density_matrices": matrices, "predicted_qber": qbers}),
    }


def cmd_keygen(raw: dict, seed: int | None = None, threads: int = 1) -> dict[str, str]:
    """One BB84 session with sifting and QBER estimation over the framed classical channel."""
    cfg = _section(raw, "keygen", seed)
    if isinstance(cfg.theta_deg, bool) or not isinstance(cfg.theta_deg, (int, float)):
        raise ConfigError("keygen.theta_deg must be a number")
    pcfg = _validated_protocol(
        _protocol_kwargs(cfg, "keygen"),
        "keygen",
        encoding=_encoding(cfg.encoding, "keygen.encoding"),
        theta=math.radians(cfg.theta_deg),
    )
    batch = simulate_rounds(pcfg, workers=threads)
    key, report, remaining, transcript = sift_over_channel(
        batch, pcfg.sample_fraction, np.random.default_rng([pcfg.seed, 1]), pcfg.discard_multiphoton
    )
    fraction = secret_key_fraction(min(report.qber, 0.5))
    out = {
        "encoding": pcfg.encoding.value,
        "theta_deg": float(cfg.theta_deg),
        "depolarizing_p": pcfg.noise.depolarizing_p,
        "raw_rounds": len(batch),
        "detected": int(batch.detected.sum()),
        "multiphoton_rounds": int(batch.multiphoton.sum()),
        "sifted_length": len(key),
        "qber": {
            "sample_size": report.sample_size,
            "error_count": report.error_count,
            "qber": report.qber,
            "std_error": report.std_error,
        },
        "remaining_key_length": len(remaining),
        "secret_key_fraction": fraction,
        "secret_key_bits": int(math.floor(fraction * len(remaining))),
        "abort": bool(report.qber >= SECURITY_THRESHOLD),
        "classical_channel_bytes": transcript.n_bytes,
        "classical_channel_frames": len(transcript.frames),
    }
    return {".json": _json_text(out)}


def cmd_hbt(raw: dict, seed: int | None = None, threads: int = 1) -> dict[str, str]:
    """Hanbury-Brown-Twiss estimate of g2(0) for the configured source."""
    cfg = _section(raw, "hbt", seed)
    n = _int(cfg.n_pulses, "hbt.n_pulses", 2)
    source = _strict(SourceParams, cfg.source, "hbt.source")
    counts = hbt_simulate(n, source, np.random.default_rng(_int(cfg.seed, "hbt.seed")), workers=threads)
    out = {
        "n_pulses": counts.n_pulses,
        "g2_estimate": counts.g2,
        "g2_configured": source.g2,
        "clicks_a": counts.clicks_a,
        "clicks_b": counts.clicks_b,
        "zero_delay_coincidences": counts.zero_delay,
        "adjacent_coincidences": counts.adjacent,
    }
    return {".json": _json_text(out)}


COMMANDS = {"qber-sweep": cmd_qber_sweep, "tomography": cmd_tomography, "keygen": cmd_keygen, "hbt": cmd_hbt}


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_artifacts(artifacts: dict[str, str], out: str | None, stdout=None) -> list[Path]:
    """Write each artifact; the first goes to ``out``, others swap in their suffix.

    Without ``out`` a single artifact is printed to stdout.
    """
    stdout = stdout or sys.stdout
    if out is None or out == "-":
        if len(artifacts) > 1:
            raise ConfigError("this command writes several files; pass --out")
        stdout.write(next(iter(artifacts.values())))
        return []
    base = Path(out)
    paths = []
    for i, (suffix, text) in enumerate(artifacts.items()):
        path = base if i == 0 else base.with_suffix(suffix)
        if i > 0 and path == base:
            path = base.with_name(base.name + suffix)
        paths.append(path)
    for path, text in zip(paths, artifacts.values()):
        _atomic_write(path, text)
    return paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotqkd", description="Rotation-invariant BB84 simulator.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config file (default: canonical scenario)")
    parser.add_argument("--seed", type=int, help="overrides the config seed (unsigned 64-bit)")
    parser.add_argument("--out", help="output path; '-' or omitted prints to stdout")
    parser.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        raw = load_config(args.config)
        artifacts = COMMANDS[args.command](raw, args.seed, args.threads)
        for path in write_artifacts(artifacts, args.out):
            print(f"wrote {path}", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientStatisticsError as exc:
        print(f"insufficient statistics: {exc} (required pulses: {exc.required_pulses})", file=sys.stderr)
        return EXIT_STATISTICS
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error by contract
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
