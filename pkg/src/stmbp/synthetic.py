"""Synthetic ROI-level datasets with a known pulse -> blood pressure law.

Every sample is a pulse ``sin(theta) + h*sin(2*theta)`` at frequency ``f``
and amplitude ``a``, delayed per ROI by a fraction of a transit offset
``tau``, riding on a skin-tone baseline plus Gaussian noise. Labels follow

    bp = c0 + c1*f + c2*ln(a) + c3*tau

with separate coefficients for SBP and DBP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import BpRecord, Manifest, ManifestEntry, check_bp, write_manifest
from .errors import ConfigError, DataError
from .stm import IstmTensor, build_stm, write_stm

ROI_LAG = np.array([0.0, 0.5, 0.5, 1.0])  # x tau, seconds
ROI_GAIN = np.array([1.0, 0.8, 0.8, 0.6])
CHANNEL_GAIN = np.array([0.35, 1.0, 0.25])  # RGB, green carries most pulse energy
SKIN_RGB = np.array([185.0, 135.0, 115.0])


@dataclass
class SynthSpec:
    n_samples: int = 100
    T: int = 450
    fps: float = 30.0
    freq_range: tuple[float, float] = (0.8, 2.5)  # Hz
    amp_range: tuple[float, float] = (0.5, 3.0)  # intensity units
    lag_range: tuple[float, float] = (0.0, 0.1)  # seconds
    noise_sd: float = 0.3
    harmonic: float = 0.3
    sbp_law: tuple[float, float, float, float] = (76.5, 30.0, 8.0, -50.0)
    dbp_law: tuple[float, float, float, float] = (53.3, 16.5, 5.0, -30.0)
    # relative weights of equal-width frequency bins; empty means uniform
    freq_weights: tuple[float, ...] = ()
    seed: int = 0
    id_prefix: str = "syn"

    def __post_init__(self):
        if self.n_samples < 1 or self.T < 1 or not self.fps > 0:
            raise ConfigError("n_samples, T and fps must be positive")
        for name in ("freq_range", "amp_range", "lag_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigError(f"{name} is inverted: {(lo, hi)}")
        if self.freq_range[0] <= 0 or self.amp_range[0] <= 0:
            raise ConfigError("frequency and amplitude ranges must be positive")
        if self.lag_range[0] < 0:
            raise ConfigError("lag_range must be non-negative")
        if not 0 <= self.harmonic < 0.5:
            raise ConfigError("harmonic must be in [0, 0.5) so the pulse keeps two zero crossings per beat")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")
        if self.freq_weights and (min(self.freq_weights) < 0 or sum(self.freq_weights) <= 0):
            raise ConfigError("freq_weights must be non-negative with a positive sum")

    def bp(self, f, a, tau) -> tuple[np.ndarray, np.ndarray]:
        feats = np.stack([np.ones_like(f), f, np.log(a), tau], axis=-1)
        return feats @ np.asarray(self.sbp_law), feats @ np.asarray(self.dbp_law)


@dataclass
class SynthDataset:
    spec: SynthSpec
    istms: list[IstmTensor]
    records: list[BpRecord]
    # per-sample latent (frequency Hz, amplitude, transit offset s, phase rad)
    latents: np.ndarray = field(repr=False)


def pulse(theta: np.ndarray, harmonic: float) -> np.ndarray:
    return np.sin(theta) + harmonic * np.sin(2.0 * theta)


def _sample_frequencies(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.freq_range
    if not spec.freq_weights:
        return rng.uniform(lo, hi, spec.n_samples)
    w = np.asarray(spec.freq_weights, dtype=np.float64)
    edges = np.linspace(lo, hi, len(w) + 1)
    bins = rng.choice(len(w), size=spec.n_samples, p=w / w.sum())
    return rng.uniform(edges[bins], edges[bins + 1])


def render_istm(spec: SynthSpec, f: float, a: float, tau: float, phase: float, base: np.ndarray,
                noise: np.ndarray | None = None) -> np.ndarray:
    t = np.arange(spec.T) / spec.fps
    theta = 2 * np.pi * f * (t[None, :] - tau * ROI_LAG[:, None]) + phase
    wave = pulse(theta, spec.harmonic)  # (n_roi, T)
    values = base[:, None, :] + a * ROI_GAIN[:, None, None] * CHANNEL_GAIN[None, None, :] * wave[:, :, None]
    if noise is not None:
        values = values + noise
    return np.clip(values, 0.0, 255.0)


def generate(spec: SynthSpec) -> SynthDataset:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    f = _sample_frequencies(spec, rng)
    a = np.exp(rng.uniform(np.log(spec.amp_range[0]), np.log(spec.amp_range[1]), n))
    tau = rng.uniform(*spec.lag_range, n)
    phase = rng.uniform(0, 2 * np.pi, n)
    sbp, dbp = spec.bp(f, a, tau)
    istms, records = [], []
    width = len(str(n - 1))
    for i in range(n):
        base = SKIN_RGB + rng.uniform(-10, 10, 3) + rng.uniform(-5, 5, (len(ROI_GAIN), 3))
        noise = rng.normal(0.0, spec.noise_sd, (len(ROI_GAIN), spec.T, 3)) if spec.noise_sd > 0 else None
        istms.append(IstmTensor(render_istm(spec, f[i], a[i], tau[i], phase[i], base, noise)))
        sid = f"{spec.id_prefix}{i:0{width}d}"
        try:
            check_bp(float(sbp[i]), float(dbp[i]))
        except DataError as exc:
            raise ConfigError(f"bp law produced an invalid label for {sid}: {exc}") from None
        records.append(BpRecord(sid, float(sbp[i]), float(dbp[i])))
    return SynthDataset(spec, istms, records, np.stack([f, a, tau, phase], axis=1))


def write_dataset(ds: SynthDataset, out_dir, header: str | None = None) -> Manifest:
    """Write one normalized ``.stm`` per sample plus ``manifest.tsv``."""
    out = Path(out_dir)
    (out / "stm").mkdir(parents=True, exist_ok=True)
    entries = []
    for istm, rec in zip(ds.istms, ds.records):
        p = out / "stm" / f"{rec.sample_id}.stm"
        write_stm(build_stm(istm), p)
        entries.append(ManifestEntry(rec.sample_id, p, None, rec.sbp, rec.dbp))
    manifest = Manifest(entries)
    write_manifest(manifest, out / "manifest.tsv", header)
    return manifest
