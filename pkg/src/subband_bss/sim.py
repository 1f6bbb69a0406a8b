"""Seeded synthetic convolutive mixtures.

Sources are harmonic stacks plus broadband noise under a smooth random
spectro-temporal envelope: the spectrum is split into a few regions whose
log-envelopes share a source-wide component (correlation
``band_coherence``) and differ locally, as in speech where neighbouring
frequencies co-modulate more strongly than distant ones.

Room filters are a unit direct path at a per-(mic, source) delay followed
by an exponentially decaying white tail.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from .wavio import write_wav

log = logging.getLogger(__name__)

MAX_COND = 1e6
MAX_RIR_ATTEMPTS = 16
MANIFEST_NAME = "manifest.json"

__all__ = [
    "SimScenario",
    "Simulation",
    "synth_sources",
    "synth_rir",
    "convolve_mix",
    "source_images",
    "mixing_condition",
    "simulate",
    "write_simulation",
    "load_manifest",
]


@dataclass(frozen=True)
class SimScenario:
    n_sources: int = 2
    n_mics: int = 2
    sample_rate: int = 16000
    duration: float = 10.0
    rir_len: int = 512
    direct_delay: tuple | None = None  # (n_mics, n_sources) taps; drawn from the seed if None
    decay_rate: float = 0.0135  # per tap; amplitude falls 60 dB over 512 taps
    tail_gain: float = 0.1
    band_coherence: float = 0.5
    n_env_bands: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_sources < 1 or self.n_mics < self.n_sources:
            raise ValueError(f"need 1 <= n_sources <= n_mics, got {self.n_sources}, {self.n_mics}")
        if self.rir_len < 1:
            raise ValueError("rir_len must be >= 1")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample_rate must be positive")
        if not 0.0 <= self.band_coherence <= 1.0:
            raise ValueError("band_coherence must lie in [0, 1]")
        if self.direct_delay is not None:
            d = np.asarray(self.direct_delay)
            if d.shape != (self.n_mics, self.n_sources):
                raise ValueError(f"direct_delay must be {self.n_mics}x{self.n_sources}, got {d.shape}")
            if d.min() < 0 or d.max() >= self.rir_len:
                raise ValueError("direct delays must lie in [0, rir_len)")
            object.__setattr__(self, "direct_delay", tuple(tuple(int(v) for v in row) for row in d))

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate))

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["direct_delay"] is not None:
            d["direct_delay"] = [list(row) for row in d["direct_delay"]]
        return d

    @classmethod
    def from_dict(cls, d):
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - fields
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        d = dict(d)
        if d.get("direct_delay") is not None:
            d["direct_delay"] = tuple(tuple(row) for row in d["direct_delay"])
        return cls(**d)


def _smooth_noise(rng, n_samples, fs, rate_hz):
    """Zero-mean, unit-variance-knot random curve interpolated at ``rate_hz`` knots."""
    n_knots = int(np.ceil(n_samples / fs * rate_hz)) + 4
    knots_t = (np.arange(n_knots) - 2) / rate_hz
    spline = CubicSpline(knots_t, rng.standard_normal(n_knots))
    return spline(np.arange(n_samples) / fs)


def _one_source(rng, scenario):
    fs, n = scenario.sample_rate, scenario.n_samples
    nyq = fs / 2.0

    # region edges, log-spaced from 400 Hz to Nyquist
    n_bands = scenario.n_env_bands
    edges = np.concatenate([[0.0], np.geomspace(400.0, nyq, n_bands)[:-1], [nyq + 1.0]])

    f0 = rng.uniform(90.0, 260.0)
    inst_f0 = f0 * (1.0 + 0.04 * _smooth_noise(rng, n, fs, 3.0))
    phase = 2.0 * np.pi * np.cumsum(inst_f0) / fs
    tilt = rng.uniform(0.6, 1.0)
    n_harm = int(0.9 * nyq / f0)
    harm = np.zeros((n_bands, n))
    for k in range(1, n_harm + 1):
        b = np.searchsorted(edges, k * f0, side="right") - 1
        harm[b] += k**-tilt * np.sin(k * phase + rng.uniform(0.0, 2.0 * np.pi))

    noise_spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    noise = np.zeros((n_bands, n))
    for b in range(n_bands):
        mask = (freqs >= edges[b]) & (freqs < edges[b + 1])
        noise[b] = np.fft.irfft(noise_spec * mask, n=n)
    noise *= 0.3 * np.sqrt(np.mean(harm**2)) / max(np.sqrt(np.mean(noise**2)), 1e-300)

    rho = scenario.band_coherence
    shared = _smooth_noise(rng, n, fs, 6.0)
    gate = 1.0 / (1.0 + np.exp(-4.0 * (_smooth_noise(rng, n, fs, 3.0) + 0.3)))
    out = np.zeros(n)
    for b in range(n_bands):
        local = _smooth_noise(rng, n, fs, 6.0)
        log_env = rho * shared + np.sqrt(1.0 - rho**2) * local
        out += gate * np.exp(1.2 * log_env) * (harm[b] + noise[b])
    return out / np.sqrt(np.mean(out**2))


def synth_sources(scenario):
    """Unit-RMS source signals, shape (n_sources, n_samples); deterministic per seed."""
    return np.stack(
        [_one_source(np.random.default_rng([scenario.seed, 0, k]), scenario) for k in range(scenario.n_sources)]
    )


def mixing_condition(rirs, n_fft=2048, skip_dc=False):
    """Condition number of the frequency-domain mixing matrix per rfft bin."""
    A = np.fft.rfft(rirs, n=max(n_fft, rirs.shape[2]), axis=2).transpose(2, 0, 1)
    if skip_dc:
        A = A[1:]
    return np.linalg.cond(A)


def _draw_rirs(rng, scenario):
    M, N, L = scenario.n_mics, scenario.n_sources, scenario.rir_len
    if scenario.direct_delay is not None:
        delays = np.array(scenario.direct_delay)
    else:
        base = rng.integers(16, 48, size=N)
        tdoa = rng.choice(9, size=N, replace=False) - 4 if N <= 9 else rng.integers(-4, 5, size=N)
        delays = base[None, :] + np.arange(M)[:, None] * tdoa[None, :]
        delays = np.clip(delays - min(delays.min(), 0), 0, L - 1)
    h = np.zeros((M, N, L))
    lag = np.arange(L)
    for m in range(M):
        for n in range(N):
            d = delays[m, n]
            h[m, n, d] = 1.0
            k = lag[d + 1 :] - d
            if scenario.tail_gain > 0 and np.isfinite(scenario.decay_rate) and len(k):
                h[m, n, d + 1 :] = scenario.tail_gain * np.exp(-scenario.decay_rate * k) * rng.standard_normal(len(k))
    return h


def synth_rir(scenario, n_fft=2048):
    """Room filters of shape (n_mics, n_sources, rir_len).

    Draws are repeated with a perturbed seed until the mixing matrix is
    well conditioned (``cond < 1e6``) at every bin of an ``n_fft`` rfft.
    Pure-delay filters (no tail) are always singular at DC, so DC is then
    left out of the check.
    """
    has_tail = scenario.tail_gain > 0 and np.isfinite(scenario.decay_rate) and scenario.rir_len > 1
    for attempt in range(MAX_RIR_ATTEMPTS):
        h = _draw_rirs(np.random.default_rng([scenario.seed, 1, attempt]), scenario)
        worst = mixing_condition(h, n_fft, skip_dc=not has_tail).max()
        if worst < MAX_COND:
            return h
        log.warning("seed %d attempt %d: mixing condition %.3g, regenerating", scenario.seed, attempt, worst)
    raise ValueError(f"could not draw well-conditioned room filters for seed {scenario.seed}")


def convolve_mix(sources, rirs):
    """Observed signals ``x_m = sum_n h_mn * s_n``, truncated to the source length."""
    s = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    h = np.asarray(rirs, dtype=np.float64)
    if h.ndim != 3 or h.shape[1] != s.shape[0]:
        raise ValueError(f"rirs {h.shape} do not match {s.shape[0]} sources")
    n = s.shape[1]
    x = np.zeros((h.shape[0], n))
    for m in range(h.shape[0]):
        for k in range(s.shape[0]):
            x[m] += fftconvolve(h[m, k], s[k])[:n]
    return x


def source_images(sources, rirs, mic=0):
    """Each source as heard alone at ``mic``, shape (n_sources, n_samples)."""
    s = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    n = s.shape[1]
    return np.stack([fftconvolve(rirs[mic, k], s[k])[:n] for k in range(s.shape[0])])


@dataclass
class Simulation:
    scenario: SimScenario
    sources: np.ndarray
    rirs: np.ndarray
    mixture: np.ndarray
    images: np.ndarray


def simulate(scenario, ref_mic=0):
    sources = synth_sources(scenario)
    rirs = synth_rir(scenario)
    return Simulation(
        scenario=scenario,
        sources=sources,
        rirs=rirs,
        mixture=convolve_mix(sources, rirs),
        images=source_images(sources, rirs, ref_mic),
    )


def write_simulation(sim, out_dir, ref_mic=0):
    """Write sources, reference-mic images, mixture channels, filters and a manifest.

    Returns the manifest dictionary.
    """
    os.makedirs(out_dir, exist_ok=True)
    fs = sim.scenario.sample_rate
    files = {"sources": [], "images": [], "mixture": []}
    for k, s in enumerate(sim.sources):
        name = f"source_{k}.wav"
        write_wav(os.path.join(out_dir, name), s, fs)
        files["sources"].append(name)
    for k, s in enumerate(sim.images):
        name = f"image_{k}.wav"
        write_wav(os.path.join(out_dir, name), s, fs)
        files["images"].append(name)
    for m, x in enumerate(sim.mixture):
        name = f"mix_{m}.wav"
        write_wav(os.path.join(out_dir, name), x, fs)
        files["mixture"].append(name)
    files["rirs"] = "rirs.wav"
    write_wav(os.path.join(out_dir, "rirs.wav"), sim.rirs.reshape(-1, sim.rirs.shape[2]), fs)

    manifest = {
        "scenario": sim.scenario.to_dict(),
        "ref_mic": ref_mic,
        "files": files,
        "rir_layout": "channel index = mic * n_sources + source",
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path):
    """Return ``(scenario, manifest)`` from a manifest file or its directory."""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path) as fh:
        manifest = json.load(fh)
    return SimScenario.from_dict(manifest["scenario"]), manifest
