"""WAV read/write for 16-bit PCM and 32-bit float, mono or multichannel."""
from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

__all__ = ["read_wav", "write_wav", "read_wavs"]

_INT16_SCALE = 32768.0


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file as float64 of shape ``(n_channels, n_samples)``.

    16-bit PCM is scaled to [-1, 1); float files are returned unscaled.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / _INT16_SCALE
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    if data.ndim == 1:
        data = data[:, None]
    return np.ascontiguousarray(data.T), int(rate)


def read_wavs(paths) -> tuple[np.ndarray, int]:
    """Read and stack several WAV files channel-wise; rates and lengths must agree."""
    chans, rates = [], set()
    for p in paths:
        x, fs = read_wav(p)
        chans.append(x)
        rates.add(fs)
    if len(rates) != 1:
        raise ValueError(f"sample rate mismatch across files: {sorted(rates)}")
    lengths = {c.shape[1] for c in chans}
    if len(lengths) != 1:
        raise ValueError(f"length mismatch across files: {sorted(lengths)}")
    return np.concatenate(chans, axis=0), rates.pop()


def write_wav(path, signal, sample_rate: int, fmt: str = "float32") -> None:
    """Write ``signal`` (``(n_channels, n_samples)`` or 1-D) to ``path``.

    ``fmt`` is ``"float32"`` or ``"int16"``; int16 output is clipped.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if fmt == "float32":
        data = x.T.astype(np.float32)
    elif fmt == "int16":
        data = np.clip(np.round(x.T * _INT16_SCALE), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    wavfile.write(path, int(sample_rate), np.ascontiguousarray(data))
