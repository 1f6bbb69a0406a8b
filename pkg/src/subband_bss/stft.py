"""Multichannel STFT / inverse STFT with a periodic Hann window.

Spectrograms are complex arrays of shape ``(n_freq, n_frames, n_channels)``
and time signals are real arrays of shape ``(n_channels, n_samples)``.

Padding policy: ``window_len // 2`` zeros are prepended, and enough zeros
are appended (at least ``window_len // 2``) to complete the last frame.
With ``L`` input samples this gives ``ceil(L / hop) + 1`` frames.
:func:`istft` undoes the padding and trims to ``target_len``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["StftConfig", "stft", "istft", "n_frames", "hann"]


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 2048
    hop: int = 1024
    window: str = "hann"

    def __post_init__(self):
        if self.window_len <= 0 or self.window_len % 2:
            raise ValueError(f"window_len must be a positive even integer, got {self.window_len}")
        if self.hop <= 0:
            raise ValueError(f"hop must be positive, got {self.hop}")
        if self.hop > self.window_len:
            raise ValueError(f"hop ({self.hop}) exceeds window_len ({self.window_len})")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_freq(self) -> int:
        return self.window_len // 2 + 1


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (sums to a constant at 50 % overlap)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def n_frames(n_samples: int, cfg: StftConfig) -> int:
    """Frame count produced by :func:`stft` for a signal of ``n_samples``."""
    return -(-n_samples // cfg.hop) + 1


def _as_channels(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError(f"expected (n_channels, n_samples) array, got shape {x.shape}")
    return x


def stft(signal, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Forward STFT.

    Parameters
    ----------
    signal : array_like, shape (n_channels, n_samples) or (n_samples,)
        Real time-domain signal. Pass a list of per-channel arrays to get a
        length check.
    cfg : StftConfig

    Returns
    -------
    ndarray, complex128, shape (window_len // 2 + 1, n_frames, n_channels)
    """
    if isinstance(signal, (list, tuple)) and len(signal) and np.ndim(signal[0]) == 1:
        lengths = {len(ch) for ch in signal}
        if len(lengths) > 1:
            raise ValueError(f"channel length mismatch: {sorted(lengths)}")
    x = _as_channels(signal)
    n_chan, n_samples = x.shape
    if n_chan == 0 or n_samples == 0:
        raise ValueError("empty signal")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")

    nw, hop = cfg.window_len, cfg.hop
    n_t = n_frames(n_samples, cfg)
    padded_len = (n_t - 1) * hop + nw
    front = nw // 2
    xp = np.zeros((n_chan, padded_len))
    xp[:, front : front + n_samples] = x

    frames = np.lib.stride_tricks.sliding_window_view(xp, nw, axis=1)[:, ::hop]
    spec = np.fft.rfft(frames * hann(nw), axis=-1)  # (C, T, F)
    return np.ascontiguousarray(spec.transpose(2, 1, 0))


def istft(spec, cfg: StftConfig = StftConfig(), target_len: int | None = None) -> np.ndarray:
    """Inverse STFT by weighted overlap-add.

    The synthesis window is the analysis window divided by the per-sample
    sum of squared shifted windows, which makes ``istft(stft(x)) == x``
    for any hop at which that sum stays positive over the signal support.

    Returns
    -------
    ndarray, float64, shape (n_channels, target_len)
    """
    Z = np.asarray(spec)
    if Z.ndim == 2:
        Z = Z[:, :, None]
    if Z.ndim != 3 or Z.shape[0] != cfg.n_freq:
        raise ValueError(
            f"spectrogram shape {Z.shape} incompatible with window_len={cfg.window_len}"
        )
    n_f, n_t, n_chan = Z.shape
    nw, hop = cfg.window_len, cfg.hop
    front = nw // 2
    if target_len is None:
        target_len = (n_t - 1) * hop
    if target_len < 0 or n_frames(target_len, cfg) > n_t:
        raise ValueError(f"target_len={target_len} needs more than the {n_t} available frames")

    win = hann(nw)
    frames = np.fft.irfft(Z.transpose(2, 1, 0), n=nw, axis=-1) * win  # (C, T, nw)
    padded_len = (n_t - 1) * hop + nw
    out = np.zeros((n_chan, padded_len))
    norm = np.zeros(padded_len)
    win_sq = win**2
    for t in range(n_t):
        sl = slice(t * hop, t * hop + nw)
        out[:, sl] += frames[:, t]
        norm[sl] += win_sq

    keep = slice(front, front + target_len)
    denom = norm[keep]
    if target_len and denom.min() <= 1e-10:
        raise ValueError(f"window/hop pair ({nw}, {hop}) is not invertible")
    return out[:, keep] / denom if target_len else out[:, keep]
