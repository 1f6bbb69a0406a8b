"""Separation quality: permutation consistency, SI-SDR improvement, dominance maps."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

SDR_CEILING_DB = 200.0
MAX_PERM_SOURCES = 8

REPORT_FIELDS = (
    "method",
    "theta_w",
    "theta_delta",
    "mode",
    "seed",
    "inner_iters",
    "total_iters",
    "delta_sdr_mean_db",
    "pc",
    "wall_time_s",
)

__all__ = [
    "REPORT_FIELDS",
    "SDR_CEILING_DB",
    "EvalReport",
    "permutations",
    "permutation_consistency",
    "si_sdr",
    "delta_sdr",
    "dominance_map",
]


def permutations(n):
    """All permutations of ``range(n)`` in lexicographic order."""
    if n > MAX_PERM_SOURCES:
        raise ValueError(f"permutation enumeration is limited to N <= {MAX_PERM_SOURCES}, got {n}")
    return list(itertools.permutations(range(n)))


def permutation_consistency(S, Y):
    """Energy-weighted share of bins whose best local permutation is the best global one.

    For every bin the permutation ``q_f`` maximizing
    ``sum_n sum_t |s_ftn| |y_ft sigma(n)|`` is found; PC is the largest
    fraction of source energy carried by bins that agree on one permutation.

    Parameters
    ----------
    S, Y : ndarray (F, T, N)
        Reference and separated spectrograms.

    Returns
    -------
    pc : float
    per_freq_perm : ndarray of int (F,)
        Index of ``q_f`` into :func:`permutations`.
    best_global_perm : int
        Ties go to the lowest index, both per bin and globally.
    """
    S = np.asarray(S)
    Y = np.asarray(Y)
    if S.shape != Y.shape or S.ndim != 3:
        raise ValueError(f"S and Y must share shape (F, T, N), got {S.shape} and {Y.shape}")
    n_src = S.shape[2]
    perms = np.array(permutations(n_src))

    energy = (np.abs(S) ** 2).sum(axis=(1, 2))
    total = energy.sum()
    if not total > 0:
        raise ValueError("reference spectrogram has zero energy")

    # corr[f, n, k] = sum_t |s_ftn| |y_ftk|
    corr = np.einsum("ftn,ftk->fnk", np.abs(S), np.abs(Y))
    score = corr[:, np.arange(n_src)[None, :], perms].sum(axis=2)  # (F, n_perm)
    q = np.argmax(score, axis=1)

    agree = np.array([energy[q == p].sum() for p in range(len(perms))])
    best = int(np.argmax(agree))
    return float(agree[best] / total), q, best


def si_sdr(estimate, reference):
    """Scale-invariant SDR in dB, capped at :data:`SDR_CEILING_DB`."""
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    ref_energy = ref @ ref
    if not ref_energy > 0:
        raise ValueError("silent reference signal")
    target = (est @ ref) / ref_energy * ref
    target_energy = target @ target
    resid = est - target
    resid_energy = resid @ resid
    if target_energy == 0:
        return -SDR_CEILING_DB
    if resid_energy <= target_energy * 10.0 ** (-SDR_CEILING_DB / 10.0):
        return SDR_CEILING_DB
    return float(10.0 * np.log10(target_energy / resid_energy))


def delta_sdr(sources, estimates, observed_ref):
    """Per-source SI-SDR improvement over the unprocessed reference channel.

    Estimates are paired with references by the permutation maximizing the
    summed SI-SDR.

    Parameters
    ----------
    sources, estimates : ndarray (N, L)
    observed_ref : ndarray (L,)

    Returns
    -------
    improvement : ndarray (N,)
        In reference order.
    perm : tuple
        ``perm[n]`` is the estimate assigned to reference ``n``.
    """
    src = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    est = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    obs = np.asarray(observed_ref, dtype=np.float64)
    if src.shape != est.shape or obs.shape != src.shape[1:]:
        raise ValueError(f"length mismatch: sources {src.shape}, estimates {est.shape}, observed {obs.shape}")
    n_src = src.shape[0]
    table = np.array([[si_sdr(est[k], src[n]) for k in range(n_src)] for n in range(n_src)])
    best_perm, best_total = None, -math.inf
    for perm in permutations(n_src):
        total = sum(table[n, perm[n]] for n in range(n_src))
        if total > best_total:
            best_perm, best_total = perm, total
    baseline = np.array([si_sdr(obs, src[n]) for n in range(n_src)])
    improvement = np.array([table[n, best_perm[n]] for n in range(n_src)]) - baseline
    return improvement, best_perm


def dominance_map(S):
    """Index of the most energetic source per bin, and a mask of all-zero bins.

    Ties go to the lower index, so silent bins map to source 0 and are
    flagged in the mask.
    """
    S = np.asarray(S)
    if S.ndim != 3 or S.shape[2] < 2:
        raise ValueError("dominance map needs a (F, T, N) spectrogram with N >= 2")
    energy = (np.abs(S) ** 2).sum(axis=1)
    return np.argmax(energy, axis=1), ~np.any(energy > 0, axis=1)


@dataclass
class EvalReport:
    delta_sdr_db: np.ndarray
    pc: float
    best_global_perm: int
    per_freq_perm: np.ndarray

    @property
    def delta_sdr_mean_db(self):
        return float(np.mean(self.delta_sdr_db))
