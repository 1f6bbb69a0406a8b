"""Subband splitting with constantly shifted, overlapping bands.

Bands are stored 1-based and inclusive, ``(lo, hi)`` meaning frequency bins
``lo .. hi``; :meth:`SubbandPlan.slices` gives the 0-based array slices.
Each band is separated in turn, starting from the demixing matrices (and
NMF activations) left behind by the previous band, so the permutation
chosen in one band is carried into the next through the overlap.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bss import NmfModel, demix, identity_demixing, run_bss

log = logging.getLogger(__name__)

MODES = ("tight", "loose")

__all__ = [
    "MODES",
    "SubbandPlan",
    "SubbandState",
    "SeparationResult",
    "make_subbands",
    "extract",
    "substitute",
    "subband_separate",
]


def _ceil_div(a, b):
    return -(-a // b)


@dataclass(frozen=True)
class SubbandPlan:
    bands: tuple
    unclipped: tuple
    n_freq: int
    theta_w: int
    theta_delta: int
    mode: str
    width: int
    shift: int

    def __post_init__(self):
        if not self.bands:
            raise ValueError("plan has no bands")
        for lo, hi in self.bands:
            if not 1 <= lo <= hi <= self.n_freq:
                raise ValueError(f"band ({lo}, {hi}) outside 1..{self.n_freq}")
        if np.any(self.coverage_counts() == 0):
            missing = np.flatnonzero(self.coverage_counts() == 0) + 1
            raise ValueError(f"bands do not cover bins {missing[:10].tolist()}")

    def __len__(self):
        return len(self.bands)

    def slices(self):
        return [slice(lo - 1, hi) for lo, hi in self.bands]

    def coverage_counts(self):
        """Number of bands containing each bin, shape (n_freq,)."""
        counts = np.zeros(self.n_freq, dtype=np.int64)
        for lo, hi in self.bands:
            counts[lo - 1 : hi] += 1
        return counts

    def to_dict(self):
        return {
            "n_freq": self.n_freq,
            "theta_w": self.theta_w,
            "theta_delta": self.theta_delta,
            "mode": self.mode,
            "width": self.width,
            "shift": self.shift,
            "bands": [list(b) for b in self.bands],
        }


def make_subbands(n_freq, theta_w, theta_delta, mode="loose"):
    """Enumerate bands of width ``ceil(F/theta_w)`` shifted by ``ceil(width/theta_delta)``.

    The first band is ``(1, width)`` for ``"tight"`` and
    ``(shift - width + 1, shift)`` for ``"loose"``. Bands are clipped to
    ``1..F`` and enumeration stops once the unclipped lower edge exceeds F.

    >>> make_subbands(8, 2, 2, "tight").bands
    ((1, 4), (3, 6), (5, 8), (7, 8))
    """
    if n_freq < 1:
        raise ValueError("n_freq must be >= 1")
    if theta_w < 1 or theta_delta < 1:
        raise ValueError("theta_w and theta_delta must be >= 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    width = _ceil_div(n_freq, theta_w)
    shift = _ceil_div(width, theta_delta)
    if mode == "tight":
        lo, hi = 1, width
    else:
        lo, hi = shift - width + 1, shift

    bands, unclipped = [], []
    while lo <= n_freq:
        band = (max(lo, 1), min(hi, n_freq))
        assert band[0] <= band[1], f"empty band from ({lo}, {hi})"
        bands.append(band)
        unclipped.append((lo, hi))
        lo += shift
        hi += shift
    return SubbandPlan(
        bands=tuple(bands),
        unclipped=tuple(unclipped),
        n_freq=n_freq,
        theta_w=theta_w,
        theta_delta=theta_delta,
        mode=mode,
        width=width,
        shift=shift,
    )


@dataclass
class SubbandState:
    """Copies of the variables restricted to one band.

    ``Y`` stays ``None`` until the band has been separated.
    """

    X: np.ndarray
    W: np.ndarray
    aux: NmfModel | None
    Y: np.ndarray | None = None


def _band_slice(band, n_freq):
    lo, hi = band
    if not 1 <= lo <= hi <= n_freq:
        raise ValueError(f"band ({lo}, {hi}) outside 1..{n_freq}")
    return slice(lo - 1, hi)


def extract(X, W, aux, band):
    """Copy the band's bins out of ``X``, ``W`` and the NMF bases.

    Activations are band-global and are copied whole.
    """
    sl = _band_slice(band, X.shape[0])
    if W.shape[0] != X.shape[0]:
        raise ValueError("W and X frequency counts differ")
    aux_sub = None
    if aux is not None:
        aux_sub = NmfModel(aux.bases[:, sl].copy(), aux.activations.copy())
    return SubbandState(X=X[sl].copy(), W=W[sl].copy(), aux=aux_sub)


def substitute(Y, W, aux, sub, band):
    """Write a band's results back into the full-band arrays, in place.

    ``Y`` may be ``None`` (nothing separated yet). The NMF activations are
    replaced wholesale. Returns ``(Y, W, aux)``.
    """
    sl = _band_slice(band, W.shape[0])
    width = sl.stop - sl.start
    if sub.W.shape[0] != width:
        raise ValueError(f"band ({band[0]}, {band[1]}) has {width} bins, state has {sub.W.shape[0]}")
    W[sl] = sub.W
    if Y is not None and sub.Y is not None:
        if sub.Y.shape[0] != width:
            raise ValueError("separated band extent does not match")
        Y[sl] = sub.Y
    if aux is not None:
        if sub.aux is None or sub.aux.bases.shape[1] != width:
            raise ValueError("NMF band state missing or of wrong extent")
        aux.bases[:, sl] = sub.aux.bases
        aux.activations = sub.aux.activations.copy()
    return Y, W, aux


@dataclass
class SeparationResult:
    Y: np.ndarray
    W: np.ndarray
    aux: NmfModel | None
    cost_traces: list
    band_order: list
    touch_counts: np.ndarray
    plan: SubbandPlan | None = None
    method: str = "aux_iva"
    extra: dict = field(default_factory=dict)

    @property
    def total_iters(self):
        """Largest number of updates any single bin received."""
        return int(self.touch_counts.max())


def subband_separate(
    X,
    method="aux_iva",
    theta_w=4,
    theta_delta=2,
    mode="loose",
    inner_iters=100,
    W_init=None,
    aux_init=None,
):
    """Separate ``X`` band by band in ascending order.

    Parameters
    ----------
    X : ndarray (F, T, M)
    method : {"aux_iva", "ilrma"}
    theta_w, theta_delta : int
        Band width and shift divisors.
    mode : {"tight", "loose"}
    inner_iters : int
        Updates per band.
    W_init : ndarray (F, M, M), optional
        Defaults to identity.
    aux_init : NmfModel, optional
        Required for ILRMA.

    Returns
    -------
    SeparationResult
    """
    if method not in ("aux_iva", "ilrma"):
        raise ValueError(f"subband splitting supports aux_iva and ilrma, not {method!r}")
    if inner_iters < 1:
        raise ValueError("inner_iters must be >= 1")
    X = np.ascontiguousarray(X, dtype=np.complex128)
    n_freq = X.shape[0]
    plan = make_subbands(n_freq, theta_w, theta_delta, mode)

    W = identity_demixing(n_freq, X.shape[2]) if W_init is None else np.array(W_init, dtype=np.complex128)
    aux = None if aux_init is None else aux_init.copy()
    Y = demix(W, X)

    traces, order = [], []
    for i, band in enumerate(plan.bands):
        sub = extract(X, W, aux, band)
        sub.Y, sub.W, sub.aux, trace = run_bss(sub.X, sub.W, sub.aux, method, inner_iters)
        Y, W, aux = substitute(Y, W, aux, sub, band)
        traces.append(trace)
        order.append(i)
        log.debug("band %d %s: cost %.6g -> %.6g", i, band, trace[0], trace[-1])

    return SeparationResult(
        Y=Y,
        W=W,
        aux=aux,
        cost_traces=traces,
        band_order=order,
        touch_counts=inner_iters * plan.coverage_counts(),
        plan=plan,
        method=method,
    )
