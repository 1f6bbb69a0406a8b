"""Whole-band determined BSS: AuxIVA, ILRMA and overlapped-clique IVA.

Array conventions
-----------------
X, Y : complex (n_freq, n_frames, n_channels)
W    : complex (n_freq, n_src, n_chan), row ``n`` of ``W[f]`` is ``w_fn^H``
NMF  : bases (n_src, n_freq, K), activations (n_src, K, n_frames)

All kernels are square (``n_src == n_chan``); use :func:`truncate_channels`
beforehand when there are more microphones than sources.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import NonFiniteError, SingularMatrixError

log = logging.getLogger(__name__)

EPS_R = 1e-12
EPS_NMF = 1e-12
MONOTONE_RTOL = 1e-6

METHODS = ("aux_iva", "ilrma", "oc_iva")

__all__ = [
    "NmfModel",
    "METHODS",
    "identity_demixing",
    "truncate_channels",
    "demix",
    "iva_cost",
    "ilrma_cost",
    "oc_iva_cost",
    "auxiva_update",
    "ilrma_update",
    "nmf_update",
    "oc_iva_update",
    "run_bss",
    "project_back",
]


@dataclass
class NmfModel:
    """Per-source NMF variables of ILRMA: variance ``r[n] = bases[n] @ activations[n]``."""

    bases: np.ndarray
    activations: np.ndarray

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.float64)
        self.activations = np.asarray(self.activations, dtype=np.float64)
        if self.bases.ndim != 3 or self.activations.ndim != 3:
            raise ValueError("bases must be (N, F, K) and activations (N, K, T)")
        if self.bases.shape[0] != self.activations.shape[0] or self.bases.shape[2] != self.activations.shape[1]:
            raise ValueError(
                f"inconsistent NMF shapes {self.bases.shape} and {self.activations.shape}"
            )

    @classmethod
    def initial(cls, n_src, n_freq, n_frames, n_bases=2, rng=None):
        """Bases of ones and activations drawn from U(0, 1), floored at ``EPS_NMF``."""
        rng = np.random.default_rng(rng)
        bases = np.ones((n_src, n_freq, n_bases))
        acts = np.maximum(rng.uniform(0.0, 1.0, size=(n_src, n_bases, n_frames)), EPS_NMF)
        return cls(bases, acts)

    @property
    def n_bases(self):
        return self.bases.shape[2]

    def variances(self):
        """Model variances, shape (N, F, T), floored at ``EPS_NMF``."""
        return np.maximum(self.bases @ self.activations, EPS_NMF)

    def copy(self):
        return NmfModel(self.bases.copy(), self.activations.copy())


def identity_demixing(n_freq, n_src):
    return np.tile(np.eye(n_src, dtype=np.complex128), (n_freq, 1, 1))


def truncate_channels(X, n_src):
    """Keep the first ``n_src`` channels (determined reduction for N < M)."""
    if n_src > X.shape[2]:
        raise ValueError(f"n_src={n_src} exceeds channel count {X.shape[2]}")
    return np.ascontiguousarray(X[:, :, :n_src])


def _check_pair(W, X):
    W = np.asarray(W)
    X = np.asarray(X)
    if X.ndim != 3 or W.ndim != 3:
        raise ValueError(f"expected X (F, T, M) and W (F, N, M), got {X.shape} and {W.shape}")
    if W.shape[0] != X.shape[0] or W.shape[2] != X.shape[2]:
        raise ValueError(f"demixing stack {W.shape} does not match spectrogram {X.shape}")
    return W, X


def demix(W, X):
    """Separated spectrogram ``Y[f, t] = W[f] @ X[f, t]``."""
    W, X = _check_pair(W, X)
    return X @ W.transpose(0, 2, 1)


def _power(Y):
    return Y.real**2 + Y.imag**2


def _logabsdet(W):
    sign, logdet = np.linalg.slogdet(W)
    return np.where(sign == 0, -np.inf, logdet)


def _logdet_term(W, weight):
    ld = _logabsdet(W)
    if not np.all(np.isfinite(ld)):
        bad = np.flatnonzero(~np.isfinite(ld)).tolist()
        log.warning("singular demixing matrix at frequencies %s; cost is +inf", bad[:10])
        return None
    return weight * ld.sum()


def _iva_contrast(P):
    return np.sqrt(P.sum(axis=0)).sum()


def _oc_contrast(P, plan):
    return sum(np.sqrt(P[sl].sum(axis=0)).sum() for sl in plan.slices())


def _ilrma_contrast(P, nmf):
    R = nmf.variances()
    return (P.transpose(2, 0, 1) / R + np.log(R)).sum()


def _check_nmf(nmf, X):
    raw = nmf.bases @ nmf.activations
    if not np.all(raw > 0):
        raise ValueError("NMF model variance must be strictly positive")
    if raw.shape[1:] != X.shape[:2]:
        raise ValueError(f"NMF model covers {raw.shape[1:]} bins, spectrogram has {X.shape[:2]}")


def iva_cost(W, X):
    """sum_{n,t} sqrt(sum_f |y_ftn|^2) - T sum_f log|det W_f|."""
    W, X = _check_pair(W, X)
    ld = _logdet_term(W, X.shape[1])
    if ld is None:
        return np.inf
    return float(_iva_contrast(_power(demix(W, X))) - ld)


def oc_iva_cost(W, X, plan):
    """Overlapped-clique cost: the IVA norm is taken per band and summed over bands."""
    W, X = _check_pair(W, X)
    _check_plan(plan, X.shape[0])
    ld = _logdet_term(W, X.shape[1])
    if ld is None:
        return np.inf
    return float(_oc_contrast(_power(demix(W, X)), plan) - ld)


def ilrma_cost(W, X, nmf):
    """sum_{n,f,t} (|y|^2 / r + log r) - 2T sum_f log|det W_f|.

    The log-det weight ``2T`` matches the complex Gaussian likelihood and
    is the weight for which the IP normalization ``w^H U w = 1`` is the
    exact minimizer.
    """
    W, X = _check_pair(W, X)
    _check_nmf(nmf, X)
    ld = _logdet_term(W, 2 * X.shape[1])
    if ld is None:
        return np.inf
    return float(_ilrma_contrast(_power(demix(W, X)), nmf) - ld)


def _majorizer(P, phi, W):
    """Per-bin surrogate sum_{t,n} phi |y|^2 / T - 2 log|det W_f|, shape (F,)."""
    _, logabs = np.linalg.slogdet(W)
    return np.einsum("ftn,ftn->f", phi, P) / P.shape[1] - 2.0 * logabs


def _safe_sweep(X, phi, W, P):
    """IP sweep that reverts any bin whose surrogate went up.

    Each sweep minimizes the surrogate exactly only without diagonal
    loading. When the weights span many orders of magnitude (NMF variances
    at their floor) the trace-scaled loading is no longer negligible and
    can push the surrogate up; those bins keep their previous filters.

    Returns the new stack and its separated power ``|W_new x|^2``.
    """
    W_new = _backend.ip_sweep(X, phi, W)
    P_new = _power(demix(W_new, X))
    worse = ~(_majorizer(P_new, phi, W_new) <= _majorizer(P, phi, W))
    if worse.any():
        log.debug("reverted %d bins whose IP surrogate increased", np.count_nonzero(worse))
        W_new[worse] = W[worse]
        P_new[worse] = P[worse]
    return W_new, P_new


def _auxiva_step(X, W, P):
    r = np.sqrt(P.sum(axis=0))
    phi = np.ascontiguousarray(np.broadcast_to(1.0 / np.maximum(r, EPS_R), P.shape))
    return _safe_sweep(X, phi, W, P)


def _oc_iva_step(X, W, P, plan):
    phi = np.zeros(P.shape)
    for sl in plan.slices():
        r = np.sqrt(P[sl].sum(axis=0))
        phi[sl] += 1.0 / np.maximum(r, EPS_R)
    return _safe_sweep(X, phi, W, P)


def _ilrma_step(X, W, P, nmf):
    nmf = nmf_update(P.transpose(2, 0, 1), nmf)
    phi = np.ascontiguousarray((1.0 / nmf.variances()).transpose(1, 2, 0))
    W, P = _safe_sweep(X, phi, W, P)
    return W, P, nmf


def auxiva_update(X, W):
    """One AuxIVA iterative-projection sweep (spherical Laplace source model)."""
    W, X = _check_pair(W, X)
    return _auxiva_step(X, W, _power(demix(W, X)))[0]


def oc_iva_update(X, W, plan):
    """IP sweep whose weights sum ``1 / r_band`` over every band containing ``f``."""
    W, X = _check_pair(W, X)
    _check_plan(plan, X.shape[0])
    return _oc_iva_step(X, W, _power(demix(W, X)), plan)[0]


def nmf_update(P, nmf):
    """Multiplicative IS-NMF step on power spectrograms ``P`` of shape (N, F, T)."""
    T = nmf.bases.copy()
    V = nmf.activations.copy()

    R = np.maximum(T @ V, EPS_NMF)
    Vt = V.transpose(0, 2, 1)
    T *= np.sqrt(((P / R**2) @ Vt) / ((1.0 / R) @ Vt))
    n_floor = np.count_nonzero(T < EPS_NMF)
    T = np.maximum(T, EPS_NMF)

    R = np.maximum(T @ V, EPS_NMF)
    Tt = T.transpose(0, 2, 1)
    V *= np.sqrt((Tt @ (P / R**2)) / (Tt @ (1.0 / R)))
    n_floor += np.count_nonzero(V < EPS_NMF)
    V = np.maximum(V, EPS_NMF)
    if n_floor:
        log.debug("floored %d NMF entries at %g", n_floor, EPS_NMF)
    return NmfModel(T, V)


def ilrma_update(X, W, nmf):
    """One ILRMA iteration: NMF update, then IP with per-bin weights ``1 / r_ftn``."""
    W, X = _check_pair(W, X)
    W, _, nmf = _ilrma_step(X, W, _power(demix(W, X)), nmf)
    return W, nmf


def _check_plan(plan, n_freq):
    if plan is None:
        raise ValueError("oc_iva needs a SubbandPlan")
    if plan.n_freq != n_freq:
        raise ValueError(f"plan covers {plan.n_freq} bins, spectrogram has {n_freq}")


def run_bss(X, W_init, aux_init=None, method="aux_iva", n_iter=100, plan=None):
    """Run ``n_iter`` updates of ``method`` from the given initial state.

    Parameters
    ----------
    X : ndarray (F, T, M)
    W_init : ndarray (F, M, M)
    aux_init : NmfModel or None
        Required for ``"ilrma"``, must be ``None`` otherwise.
    method : {"aux_iva", "ilrma", "oc_iva"}
    n_iter : int
    plan : SubbandPlan
        Band cliques for ``"oc_iva"``.

    Returns
    -------
    Y : ndarray (F, T, M)
    W : ndarray (F, M, M)
    aux : NmfModel or None
    cost_trace : ndarray (n_iter + 1,)
        Cost before the first update followed by the cost after each one.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if n_iter < 0:
        raise ValueError("n_iter must be non-negative")
    W, X = _check_pair(W_init, X)
    X = np.ascontiguousarray(X, dtype=np.complex128)
    if not np.all(np.isfinite(X)):
        raise ValueError("spectrogram contains non-finite values")
    W = np.array(W, dtype=np.complex128, copy=True)
    if W.shape[1] != W.shape[2]:
        raise ValueError(f"demixing matrices must be square, got {W.shape[1:]}")

    T = X.shape[1]
    if method == "ilrma":
        if not isinstance(aux_init, NmfModel):
            raise ValueError("ilrma requires an NmfModel as auxiliary state")
        aux = aux_init.copy()
        if aux.bases.shape[:2] != (W.shape[1], X.shape[0]) or aux.activations.shape[2] != X.shape[1]:
            raise ValueError("NMF model shape does not match the spectrogram")
        _check_nmf(aux, X)

        def contrast(P, aux):
            return _ilrma_contrast(P, aux)

        def step(W, P, aux):
            return _ilrma_step(X, W, P, aux)

        ld_weight = 2 * T
    else:
        if aux_init is not None:
            raise ValueError(f"{method} takes no auxiliary state, got {type(aux_init).__name__}")
        aux = None
        ld_weight = T
        if method == "aux_iva":

            def contrast(P, aux):
                return _iva_contrast(P)

            def step(W, P, aux):
                return (*_auxiva_step(X, W, P), None)

        else:
            _check_plan(plan, X.shape[0])

            def contrast(P, aux):
                return _oc_contrast(P, plan)

            def step(W, P, aux):
                return (*_oc_iva_step(X, W, P, plan), None)

    def cost(W, P, aux):
        ld = _logdet_term(W, ld_weight)
        return np.inf if ld is None else float(contrast(P, aux) - ld)

    P = _power(demix(W, X))
    trace = [cost(W, P, aux)]
    for it in range(1, n_iter + 1):
        W, P, aux = step(W, P, aux)
        if not np.all(np.isfinite(W)):
            raise NonFiniteError(f"non-finite demixing matrix after iteration {it}", iteration=it)
        trace.append(cost(W, P, aux))
        if trace[-1] > trace[-2] + MONOTONE_RTOL * abs(trace[-2]):
            log.warning("%s cost increased at iteration %d: %r -> %r", method, it, trace[-2], trace[-1])
    return demix(W, X), W, aux, np.array(trace)


def project_back(Y, W, ref_channel=0):
    """Rescale each source by entry ``(ref_channel, n)`` of ``W_f^{-1}``.

    Non-square stacks use the pseudo-inverse.
    """
    Y = np.asarray(Y)
    W = np.asarray(W)
    if Y.shape[0] != W.shape[0] or Y.shape[2] != W.shape[1]:
        raise ValueError(f"separated spectrogram {Y.shape} does not match W {W.shape}")
    if not 0 <= ref_channel < W.shape[2]:
        raise ValueError(f"reference channel {ref_channel} out of range")
    if W.shape[1] == W.shape[2]:
        try:
            A = np.linalg.inv(W)
        except np.linalg.LinAlgError:
            bad = [f for f in range(W.shape[0]) if np.linalg.matrix_rank(W[f]) < W.shape[1]]
            raise SingularMatrixError(f"singular demixing matrix at frequencies {bad[:10]}", bad) from None
    else:
        A = np.linalg.pinv(W)
    return Y * A[:, ref_channel, None, :]
