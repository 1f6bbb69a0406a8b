"""Pure-NumPy iterative-projection sweep (fallback for the compiled core)."""
import numpy as np

from .errors import SingularMatrixError

LOAD = 1e-12


def weighted_covariances(X, phi):
    """U[f, n] = (1/T) sum_t phi[f, t, n] x_ft x_ft^H, shape (F, N, M, M)."""
    n_freq, n_frames, n_chan = X.shape
    n_src = phi.shape[2]
    Xc = X.conj()
    U = np.empty((n_freq, n_src, n_chan, n_chan), dtype=np.complex128)
    for n in range(n_src):
        U[:, n] = (X * phi[:, :, n, None]).transpose(0, 2, 1) @ Xc
    U /= n_frames
    return U


def ip_sweep(X, phi, W):
    """One IP sweep over sources ``n = 0 .. N-1`` with fixed weights ``phi``."""
    n_freq, _, n_chan = X.shape
    W = np.array(W, dtype=np.complex128, copy=True)
    U = weighted_covariances(X, phi)
    eye = np.eye(n_chan)
    for n in range(W.shape[1]):
        Un = U[:, n]
        tr = np.trace(Un, axis1=1, axis2=2).real
        Un = Un + (LOAD * tr / n_chan)[:, None, None] * eye
        A = W @ Un
        rhs = np.broadcast_to(eye[n], (n_freq, n_chan))[..., None]
        try:
            w = np.linalg.solve(A, rhs)[..., 0]
        except np.linalg.LinAlgError:
            bad = [f for f in range(n_freq) if np.linalg.matrix_rank(A[f]) < n_chan]
            raise SingularMatrixError(
                f"singular W_f U_fn for source {n} at frequencies {bad[:10]}", bad
            ) from None
        denom = np.einsum("fm,fmk,fk->f", w.conj(), Un, w).real
        if not np.all(denom > 0):
            bad = np.flatnonzero(~(denom > 0)).tolist()
            raise SingularMatrixError(
                f"non-positive normalizer for source {n} at frequencies {bad[:10]}", bad
            )
        w /= np.sqrt(denom)[:, None]
        W[:, n, :] = w.conj()
    return W
