import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subband_bss.metrics import (
    SDR_CEILING_DB,
    delta_sdr,
    dominance_map,
    permutation_consistency,
    permutations,
    si_sdr,
)

from .conftest import crandn


def pc_oracle(S, Y):
    """Loop-by-loop permutation consistency."""
    F, T, N = S.shape
    perms = list(itertools.permutations(range(N)))
    q = []
    for f in range(F):
        best, best_score = 0, -1.0
        for i, p in enumerate(perms):
            score = 0.0
            for n in range(N):
                for t in range(T):
                    score += abs(S[f, t, n] * Y[f, t, p[n]])
            if score > best_score:
                best, best_score = i, score
        q.append(best)
    energy = [sum(abs(S[f, t, n]) ** 2 for t in range(T) for n in range(N)) for f in range(F)]
    best_pc, best_p = -1.0, 0
    for i in range(len(perms)):
        share = sum(e for e, qf in zip(energy, q) if qf == i) / sum(energy)
        if share > best_pc:
            best_pc, best_p = share, i
    return best_pc, q, best_p


# ---- permutations --------------------------------------------------------


def test_permutations_lexicographic():
    assert permutations(3) == [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    with pytest.raises(ValueError):
        permutations(9)


# ---- permutation consistency ---------------------------------------------


def test_pc_identity(rng):
    S = crandn(rng, 10, 20, 3)
    pc, q, best = permutation_consistency(S, S)
    assert pc == 1.0 and best == 0 and np.all(q == 0)


def test_pc_half_energy_swap(rng):
    S = crandn(rng, 4, 30, 2)
    S[2:] = S[:2]  # upper and lower pair carry identical energy
    Y = S.copy()
    Y[2:] = Y[2:, :, ::-1]
    pc, q, best = permutation_consistency(S, Y)
    assert pc == pytest.approx(0.5, abs=1e-15)
    assert q.tolist() == [0, 0, 1, 1] and best == 0


@settings(max_examples=60, deadline=None)
@given(F=st.integers(1, 8), T=st.integers(1, 6), N=st.integers(2, 3), seed=st.integers(0, 2**16))
def test_pc_matches_oracle(F, T, N, seed):
    rng = np.random.default_rng(seed)
    S = crandn(rng, F, T, N)
    Y = crandn(rng, F, T, N)
    pc, q, best = permutation_consistency(S, Y)
    o_pc, o_q, o_best = pc_oracle(S, Y)
    assert q.tolist() == o_q and best == o_best
    assert pc == pytest.approx(o_pc, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(2, 4), seed=st.integers(0, 2**16), scale=st.floats(1e-3, 1e3))
def test_pc_bounds_and_scale_invariance(N, seed, scale):
    rng = np.random.default_rng(seed)
    S = crandn(rng, 7, 5, N)
    Y = crandn(rng, 7, 5, N)
    pc, q, best = permutation_consistency(S, Y)
    assert 1.0 / len(permutations(N)) - 1e-12 <= pc <= 1.0
    pc2, q2, best2 = permutation_consistency(S, scale * Y)
    assert np.array_equal(q, q2) and best == best2 and pc == pytest.approx(pc2, rel=1e-12)


def test_pc_errors(rng):
    with pytest.raises(ValueError, match="zero energy"):
        permutation_consistency(np.zeros((3, 4, 2)), crandn(rng, 3, 4, 2))
    with pytest.raises(ValueError, match="shape"):
        permutation_consistency(crandn(rng, 3, 4, 2), crandn(rng, 3, 5, 2))


def test_pc_tie_goes_to_lowest(rng):
    S = np.ones((3, 4, 2), complex)
    pc, q, best = permutation_consistency(S, S)
    assert np.all(q == 0) and best == 0 and pc == 1.0


# ---- SI-SDR --------------------------------------------------------------


def test_si_sdr_known_snr():
    rng = np.random.default_rng(7)
    ref = rng.standard_normal(160000)
    noise = rng.standard_normal(160000)
    noise -= (noise @ ref) / (ref @ ref) * ref  # orthogonal so the projection is exact
    noise *= np.sqrt((ref @ ref) / (noise @ noise) * 10 ** (-20 / 10))
    assert si_sdr(ref + noise, ref) == pytest.approx(20.0, abs=0.1)
    noisy = rng.standard_normal(160000)
    noisy *= np.sqrt((ref @ ref) / (noisy @ noisy) * 0.01)
    assert si_sdr(ref + noisy, ref) == pytest.approx(20.0, abs=0.1)


def test_si_sdr_ceiling_and_floor():
    ref = np.sin(np.arange(100.0))
    assert si_sdr(ref, ref) == SDR_CEILING_DB
    assert si_sdr(3.0 * ref, ref) == SDR_CEILING_DB
    assert si_sdr(np.zeros(100), ref) == -SDR_CEILING_DB
    with pytest.raises(ValueError, match="silent"):
        si_sdr(ref, np.zeros(100))


# ---- delta SDR -----------------------------------------------------------


def _signals(rng, N=2, L=4000):
    src = rng.standard_normal((N, L))
    mix = src.sum(axis=0) + 0.1 * rng.standard_normal(L)
    return src, mix


def test_delta_sdr_perfect(rng):
    src, mix = _signals(rng)
    imp, perm = delta_sdr(src, src, mix)
    base = np.array([si_sdr(mix, s) for s in src])
    assert np.allclose(imp, SDR_CEILING_DB - base, rtol=0, atol=1e-12)
    assert perm == (0, 1)


def test_delta_sdr_mixture_is_zero(rng):
    src, mix = _signals(rng)
    imp, _ = delta_sdr(src, np.stack([mix, mix]), mix)
    assert np.all(imp == 0.0)


def test_delta_sdr_finds_swap(rng):
    src, mix = _signals(rng)
    imp, perm = delta_sdr(src, src[::-1] + 0.01 * rng.standard_normal(src.shape), mix)
    assert perm == (1, 0)
    assert np.all(imp > 20)


@settings(max_examples=30, deadline=None)
@given(N=st.integers(2, 4), seed=st.integers(0, 2**16))
def test_delta_sdr_assignment_is_optimal(N, seed):
    rng = np.random.default_rng(seed)
    src = rng.standard_normal((N, 300))
    est = src[rng.permutation(N)] + rng.uniform(0.2, 2.0) * rng.standard_normal((N, 300))
    mix = src.sum(axis=0)
    imp, perm = delta_sdr(src, est, mix)
    table = [[si_sdr(est[k], src[n]) for k in range(N)] for n in range(N)]
    brute = max(sum(table[n][p[n]] for n in range(N)) for p in itertools.permutations(range(N)))
    base = sum(si_sdr(mix, s) for s in src)
    assert imp.sum() == pytest.approx(brute - base, rel=1e-12, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), scale=st.floats(1e-3, 1e3))
def test_delta_sdr_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    src, mix = _signals(rng, L=500)
    est = src + 0.5 * rng.standard_normal(src.shape)
    a, pa = delta_sdr(src, est, mix)
    b, pb = delta_sdr(src, scale * est, mix)
    assert pa == pb and np.allclose(a, b, rtol=0, atol=1e-9)


def test_delta_sdr_errors(rng):
    src, mix = _signals(rng)
    with pytest.raises(ValueError, match="length"):
        delta_sdr(src, src[:, :-1], mix)
    with pytest.raises(ValueError, match="silent"):
        delta_sdr(np.zeros_like(src), src, mix)


# ---- dominance map -------------------------------------------------------


def test_dominance_zero():
    idx, silent = dominance_map(np.zeros((5, 3, 2)))
    assert np.all(idx == 0) and np.all(silent)


def test_dominance_one_hot():
    S = np.zeros((4, 3, 3), complex)
    for f, n in enumerate([2, 0, 1, 2]):
        S[f, :, n] = 1.0
    idx, silent = dominance_map(S)
    assert idx.tolist() == [2, 0, 1, 2] and not silent.any()


def test_dominance_matches_loop(rng):
    S = crandn(rng, 9, 6, 3)
    idx, _ = dominance_map(S)
    for f in range(9):
        e = [sum(abs(S[f, t, n]) ** 2 for t in range(6)) for n in range(3)]
        assert idx[f] == e.index(max(e))
    with pytest.raises(ValueError):
        dominance_map(S[..., :1])
