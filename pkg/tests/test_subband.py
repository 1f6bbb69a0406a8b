import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subband_bss import subband
from subband_bss.bss import NmfModel, identity_demixing, run_bss
from subband_bss.subband import extract, make_subbands, subband_separate, substitute

from .conftest import crandn


def covered_bitset(plan):
    bits = 0
    for lo, hi in plan.bands:
        for f in range(lo, hi + 1):
            bits |= 1 << f
    return bits


# ---- plans ---------------------------------------------------------------


def test_loose_1025_4_2():
    plan = make_subbands(1025, 4, 2, "loose")
    assert (plan.width, plan.shift) == (257, 129)
    assert plan.unclipped[0] == (-127, 129)
    assert plan.bands[0] == (1, 129)
    assert len(plan) == 9
    assert plan.bands[-1] == (905, 1025)


def test_tight_1025_4_2():
    plan = make_subbands(1025, 4, 2, "tight")
    assert plan.bands[0] == (1, 257)
    assert all(b[0] - a[0] == 129 for a, b in zip(plan.unclipped, plan.unclipped[1:]))
    assert covered_bitset(plan) == sum(1 << f for f in range(1, 1026))


def test_single_band():
    plan = make_subbands(8, 1, 1, "tight")
    assert plan.bands == ((1, 8),)
    assert make_subbands(8, 1, 1, "loose").bands == ((1, 8),)


def test_small_tight_example():
    assert make_subbands(8, 2, 2, "tight").bands == ((1, 4), (3, 6), (5, 8), (7, 8))


@settings(max_examples=200, deadline=None)
@given(
    F=st.integers(1, 600),
    tw=st.integers(1, 8),
    td=st.integers(1, 8),
    mode=st.sampled_from(["tight", "loose"]),
)
def test_plan_invariants(F, tw, td, mode):
    plan = make_subbands(F, tw, td, mode)
    assert np.all(plan.coverage_counts() >= 1)
    for (lo, hi), (ulo, uhi) in zip(plan.bands, plan.unclipped):
        assert 1 <= lo <= hi <= F
        assert (lo, hi) == (max(ulo, 1), min(uhi, F))
        assert uhi - ulo + 1 == plan.width
    assert all(b[0] - a[0] == plan.shift for a, b in zip(plan.unclipped, plan.unclipped[1:]))
    assert plan.unclipped[-1][0] <= F < plan.unclipped[-1][0] + plan.shift
    if td >= 2 and plan.width >= 2 and len(plan) > 1:
        # a one-bin band cannot overlap its neighbour whatever theta_delta is
        for (_, a_hi), (b_lo, _) in zip(plan.bands, plan.bands[1:]):
            assert a_hi >= b_lo


def test_plan_errors():
    with pytest.raises(ValueError):
        make_subbands(0, 1, 1)
    with pytest.raises(ValueError):
        make_subbands(10, 0, 1)
    with pytest.raises(ValueError):
        make_subbands(10, 2, 2, "medium")


def test_plan_to_dict():
    d = make_subbands(8, 2, 2, "tight").to_dict()
    assert d["bands"] == [[1, 4], [3, 6], [5, 8], [7, 8]]
    assert (d["width"], d["shift"], d["mode"]) == (4, 2, "tight")


# ---- extract / substitute ------------------------------------------------


def _state(rng, F=5, T=7, N=2):
    X = crandn(rng, F, T, N)
    W = crandn(rng, F, N, N)
    aux = NmfModel(rng.uniform(0.1, 1, (N, F, 2)), rng.uniform(0.1, 1, (N, 2, T)))
    return X, W, aux


def test_extract_full_band(rng):
    X, W, aux = _state(rng)
    sub = extract(X, W, aux, (1, 5))
    assert np.array_equal(sub.X, X) and np.array_equal(sub.W, W)
    assert np.array_equal(sub.aux.bases, aux.bases)
    assert np.array_equal(sub.aux.activations, aux.activations)
    sub.W[0, 0, 0] = 99.0
    assert W[0, 0, 0] != 99.0  # copies, not views


def test_extract_single_bin(rng):
    X, W, aux = _state(rng)
    sub = extract(X, W, aux, (3, 3))
    assert sub.X.shape == (1, 7, 2) and sub.W.shape == (1, 2, 2)
    assert np.array_equal(sub.W[0], W[2])
    assert sub.aux.bases.shape == (2, 1, 2)
    assert sub.aux.activations.shape == (2, 2, 7)


@pytest.mark.parametrize("band", [(0, 3), (2, 6), (4, 3)])
def test_extract_out_of_range(rng, band):
    X, W, aux = _state(rng)
    with pytest.raises(ValueError):
        extract(X, W, aux, band)


@settings(max_examples=50, deadline=None)
@given(lo=st.integers(1, 6), width=st.integers(1, 6), seed=st.integers(0, 1000))
def test_extract_substitute_roundtrip(lo, width, seed):
    rng = np.random.default_rng(seed)
    X, W, aux = _state(rng, F=12)
    hi = min(lo + width - 1, 12)
    Y = crandn(rng, 12, 7, 2)
    W0, Y0, B0, A0 = W.copy(), Y.copy(), aux.bases.copy(), aux.activations.copy()
    sub = extract(X, W, aux, (lo, hi))
    sub.Y = Y[lo - 1 : hi].copy()
    substitute(Y, W, aux, sub, (lo, hi))
    assert np.array_equal(W, W0) and np.array_equal(Y, Y0)
    assert np.array_equal(aux.bases, B0) and np.array_equal(aux.activations, A0)


def test_substitute_only_touches_band(rng):
    X, W, aux = _state(rng)
    W0 = W.copy()
    sub = extract(X, W, aux, (2, 3))
    sub.W = crandn(rng, 2, 2, 2)
    sub.aux.activations = np.full_like(sub.aux.activations, 7.0)
    substitute(None, W, aux, sub, (2, 3))
    assert np.array_equal(W[1:3], sub.W)
    assert np.array_equal(W[[0, 3, 4]], W0[[0, 3, 4]])
    assert np.all(aux.activations == 7.0)


def test_substitute_full_band_overwrite(rng):
    X, W, aux = _state(rng)
    sub = extract(X, W, aux, (1, 5))
    sub.W = crandn(rng, 5, 2, 2)
    substitute(None, W, None, sub, (1, 5))
    assert np.array_equal(W, sub.W)


def test_disjoint_substitutes_commute(rng):
    X, W, aux = _state(rng, F=10)
    a, b = (1, 4), (6, 9)
    subs = {}
    for band in (a, b):
        s = extract(X, W, None, band)
        s.W = crandn(rng, band[1] - band[0] + 1, 2, 2)
        subs[band] = s
    W1, W2 = W.copy(), W.copy()
    substitute(None, W1, None, subs[a], a)
    substitute(None, W1, None, subs[b], b)
    substitute(None, W2, None, subs[b], b)
    substitute(None, W2, None, subs[a], a)
    assert np.array_equal(W1, W2)


def test_substitute_extent_mismatch(rng):
    X, W, aux = _state(rng)
    sub = extract(X, W, None, (1, 3))
    with pytest.raises(ValueError):
        substitute(None, W, None, sub, (1, 4))


# ---- subband_separate ----------------------------------------------------


def _mixture(rng, F=24, T=50):
    S = crandn(rng, F, T, 2) * (rng.gamma(1.0, 1.0, (1, T, 2)) + 0.05)
    return np.einsum("fmn,ftn->ftm", crandn(rng, F, 2, 2), S)


@pytest.mark.parametrize("method", ["aux_iva", "ilrma"])
def test_single_band_is_vanilla(rng, method):
    X = _mixture(rng)
    aux = NmfModel.initial(2, 24, 50, 2, np.random.default_rng(5)) if method == "ilrma" else None
    res = subband_separate(X, method, 1, 1, "loose", 12, None, aux)
    Y, W, out, trace = run_bss(X, identity_demixing(24, 2), aux, method, 12)
    assert len(res.cost_traces) == 1
    assert np.array_equal(res.W, W) and np.array_equal(res.Y, Y)
    assert np.array_equal(res.cost_traces[0], trace)
    if method == "ilrma":
        assert np.array_equal(res.aux.activations, out.activations)


def test_touch_counts_1025():
    plan = make_subbands(1025, 4, 2, "loose")
    touches = 50 * plan.coverage_counts()
    assert set(np.unique(touches)) == {50, 100}
    assert touches.sum() == 50 * sum(hi - lo + 1 for lo, hi in plan.bands)
    # width - shift = 128 overlap bins, so one bin per stride is covered once
    once = np.flatnonzero(touches == 50) + 1
    assert once.tolist() == [1 + 129 * i for i in range(8)]


def test_band_order_and_touch_counts(rng):
    X = _mixture(rng)
    res = subband_separate(X, "aux_iva", 4, 2, "loose", 3)
    assert res.band_order == list(range(len(res.plan)))
    assert len(res.cost_traces) == len(res.plan)
    assert np.array_equal(res.touch_counts, 3 * res.plan.coverage_counts())
    assert res.total_iters == res.touch_counts.max()


def test_bands_chain_state(rng, monkeypatch):
    """Each band starts from the global state left by the previous band."""
    X = _mixture(rng)
    calls = []
    real = subband.run_bss

    def spy(Xs, W0, aux0, method, n_iter):
        out = real(Xs, W0, aux0, method, n_iter)
        calls.append((W0.copy(), None if aux0 is None else aux0.activations.copy(), out))
        return out

    monkeypatch.setattr(subband, "run_bss", spy)
    aux = NmfModel.initial(2, 24, 50, 2, np.random.default_rng(0))
    res = subband_separate(X, "ilrma", 4, 2, "tight", 4, None, aux)
    plan = res.plan
    assert len(calls) == len(plan)
    W_glob = identity_demixing(24, 2)
    V = aux.activations
    for (W0, V0, out), (lo, hi) in zip(calls, plan.bands):
        assert np.array_equal(W0, W_glob[lo - 1 : hi])
        assert np.array_equal(V0, V)
        W_glob[lo - 1 : hi] = out[1]
        V = out[2].activations
    assert np.array_equal(res.W, W_glob)
    assert np.array_equal(res.aux.activations, V)


def test_band_order_matters(rng):
    X = _mixture(rng)
    plan = make_subbands(24, 4, 2, "loose")
    forward = subband_separate(X, "aux_iva", 4, 2, "loose", 5).W
    W = identity_demixing(24, 2)
    for band in reversed(plan.bands):
        sub = extract(X, W, None, band)
        sub.Y, sub.W, _, _ = run_bss(sub.X, sub.W, None, "aux_iva", 5)
        substitute(None, W, None, sub, band)
    assert not np.allclose(forward, W)


def test_subband_rejects(rng):
    X = _mixture(rng)
    with pytest.raises(ValueError, match="aux_iva and ilrma"):
        subband_separate(X, "oc_iva")
    with pytest.raises(ValueError, match="inner_iters"):
        subband_separate(X, "aux_iva", inner_iters=0)
