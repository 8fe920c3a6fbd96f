import numpy as np
from hypothesis import given, settings, strategies as st

from beable_lab.streams import categorical, exponentials, uniforms

MASK = (1 << 64) - 1


def _mix_py(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def _uniform_py(seed: int, run: int, k: int) -> float:
    key = _mix_py((seed * 0x9E3779B97F4A7C15 + 0x243F6A8885A308D3) & MASK)
    stream = _mix_py(key ^ (((run + 1) * 0xD1B54A32D192ED03) & MASK))
    return (_mix_py((stream + (k + 1) * 0x9E3779B97F4A7C15) & MASK) >> 11) * 2.0**-53


@given(seed=st.integers(0, 2**63), run=st.integers(0, 10**9), k=st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_matches_pure_python_scheme(seed, run, k):
    assert uniforms(seed, run, k) == _uniform_py(seed, run, k)


def test_ensemble_equals_single_runs():
    runs = np.arange(50)[:, None]
    draws = np.arange(7)[None, :]
    block = uniforms(3, runs, draws)
    for r in (0, 17, 49):
        np.testing.assert_array_equal(block[r], uniforms(3, r, np.arange(7)))


def test_streams_differ_across_seeds_and_runs():
    a = uniforms(1, 0, np.arange(100))
    assert not np.array_equal(a, uniforms(2, 0, np.arange(100)))
    assert not np.array_equal(a, uniforms(1, 1, np.arange(100)))


def test_uniformity_and_range():
    u = uniforms(9, np.arange(200_000), 0)
    assert u.min() >= 0 and u.max() < 1
    counts = np.histogram(u, bins=20, range=(0, 1))[0]
    chi2 = ((counts - 10_000) ** 2 / 10_000).sum()
    assert chi2 < 45  # 19 dof, p ~ 7e-4


def test_exponential_mean():
    e = exponentials(4, np.arange(100_000), 3)
    assert np.all(e >= 0)
    assert abs(e.mean() - 1) < 5 / np.sqrt(e.size)


def test_categorical_inverse_cdf():
    probs = np.array([[0.2, 0.0, 0.8]] * 4)
    out = categorical(np.array([0.0, 0.19, 0.2, 0.99]), probs)
    np.testing.assert_array_equal(out, [0, 0, 2, 2])


def test_categorical_never_picks_zero_weight():
    u = uniforms(0, np.arange(10_000), 0)
    probs = np.tile([0.0, 0.5, 0.0, 0.5, 0.0], (u.size, 1))
    assert set(np.unique(categorical(u, probs))) == {1, 3}
