import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shapedither.dither import G2, uniform_dither
from shapedither.stats import (
    DegenerateSeriesError, Histogram, PsdEstimate, SupportMismatchError, UndersampledError,
    UniformReference, autocorrelation, compute_run_stats, detect_spurs, error_histogram,
    harmonic_number, inband_power, independence_test, joint_histogram, tv_distance,
    uniformity_test, welch_averages, welch_psd,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_tv_trivial_cases():
    a = np.array([0.2, 0.3, 0.5])
    assert tv_distance(a, a) == 0
    assert tv_distance([1, 0, 0], [0, 0, 1]) == 1
    with pytest.raises(SupportMismatchError):
        tv_distance([1, 0], [0, 0, 1])
    with pytest.raises(SupportMismatchError):
        tv_distance(UniformReference(1.0, 32), UniformReference(1.0, 42))


@given(st.lists(st.floats(0, 1), min_size=2, max_size=20), st.integers(0, 1000))
def test_tv_is_a_bounded_metric(weights, seed):
    a = np.array(weights) + 1e-9
    a /= a.sum()
    b = rng(seed).dirichlet(np.ones(len(a)))
    d = tv_distance(a, b)
    assert 0 <= d <= 1 + 1e-12
    assert d == pytest.approx(tv_distance(b, a))


def test_histogram_counts_sum_to_n():
    e = uniform_dither(1, 10_000, 1.0)
    hist = error_histogram(e, 1.0, 32)
    assert hist.n == 10_000 and hist.bins == 32
    assert hist.centers[0] == pytest.approx(-0.5 + 1 / 64)
    assert hist.to_csv().splitlines()[0] == "value,count"


def test_uniformity_pass_rate_under_null():
    passes = 0
    trials = 300
    for seed in range(trials):
        e = uniform_dither(seed, 4000, 1.0)
        passes += uniformity_test(error_histogram(e, 1.0, 16)).passed
    assert 0.97 <= passes / trials <= 1.0


def test_uniformity_rejects_triangular():
    e = (rng(1).random(100_000) + rng(2).random(100_000)) / 2 - 0.5
    assert not uniformity_test(error_histogram(e, 1.0, 16)).passed


def test_uniformity_rejects_undersampled():
    with pytest.raises(UndersampledError):
        uniformity_test(error_histogram(uniform_dither(0, 100, 1.0), 1.0, 32))


def test_independence_test():
    a = uniform_dither(3, 200_000, 1.0)
    table = joint_histogram(a, 1, 1.0, 8)
    assert table.sum() == len(a) - 1
    assert independence_test(table).passed
    smooth = np.convolve(a, [0.5, 0.5], mode="valid")
    assert not independence_test(joint_histogram(smooth, 1, 1.0, 8)).passed


def test_autocorrelation_definition():
    x = rng(4).normal(size=500)
    r = autocorrelation(x, 5)
    c = x - x.mean()
    for p in range(6):
        assert r[p] == pytest.approx(np.dot(c[:500 - p], c[p:]) / 500)
    assert r[0] == pytest.approx(np.var(x))


def test_autocorrelation_constant_is_degenerate():
    assert np.all(autocorrelation(np.full(100, 3.0), 4) == 0)
    with pytest.raises(DegenerateSeriesError):
        autocorrelation(np.full(100, 3.0), 4, normalized=True)


def test_autocorrelation_white_bound():
    n = 1 << 16
    r = autocorrelation(uniform_dither(12, n, 1.0), 64, normalized=True)
    assert r[0] == 1
    assert np.all(np.abs(r[1:]) < 4 / np.sqrt(n))


def test_welch_sinusoid_at_bin_center():
    seg = 1024
    f0 = 37 / seg
    x = np.sin(2 * np.pi * f0 * np.arange(1 << 15))
    psd = welch_psd(x, seg)
    assert psd.freqs[np.argmax(psd.density)] == pytest.approx(f0)
    assert psd.total_power() == pytest.approx(0.5, rel=0.01)


def test_welch_white_noise_is_flat():
    seg = 512
    x = rng(5).normal(size=seg // 2 * 600)
    psd = welch_psd(x, seg)
    assert psd.n_averages >= 256
    inner = psd.density[1:-1]
    db = 10 * np.log10(inner / np.mean(inner))
    assert np.all(np.abs(db) < 1.5)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([256, 1024, 4096]))
def test_parseval(seed, seg):
    x = np.convolve(rng(seed).normal(size=1 << 16), [1, -0.5, 0.25], mode="valid")
    psd = welch_psd(x, seg)
    assert np.all(psd.density >= 0)
    assert psd.total_power() == pytest.approx(np.var(x), rel=0.01)


def test_welch_rejects_bad_segments():
    x = np.zeros(1000)
    with pytest.raises(ValueError):
        welch_psd(x, 300)
    with pytest.raises(ValueError):
        welch_psd(x, 2048)
    assert welch_averages(1 << 20, 8192, 0.5) == 255
    assert welch_averages(8192 + 255 * 4096, 8192, 0.5) == 256


def _synthetic_psd(density):
    freqs = np.linspace(0, 0.5, len(density))
    return PsdEstimate(freqs, np.asarray(density, dtype=float), 256, 2 * (len(density) - 1))


def test_spurs_flat_psd_is_empty():
    assert detect_spurs(_synthetic_psd(np.ones(513)), 6.0) == []


def test_spurs_found_and_merged():
    d = np.ones(513)
    d[100:103] = [10, 40, 10]
    d[300] = 100
    spurs = detect_spurs(_synthetic_psd(d), 6.0)
    assert len(spurs) == 2
    assert (spurs[0].first_bin, spurs[0].last_bin) == (100, 102)
    assert spurs[0].db_above_floor == pytest.approx(10 * np.log10(40))
    assert spurs[1].frequency == pytest.approx(300 / 1024)


def test_spurs_respect_signal_exclusion():
    psd = _synthetic_psd(np.ones(513))
    psd.density[100] = 1e4
    assert detect_spurs(psd, 6.0, signal_freqs=[100 / 1024]) == []


def test_harmonic_number_with_aliasing():
    assert harmonic_number(0.3, 0.1, 1e-9) == 3
    assert harmonic_number(0.4, 0.3, 1e-9) == 2       # 0.6 aliases to 0.4
    assert harmonic_number(0.123, 0.1, 1e-4) is None


def test_inband_power_of_white_noise():
    x = rng(6).normal(size=1 << 18)
    psd = welch_psd(x, 1024)
    frac = inband_power(psd, 0.1) / psd.total_power()
    assert frac == pytest.approx(0.1, rel=0.05)
    with pytest.raises(ValueError):
        inband_power(psd, 0.0)


def test_inband_power_excludes_signal():
    n = 1 << 16
    x = np.sin(2 * np.pi * 0.02 * np.arange(n)) + 0.01 * rng(7).normal(size=n)
    psd = welch_psd(x, 1024)
    assert inband_power(psd, 0.1, signal_freqs=[0.02]) < 1e-3 < inband_power(psd, 0.1)


def test_run_stats_invariants():
    e = uniform_dither(9, 1 << 16, 1.0)
    stats = compute_run_stats(e, 1.0, 32, max_lag=16, segment_length=1024, joint_lags=(1, 6))
    assert stats.pmf.n == len(e)
    assert stats.autocorr[0] == pytest.approx(stats.variance, rel=1e-12)
    assert np.all(stats.psd.density >= 0)
    assert set(stats.joint_pmfs) == {1, 6}
    summary = stats.summary()
    assert summary["uniformity"]["dof"] == 31
    assert summary["welch_averages"] == stats.psd.n_averages


def test_histogram_lattice_matches_reference():
    hist = Histogram(1.0, np.ones(32, dtype=np.int64))
    assert tv_distance(hist, UniformReference(1.0, 32)) == pytest.approx(0)
    assert G2.L == 32
