import numpy as np
import pytest

from hybridanc.dsp import FirFilter
from hybridanc.errors import ConfigurationError, DivergenceError
from hybridanc.fxnlms import FxNlmsState, init

from oracles import identity_paths, naive_fxnlms, random_instance


class TestInit:
    def test_zero_filter(self):
        s = init(FirFilter.zeros(1024), 0.002, 1e-6)
        assert np.all(s.filter.taps == 0) and s.mu0 == 0.002

    def test_bad_step(self):
        with pytest.raises(ConfigurationError):
            FxNlmsState(FirFilter.zeros(4), 0.0)
        with pytest.raises(ConfigurationError):
            FxNlmsState(FirFilter.zeros(4), 0.1, eps=0.0)

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            init(FirFilter.zeros(8), length=16)

    def test_zero_input_keeps_filter(self):
        w0 = FirFilter(np.random.default_rng(1).standard_normal(8))
        s = init(w0)
        e, _ = s.run(np.zeros(500), np.zeros(500), identity_paths(4))
        assert np.array_equal(s.filter.taps, w0.taps)
        assert np.all(e == 0)


class TestStep:
    def test_all_zero(self):
        s = init(FirFilter.zeros(4))
        assert s.step(0.0, 0.0, identity_paths()) == (0.0, 0.0)
        assert np.all(s.filter.taps == 0)

    def test_hand_recursion(self):
        s = FxNlmsState(FirFilter.zeros(1), mu0=0.5, eps=0.5)
        paths = identity_paths()
        e, y = s.step(1.0, 1.0, paths)
        assert (e, y) == (1.0, 0.0)
        assert s.filter.taps[0] == pytest.approx(1 / 3, abs=1e-15)
        e, y = s.step(1.0, 1.0, paths)
        assert y == pytest.approx(1 / 3) and e == pytest.approx(2 / 3)
        assert s.filter.taps[0] == pytest.approx(5 / 9, abs=1e-15)

    def test_step_equals_block_run(self):
        paths, x, d, w0 = random_instance(3, n=200)
        a, b = init(FirFilter(w0)), init(FirFilter(w0))
        ea = [a.step(xn, dn, paths)[0] for xn, dn in zip(x, d)]
        eb, _ = b.run(x, d, paths)
        assert np.array_equal(ea, eb)
        assert np.array_equal(a.filter.taps, b.filter.taps)

    def test_adapt_off_freezes_filter(self):
        paths, x, d, w0 = random_instance(4, n=300)
        s = init(FirFilter(w0))
        s.run(x, d, paths, adapt=False)
        assert np.array_equal(s.filter.taps, w0)

    def test_sample_counter(self):
        paths, x, d, w0 = random_instance(5, n=100)
        s = init(FirFilter(w0))
        s.run(x[:40], d[:40], paths)
        s.run(x[40:], d[40:], paths)
        assert s.n == 100


class TestOracle:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_naive_transcription(self, seed):
        paths, x, d, w0 = random_instance(seed)
        mu0, eps = 0.05, 1e-6
        w_ref, e_ref = naive_fxnlms(paths, x, d, w0, mu0, eps)
        s = FxNlmsState(FirFilter(w0), mu0, eps)
        e, _ = s.run(x, d, paths)
        assert np.max(np.abs(s.filter.taps - w_ref)) <= 1e-12
        assert np.max(np.abs(e - e_ref)) <= 1e-12


class TestReinitialize:
    def test_same_filter_is_noop(self):
        paths, x, d, w0 = random_instance(6, n=400)
        a, b = init(FirFilter(w0)), init(FirFilter(w0))
        a.run(x[:200], d[:200], paths)
        b.run(x[:200], d[:200], paths)
        b.reinitialize(b.filter)
        ea, _ = a.run(x[200:], d[200:], paths)
        eb, _ = b.run(x[200:], d[200:], paths)
        assert np.array_equal(ea, eb)

    def test_zeros_mid_run(self):
        paths, x, d, w0 = random_instance(7, n=300)
        s = init(FirFilter(w0))
        s.run(x[:150], d[:150], paths)
        s.reinitialize(FirFilter.zeros(len(w0)))
        _, y = s.step(x[150], d[150], paths)
        assert y == 0.0

    def test_history_preserved(self):
        # after the swap the plant still sees the old anti-noise in S's memory
        paths, x, d, w0 = random_instance(8, n=300)
        s = init(FirFilter(w0))
        s.run(x[:150], d[:150], paths)
        s.reinitialize(FirFilter.zeros(len(w0)))
        e, _ = s.step(x[150], d[150], paths)
        if len(paths.secondary) > 1:
            assert e != d[150]

    def test_counter(self):
        s = init(FirFilter.zeros(4))
        for k in range(1, 4):
            s.reinitialize(FirFilter.zeros(4))
            assert s.reinit_count == k

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            init(FirFilter.zeros(4)).reinitialize(FirFilter.zeros(5))


class TestDivergence:
    def test_large_step_raises_with_index(self):
        paths, x, d, _ = random_instance(9, n=5000)
        s = FxNlmsState(FirFilter.zeros(16), mu0=50.0)
        with pytest.raises(DivergenceError) as info:
            s.run(x * 100, d * 100, paths)
        assert 0 <= info.value.sample_index < 5000
        assert f"sample {info.value.sample_index}" in str(info.value)
        assert isinstance(info.value, ArithmeticError)

    def test_index_counts_previous_blocks(self):
        paths, x, d, _ = random_instance(9, n=5000)
        s = FxNlmsState(FirFilter.zeros(16), mu0=50.0)
        s.run(x[:10] * 0, d[:10] * 0, paths)
        with pytest.raises(DivergenceError) as info:
            s.run(x * 100, d * 100, paths)
        assert info.value.sample_index >= 10


class TestScaleInvariance:
    @pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e3])
    def test_error_scales_with_input(self, c):
        paths, x, d, _ = random_instance(11, n=2000)
        # eps scaled with c**2 keeps the normalisation exactly equivariant
        a = FxNlmsState(FirFilter.zeros(16), 0.01, eps=1e-6)
        b = FxNlmsState(FirFilter.zeros(16), 0.01, eps=1e-6 * c**2)
        ea, _ = a.run(x, d, paths)
        eb, _ = b.run(c * x, c * d, paths)
        np.testing.assert_allclose(eb / c, ea, rtol=1e-9, atol=1e-9 * np.abs(ea).max())

    def test_default_eps_nearly_invariant(self):
        paths, x, d, _ = random_instance(12, n=2000)
        a = FxNlmsState(FirFilter.zeros(16), 0.01)
        b = FxNlmsState(FirFilter.zeros(16), 0.01)
        ea, _ = a.run(x, d, paths)
        eb, _ = b.run(10 * x, 10 * d, paths)
        # eps only matters while the filtered-reference line is nearly empty
        np.testing.assert_allclose(eb / 10, ea, rtol=0, atol=1e-5 * np.abs(ea).max())
