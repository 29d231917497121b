import hashlib
import subprocess
import sys

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nafsim.activation import (
    NafInstance,
    PerturbMode,
    PerturbationConfig,
    SmoothPerturbationTable,
    TableError,
    apply_recall_noise,
    eval_clean,
    eval_clean_derivative,
    load_table_csv,
    make_smooth_table,
    save_table_csv,
)


def smooth_config(amplitude=0.1, seed=1, **kw):
    return PerturbationConfig(PerturbMode.SMOOTH_SHAPE, amplitude, seed=seed, **kw)


class TestCleanSigmoid:
    def test_odd_at_zero(self):
        assert eval_clean(0.0) == 0.0

    def test_saturation(self):
        assert abs(eval_clean(50.0) - 1.0) < 1e-15
        assert abs(eval_clean(-50.0) + 1.0) < 1e-15

    def test_no_overflow_at_700(self):
        with np.errstate(all="raise"):
            assert eval_clean(700.0) == 1.0
            assert eval_clean(-700.0) == -1.0

    def test_against_high_precision_oracle(self):
        # independent evaluation of (e^x - e^-x)/(e^x + e^-x) at 50 digits
        mpmath.mp.dps = 50
        for x in [1.0, -0.3, 0.017, 3.5, -7.2]:
            ex = mpmath.exp(mpmath.mpf(x))
            emx = mpmath.exp(-mpmath.mpf(x))
            expected = float((ex - emx) / (ex + emx))
            assert abs(eval_clean(x) - expected) < 1e-14

    def test_nan_propagates(self):
        assert np.isnan(eval_clean(float("nan")))


class TestCleanDerivative:
    def test_at_zero(self):
        assert eval_clean_derivative(0.0) == 1.0

    def test_saturation(self):
        assert 0.0 <= eval_clean_derivative(50.0) < 1e-15

    def test_never_negative(self):
        xs = np.linspace(-800, 800, 2001)
        assert np.all(eval_clean_derivative(xs) >= 0.0)

    def test_finite_difference_oracle(self):
        h = 1e-6
        fd = (eval_clean(0.5 + h) - eval_clean(0.5 - h)) / (2 * h)
        assert abs(eval_clean_derivative(0.5) - fd) < 1e-8


class TestSmoothTable:
    def test_deterministic(self):
        cfg = smooth_config()
        a = make_smooth_table(cfg, 0)
        b = make_smooth_table(cfg, 0)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.derivative_values, b.derivative_values)
        assert np.array_equal(a.xs, b.xs)

    def test_neurons_independent(self):
        cfg = smooth_config()
        a = make_smooth_table(cfg, 0)
        b = make_smooth_table(cfg, 1)
        assert not np.array_equal(a.values, b.values)

    def test_exact_unit_span(self):
        t = make_smooth_table(smooth_config(seed=9), 4)
        assert t.values.min() == 0.0
        assert t.values.max() == 1.0

    def test_grid_length_matches_config(self):
        cfg = smooth_config()
        t = make_smooth_table(cfg, 0)
        expected = round((cfg.domain_hi - cfg.domain_lo) / cfg.step) + 1
        assert t.n_points == expected == 2001

    def test_smoothing_raises_lag_autocorrelation(self):
        # oracle: recompute the raw stream the constructor consumes
        cfg = smooth_config(seed=1)
        t = make_smooth_table(cfg, 0)
        raw = np.random.default_rng([cfg.seed, 0]).random(t.n_points)
        lag = int(round(cfg.sigma / cfg.step))

        def autocorr(v, k):
            a, b = v[:-k], v[k:]
            return np.corrcoef(a, b)[0, 1]

        assert autocorr(t.values, lag) > autocorr(raw, lag)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_smoother_than_raw(self, seed):
        # sigma >= 10 * step here (0.2 vs 0.01)
        cfg = smooth_config(seed=seed)
        t = make_smooth_table(cfg, 0)
        raw = np.random.default_rng([seed, 0]).random(t.n_points)
        assert np.max(np.abs(np.diff(t.values))) < np.max(np.abs(np.diff(raw)))

    def test_rejects_tiny_grid(self):
        cfg = smooth_config(domain_lo=0.0, domain_hi=0.005, step=0.01)
        with pytest.raises(TableError, match="fewer than 2"):
            make_smooth_table(cfg, 0)

    def test_rejects_undersmoothed(self):
        cfg = smooth_config(sigma=0.005)
        with pytest.raises(TableError, match="undersmoothed"):
            make_smooth_table(cfg, 0)

    def test_rejects_wrong_mode(self):
        cfg = PerturbationConfig(PerturbMode.RANDOM_NOISE, 0.1, seed=1)
        with pytest.raises(TableError):
            make_smooth_table(cfg, 0)

    def test_restart_determinism(self):
        # a fresh interpreter must rebuild the identical table
        t = make_smooth_table(smooth_config(seed=7), 3)
        digest = hashlib.sha256(
            t.xs.tobytes() + t.values.tobytes() + t.derivative_values.tobytes()
        ).hexdigest()
        code = (
            "import hashlib\n"
            "from nafsim.activation import PerturbMode, PerturbationConfig, make_smooth_table\n"
            "cfg = PerturbationConfig(PerturbMode.SMOOTH_SHAPE, 0.1, seed=7)\n"
            "t = make_smooth_table(cfg, 3)\n"
            "print(hashlib.sha256(t.xs.tobytes() + t.values.tobytes()"
            " + t.derivative_values.tobytes()).hexdigest())\n"
        )
        out = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, check=True
        )
        assert out.stdout.strip() == digest


class TestNafEvaluation:
    def test_zero_amplitude_bit_identical(self):
        table = make_smooth_table(smooth_config(), 0)
        naf = NafInstance.smooth(0.0, table)
        xs = np.linspace(-12, 12, 501)
        assert np.array_equal(naf.evaluate(xs), eval_clean(xs))
        assert np.array_equal(naf.derivative(xs), eval_clean_derivative(xs))

    def test_bounded_by_half_amplitude(self):
        table = make_smooth_table(smooth_config(seed=3), 2)
        for amp in [0.01, 0.1, 0.5]:
            naf = NafInstance.smooth(amp, table)
            xs = np.linspace(-15, 15, 3001)
            # 1-ulp slack: the addition (clean + term) rounds once
            assert np.max(np.abs(naf.evaluate(xs) - eval_clean(xs))) <= amp / 2 + 1e-15

    def test_value_matches_direct_table_lookup(self):
        # x = 0 sits on the grid, so the oracle is a plain table read
        cfg = smooth_config(amplitude=0.1, seed=1)
        table = make_smooth_table(cfg, 0)
        naf = NafInstance.smooth(0.1, table)
        idx = np.searchsorted(table.xs, 0.0)
        assert table.xs[idx] == 0.0
        expected = eval_clean(0.0) + 0.1 * (table.values[idx] - 0.5)
        assert naf.evaluate(0.0) == pytest.approx(expected, abs=1e-15)

    def test_off_grid_linear_interpolation_oracle(self):
        cfg = smooth_config(amplitude=0.1, seed=1)
        table = make_smooth_table(cfg, 0)
        naf = NafInstance.smooth(0.1, table)
        x = 0.0437  # strictly inside a cell
        i = np.searchsorted(table.xs, x) - 1
        w = (x - table.xs[i]) / (table.xs[i + 1] - table.xs[i])
        manual = (1 - w) * table.values[i] + w * table.values[i + 1]
        expected = eval_clean(x) + 0.1 * (manual - 0.5)
        assert naf.evaluate(x) == pytest.approx(expected, abs=1e-12)

    def test_clamps_outside_domain(self):
        table = make_smooth_table(smooth_config(seed=2), 0)
        naf = NafInstance.smooth(0.2, table)
        hi_val = naf.evaluate(table.domain_hi) - eval_clean(table.domain_hi)
        beyond = naf.evaluate(table.domain_hi + 5.0) - eval_clean(table.domain_hi + 5.0)
        assert beyond == pytest.approx(hi_val, abs=1e-15)

    @given(
        amp=st.floats(0.0, 1.0),
        seed=st.integers(0, 1000),
        x=st.floats(-20, 20),
    )
    @settings(max_examples=40, deadline=None)
    def test_bound_property(self, amp, seed, x):
        table = make_smooth_table(smooth_config(seed=seed), 0)
        naf = NafInstance.smooth(amp, table)
        assert abs(naf.evaluate(x) - eval_clean(x)) <= amp / 2 + 1e-15


class TestNafDerivative:
    def test_zero_amplitude(self):
        table = make_smooth_table(smooth_config(), 0)
        naf = NafInstance.smooth(0.0, table)
        assert naf.derivative(0.3) == eval_clean_derivative(0.3)

    def test_finite_difference_consistency(self):
        # fixed interior probe; sup error is interpolation-limited
        table = make_smooth_table(smooth_config(seed=1), 0)
        naf = NafInstance.smooth(0.1, table)
        h = table.step / 10
        xs = np.random.default_rng(2).uniform(-9.5, 9.5, 200)
        fd = (naf.evaluate(xs + h) - naf.evaluate(xs - h)) / (2 * h)
        assert np.max(np.abs(fd - naf.derivative(xs))) < 5e-3

    def test_clean_beyond_domain(self):
        table = make_smooth_table(smooth_config(), 0)
        naf = NafInstance.smooth(0.3, table)
        x = table.domain_hi + 2.0
        assert naf.derivative(x) == eval_clean_derivative(x)


class TestRecallNoise:
    def test_zero_amplitude_bit_exact(self):
        rng = np.random.default_rng(0)
        y = np.array([0.1, -0.5, 2.0, -0.0])
        out = apply_recall_noise(y, 0.0, rng)
        assert np.array_equal(out, y)
        assert out is not y

    def test_support_bound(self):
        rng = np.random.default_rng(1)
        y = np.zeros(10_000)
        out = apply_recall_noise(y, 0.3, rng)
        assert np.max(np.abs(out - y)) <= 0.15

    def test_monte_carlo_mean(self):
        # standard error of the mean of U(-A/2, A/2): (A/sqrt(12))/sqrt(n)
        rng = np.random.default_rng(12345)
        n, amp = 10**6, 0.1
        out = apply_recall_noise(np.zeros(n), amp, rng)
        bound = 3 * (amp / np.sqrt(12)) / np.sqrt(n)
        assert abs(out.mean()) < bound

    def test_rejects_negative_amplitude(self):
        with pytest.raises(ValueError):
            apply_recall_noise(np.zeros(3), -0.1, np.random.default_rng(0))


class TestTableCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        t = make_smooth_table(smooth_config(seed=11), 5)
        p = tmp_path / "table.csv"
        save_table_csv(t, p)
        back = load_table_csv(p)
        assert np.array_equal(back.xs, t.xs)
        assert np.array_equal(back.values, t.values)
        assert np.array_equal(back.derivative_values, t.derivative_values)

    def test_loader_accepts_nonuniform_monotone_grid(self, tmp_path):
        p = tmp_path / "measured.csv"
        p.write_text(
            "x,rands,drands_dx\n-1.0,0.0,0.1\n-0.2,0.4,0.3\n0.5,1.0,0.0\n2.0,0.25,-0.2\n"
        )
        t = load_table_csv(p)
        assert t.n_points == 4
        naf = NafInstance.smooth(0.1, t)
        assert np.isfinite(naf.evaluate(0.1))

    def test_loader_rejects_non_monotone(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,rands,drands_dx\n0.0,0.0,0.1\n-1.0,1.0,0.3\n")
        with pytest.raises(TableError, match="increasing"):
            load_table_csv(p)

    def test_loader_rejects_unnormalized(self, tmp_path):
        p = tmp_path / "raw.csv"
        p.write_text("x,rands,drands_dx\n0.0,0.2,0.1\n1.0,0.8,0.3\n")
        with pytest.raises(TableError, match="span"):
            load_table_csv(p)
        t = load_table_csv(p, normalize=True)
        assert t.values.min() == 0.0 and t.values.max() == 1.0


class TestInvariantValidation:
    def test_table_rejects_out_of_range_values(self):
        with pytest.raises(TableError):
            SmoothPerturbationTable(
                xs=np.array([0.0, 1.0]),
                values=np.array([0.0, 1.5]),
                derivative_values=np.array([0.0, 0.0]),
            )

    def test_table_rejects_length_mismatch(self):
        with pytest.raises(TableError, match="length"):
            SmoothPerturbationTable(
                xs=np.array([0.0, 1.0]),
                values=np.array([0.0, 1.0]),
                derivative_values=np.array([0.0]),
            )

    def test_config_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            PerturbationConfig(PerturbMode.SMOOTH_SHAPE, -0.1, seed=1)
        with pytest.raises(ValueError):
            PerturbationConfig(PerturbMode.SMOOTH_SHAPE, 0.1, seed=1, sigma=0.0)
        with pytest.raises(ValueError):
            PerturbationConfig(PerturbMode.SMOOTH_SHAPE, 0.1, seed=1, domain_lo=2.0, domain_hi=1.0)
