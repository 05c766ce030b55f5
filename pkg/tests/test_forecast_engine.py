import numpy as np
import pandas as pd
import pytest

from dayahead import forecast_engine as fe
from dayahead import sarma
from dayahead.data_io import AlignmentError, InvariantError, TimeSeries
from dayahead.forecast_engine import RollingConfig, improve_day, read_improved, run_backtest
from dayahead.metrics import error_report
from dayahead.synthetic import SynthConfig, synth_load

H = pd.Timedelta(hours=1)
D = pd.Timedelta(days=1)


@pytest.fixture(scope="module")
def synth():
    return synth_load(SynthConfig(seed=3, days=420))


def test_config_validation():
    with pytest.raises(InvariantError):
        RollingConfig(window_len=2161)
    with pytest.raises(InvariantError):
        RollingConfig(window_len=4380)
    with pytest.raises(InvariantError):
        RollingConfig(window_len=144)
    with pytest.raises(InvariantError):
        RollingConfig(decision_hour=0)


def test_window_end_convention():
    cfg = RollingConfig()
    day = pd.Timestamp("2017-03-10")
    assert cfg.window_end(day) == pd.Timestamp("2017-03-09 00:00")
    assert RollingConfig(decision_hour=14).window_end(day) == pd.Timestamp("2017-03-09 02:00")
    # the recursion spans the 48 hours of the decision day and the target day
    assert (day + D - cfg.window_end(day)) / H == 48


def test_first_day():
    cfg = RollingConfig(window_len=24 * 30)
    start = pd.Timestamp("2017-01-01")
    first = cfg.first_day(start)
    assert cfg.window_end(first) - cfg.window_len * H >= start
    assert cfg.window_end(first - D) - cfg.window_len * H < start
    burned = RollingConfig(window_len=24 * 30, burn=24 * 5).first_day(start)
    assert burned == first + 5 * D


def test_zero_error_regime():
    n = 24 * 120
    load = TimeSeries(pd.Timestamp("2017-01-01"), 50_000 + 100 * np.sin(np.arange(n)))
    errors = fe.error_series(load, load)
    cfg = RollingConfig(window_len=24 * 60)
    day = cfg.first_day(load.start) + 3 * D
    out = improve_day(errors, load, day, cfg)
    np.testing.assert_array_equal(out.ehat, np.zeros(24))
    np.testing.assert_array_equal(out.lhat_star, out.lhat)


def test_constant_bias_captured_by_seasonal():
    n = 24 * 120
    actual = TimeSeries(pd.Timestamp("2017-01-01"), np.full(n, 60_000.0))
    tso = actual.with_values(actual.values - 1000.0)
    cfg = RollingConfig(window_len=24 * 60)
    day = cfg.first_day(actual.start)
    out = improve_day(fe.error_series(actual, tso), tso, day, cfg)
    np.testing.assert_allclose(out.ehat, 1000.0, atol=1e-9)
    np.testing.assert_allclose(out.lhat_star, 60_000.0, atol=1e-9)


def monolithic_day(actual, tso, day, window_len):
    """Straight-line reference: slices, groupby profile, own forecast loop."""
    a = actual.to_pandas()
    f = tso.to_pandas()
    e = a - f
    cutoff = day - D  # first unobserved hour
    win = e[(e.index >= cutoff - pd.Timedelta(hours=window_len)) & (e.index < cutoff)]
    means = win.groupby([win.index.dayofweek, win.index.hour]).mean()
    sc = lambda idx: np.array([means[(t.dayofweek, t.hour)] for t in idx])
    rc = win.to_numpy() - sc(win.index)
    p = sarma.fit(rc).params
    psi = list(sarma.full_residuals(p, rc))
    hist = list(rc)
    future = pd.date_range(cutoff, periods=48, freq="h")
    preds = []
    for _ in future:
        y = (p.phi0 + p.phi1 * hist[-1] + p.phi24 * hist[-24] - p.phi1 * p.phi24 * hist[-25]
             + p.omega1 * psi[-1] + p.omega24 * psi[-24] + p.omega1 * p.omega24 * psi[-25])
        preds.append(y)
        hist.append(y)
        psi.append(0.0)
    ehat = (np.array(preds) + sc(future))[-24:]
    lhat = f[(f.index >= day) & (f.index < day + D)].to_numpy()
    return lhat + ehat


def test_matches_monolithic_reference(synth):
    actual, tso, errors = synth
    cfg = RollingConfig(window_len=8760)
    day = cfg.first_day(actual.start) + 10 * D
    out = improve_day(errors, tso, day, cfg)
    np.testing.assert_allclose(out.lhat_star, monolithic_day(actual, tso, day, 8760), rtol=0, atol=1e-6)


def test_backtest_invariants_and_io(synth, tmp_path):
    actual, tso, _ = synth
    cfg = RollingConfig(window_len=24 * 56)
    first = cfg.first_day(actual.start)
    res = run_backtest(actual, tso, (first, first + 9 * D), cfg)
    assert len(res.lhat_star) == 240 and res.lhat_star.start == first
    assert np.array_equal(res.lhat_star.values, res.lhat.values + res.ehat.values)
    assert [f.day for f in res.fit_log] == list(pd.date_range(first, periods=10, freq="D"))
    np.testing.assert_array_equal(res.lhat.values, tso.window(first, first + 10 * D).values)
    load_path, log_path = res.write(tmp_path)
    back = read_improved(load_path)
    np.testing.assert_array_equal(back.lhat_star.values, res.lhat_star.values)
    header = log_path.read_text().splitlines()[0].split(",")
    assert header[:8] == ["date", "phi0", "phi1", "phi24", "omega1", "omega24", "sigma2", "converged"]
    assert len(log_path.read_text().splitlines()) == 11


def test_day_consistency(synth):
    actual, tso, errors = synth
    cfg = RollingConfig(window_len=24 * 56)
    day = cfg.first_day(actual.start) + 4 * D
    out = improve_day(errors, tso, day, cfg)
    # re-deriving the 24 values from the logged params reproduces them
    end = cfg.window_end(day)
    prof = fe.estimate_profile(errors, end, cfg.window_len)
    rc = fe.deseasonalize(errors.window(end - cfg.window_len * H, end), prof)
    rc_hat = sarma.forecast(out.fit.params, sarma.state_from(out.fit.params, rc), 48)
    np.testing.assert_array_equal(out.ehat, (fe.seasonal_values(prof, end, 48) + rc_hat)[-24:])


def test_deterministic_and_parallel(synth):
    actual, tso, _ = synth
    cfg = RollingConfig(window_len=24 * 56)
    first = cfg.first_day(actual.start)
    a = run_backtest(actual, tso, (first, first + 5 * D), cfg)
    b = run_backtest(actual, tso, (first, first + 5 * D), cfg)
    c = run_backtest(actual, tso, (first, first + 5 * D), cfg, jobs=2)
    assert np.array_equal(a.lhat_star.values, b.lhat_star.values)
    assert np.array_equal(a.lhat_star.values, c.lhat_star.values)


def test_range_start_too_early(synth):
    actual, tso, _ = synth
    cfg = RollingConfig(window_len=24 * 56)
    with pytest.raises(AlignmentError):
        run_backtest(actual, tso, (cfg.first_day(actual.start) - D, cfg.first_day(actual.start)), cfg)


def test_fit_failure_falls_back_to_seasonal(synth, monkeypatch):
    actual, tso, errors = synth
    cfg = RollingConfig(window_len=24 * 56)
    day = cfg.first_day(actual.start)

    def boom(*a, **k):
        raise sarma.SarmaError("forced")

    monkeypatch.setattr(fe.sarma, "fit", boom)
    out = improve_day(errors, tso, day, cfg)
    assert out.fit.fallback and not out.fit.converged
    end = cfg.window_end(day)
    prof = fe.estimate_profile(errors, end, cfg.window_len)
    np.testing.assert_array_equal(out.ehat, fe.seasonal_values(prof, day, 24))


@pytest.mark.slow
def test_three_year_backtest_length():
    actual, tso, _ = synth_load(SynthConfig(seed=1, days=4 * 365 + 2))
    cfg = RollingConfig(window_len=8760)
    first = cfg.first_day(actual.start)
    res = run_backtest(actual, tso, (first, first + (3 * 365 - 1) * D), cfg)
    assert len(res.lhat_star) == 3 * 365 * 24
    assert len(res.fit_log) == 3 * 365


def test_window_lengths_give_distinct_mse(synth):
    actual, tso, _ = synth
    first = RollingConfig(window_len=8760).first_day(actual.start)
    days = (first, first + 29 * D)
    mses = []
    for w in (2160, 4368, 8760):
        res = run_backtest(actual, tso, days, RollingConfig(window_len=w))
        mses.append(error_report(res.lhat_star, actual.window(first, first + 30 * D)).mse)
    assert len(set(mses)) == 3
