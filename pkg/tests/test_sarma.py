import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from dayahead.data_io import InvariantError, TimeSeries
from dayahead.sarma import (
    BURN,
    SarmaError,
    SarmaParams,
    SarmaState,
    css,
    fit,
    forecast,
    full_residuals,
    sarma_residuals,
    simulate,
    state_from,
)

T0 = pd.Timestamp("2017-01-01")
TRUE = SarmaParams(0.0, 0.8, 0.5, -0.3, 0.2, 1.0)


def loop_residuals(p, rc):
    """Straight-line recursion with zero pre-sample rc and psi."""
    rc = list(rc)
    psi = []
    get = lambda seq, k: seq[k] if k >= 0 else 0.0
    for t in range(len(rc)):
        ar = (p.phi1 * get(rc, t - 1) + p.phi24 * get(rc, t - 24)
              + p.ar_cross_sign * p.phi1 * p.phi24 * get(rc, t - 25))
        ma = (p.omega1 * get(psi, t - 1) + p.omega24 * get(psi, t - 24)
              + p.omega1 * p.omega24 * get(psi, t - 25))
        psi.append(rc[t] - p.phi0 - ar - ma)
    return np.array(psi)


stationary_st = st.builds(
    SarmaParams,
    phi0=st.floats(-5, 5),
    phi1=st.floats(-0.95, 0.95), phi24=st.floats(-0.95, 0.95),
    omega1=st.floats(-0.95, 0.95), omega24=st.floats(-0.95, 0.95),
)

params_st = st.builds(
    SarmaParams,
    phi0=st.floats(-5, 5),
    phi1=st.floats(-0.95, 0.95), phi24=st.floats(-0.95, 0.95),
    omega1=st.floats(-0.95, 0.95), omega24=st.floats(-0.95, 0.95),
    ar_cross_sign=st.sampled_from([-1.0, 1.0]),
)


class TestResiduals:
    def test_zero_model_is_identity(self, rng):
        rc = rng.normal(size=100)
        psi = sarma_residuals(SarmaParams(), TimeSeries(T0, rc))
        np.testing.assert_array_equal(psi.values, rc[BURN:])
        assert psi.start == T0 + pd.Timedelta(hours=BURN)

    def test_hand_recursion(self):
        psi = full_residuals(SarmaParams(phi1=0.5), np.ones(60))
        assert psi[0] == 1.0
        np.testing.assert_allclose(psi[1:], 0.5, atol=1e-15)

    def test_simulate_then_invert(self):
        seeded = np.random.default_rng(3).normal(size=2000)
        rc = simulate(TRUE, seeded)
        psi = sarma_residuals(TRUE, TimeSeries(T0, rc))
        np.testing.assert_allclose(psi.values, seeded[BURN:], atol=1e-10)

    def test_too_short(self):
        with pytest.raises(SarmaError):
            sarma_residuals(TRUE, TimeSeries(T0, np.ones(25)))

    def test_lag25_signs(self):
        p = SarmaParams(0, 0.6, 0.4, 0.3, 0.2)
        assert p.ar_poly[25] == pytest.approx(0.6 * 0.4)  # moved to the left: -(-phi1*phi24)
        assert p.ma_poly[25] == pytest.approx(0.3 * 0.2)
        q = SarmaParams(0, 0.6, 0.4, 0.3, 0.2, ar_cross_sign=1.0)
        assert q.ar_poly[25] == pytest.approx(-0.24)


@given(params_st, st.integers(0, 2**31 - 1))
def test_residuals_match_loop_oracle(p, seed):
    rc = np.random.default_rng(seed).normal(size=120) * 10
    np.testing.assert_allclose(full_residuals(p, rc), loop_residuals(p, rc), rtol=1e-9, atol=1e-9)


@given(stationary_st, st.integers(0, 2**31 - 1))
def test_inversion_round_trip(p, seed):
    rc = np.random.default_rng(seed).normal(size=300)
    psi = full_residuals(p, rc)
    np.testing.assert_allclose(simulate(p, psi), rc, atol=1e-9)


class TestParams:
    @pytest.mark.parametrize("field", ["phi1", "phi24", "omega1", "omega24"])
    def test_unit_bound(self, field):
        with pytest.raises(InvariantError):
            SarmaParams(**{field: 1.0})

    def test_negative_variance(self):
        with pytest.raises(InvariantError):
            SarmaParams(sigma2=-1)

    def test_kv_round_trip(self, tmp_path):
        p = SarmaParams(1.25, 0.1, -0.2, 0.3, -0.4, 2.5)
        p.to_kv(tmp_path / "p.txt")
        assert SarmaParams.from_kv(tmp_path / "p.txt") == p

    def test_state_length(self):
        with pytest.raises(InvariantError):
            SarmaState(np.zeros(24), np.zeros(25))


class TestFit:
    def test_white_noise_coefficients_near_zero(self):
        # Literal check of each coefficient. On white noise the AR and MA factors
        # cancel along phi = -omega, so CSS has a near-flat ridge and this fails
        # for a correct minimizer; kept red on purpose (see decisions ledger).
        x = np.random.default_rng(11).normal(size=8760)
        f = fit(x)
        for name in ("phi1", "phi24", "omega1", "omega24"):
            assert abs(getattr(f.params, name)) <= 0.05, name

    @pytest.mark.parametrize("seed", range(5))
    def test_white_noise_identified_part_near_zero(self, seed):
        x = np.random.default_rng(seed).normal(size=8760)
        p = fit(x).params
        assert abs(p.phi1 + p.omega1) <= 0.05
        assert abs(p.phi24 + p.omega24) <= 0.05
        # the fitted model is observationally white: psi weights of the implied MA form
        impulse = simulate(p, np.r_[1.0, np.zeros(199)])
        assert np.max(np.abs(impulse[1:])) <= 0.05
        assert css(p, x) <= css(SarmaParams(phi0=x.mean()), x)

    def test_recovers_truth_single_seed(self):
        x = simulate(TRUE, np.random.default_rng(5).normal(size=8760))
        f = fit(x)
        assert f.converged
        for name in ("phi1", "phi24", "omega1", "omega24"):
            assert getattr(f.params, name) == pytest.approx(getattr(TRUE, name), abs=0.06)
        assert f.params.sigma2 == pytest.approx(1.0, rel=0.05)

    def test_sigma2_definition(self):
        x = simulate(TRUE, np.random.default_rng(6).normal(size=2000))
        f = fit(x)
        assert f.params.sigma2 == pytest.approx(css(f.params, x) / (len(x) - 25), rel=1e-12)

    def test_zero_series_degenerate(self):
        f = fit(np.zeros(1000))
        assert "degenerate" in f.flags
        p = f.params
        assert (p.phi0, p.phi1, p.phi24, p.omega1, p.omega24, p.sigma2) == (0, 0, 0, 0, 0, 0)

    def test_constant_series_intercept(self):
        f = fit(np.full(800, 7.5))
        assert f.params.phi0 == 7.5 and "degenerate" in f.flags

    def test_length_floor_and_missing(self):
        with pytest.raises(SarmaError):
            fit(np.ones(719))
        x = np.random.default_rng(0).normal(size=900)
        x[5] = np.nan
        with pytest.raises(SarmaError):
            fit(x)

    def test_deterministic(self):
        x = simulate(TRUE, np.random.default_rng(9).normal(size=3000))
        assert fit(x).params == fit(x).params

    def test_boundary_flag(self):
        # random walk pushes phi1 to the box edge
        x = np.cumsum(np.random.default_rng(2).normal(size=3000))
        f = fit(x)
        assert abs(f.params.phi1) <= 0.999
        assert "boundary:phi1" in f.flags


@given(st.integers(0, 2**31 - 1))
def test_fit_beats_truth_in_sample(seed):
    x = simulate(TRUE, np.random.default_rng(seed).normal(size=1500))
    f = fit(x)
    assert css(f.params, x) <= css(TRUE, x) * (1 + 1e-9)
    for name in ("phi1", "phi24", "omega1", "omega24"):
        assert abs(getattr(f.params, name)) < 1


class TestForecast:
    def test_constant_model(self):
        st_ = SarmaState(np.zeros(25), np.zeros(25))
        np.testing.assert_array_equal(forecast(SarmaParams(phi0=3.0), st_, 10), np.full(10, 3.0))

    def test_ar1_hand(self):
        rc = np.zeros(25)
        rc[-1] = 2.0
        out = forecast(SarmaParams(phi1=0.5), SarmaState(rc, np.zeros(25)), 5)
        np.testing.assert_allclose(out, [1.0, 0.5, 0.25, 0.125, 0.0625])

    def test_decay(self):
        rc = np.zeros(25)
        rc[-1] = 2.0
        out = forecast(SarmaParams(phi1=0.5), SarmaState(rc, np.zeros(25)), 200)
        assert abs(out[-1]) < 1e-3 * abs(out[0])

    def test_horizon_precondition(self):
        with pytest.raises(SarmaError):
            forecast(TRUE, SarmaState(np.zeros(25), np.zeros(25)), 0)

    def test_matches_expansion_oracle(self):
        # Independent oracle: extend the observed series with psi = 0 and run the
        # filtering form of the model; the appended values are the forecasts.
        p = SarmaParams(0.4, 0.8, 0.5, -0.3, 0.2)
        psi = np.random.default_rng(21).normal(size=500)
        rc = simulate(p, psi)
        fc = forecast(p, state_from(p, rc), 48)
        resid = full_residuals(p, rc)
        ext = simulate(p, np.concatenate([resid, np.zeros(48)]))
        np.testing.assert_allclose(fc, ext[-48:], atol=1e-10)

    def test_state_from_tail(self):
        rc = np.random.default_rng(1).normal(size=100)
        s = state_from(TRUE, rc)
        np.testing.assert_array_equal(s.rc, rc[-25:])
        np.testing.assert_allclose(s.psi, full_residuals(TRUE, rc)[-25:])


@given(stationary_st, st.integers(0, 2**31 - 1))
def test_forecast_decays_for_stationary_models(p, seed):
    from dataclasses import replace
    p = replace(p, phi0=0.0)
    rc = np.random.default_rng(seed).normal(size=25)
    psi = np.random.default_rng(seed + 1).normal(size=25)
    out = forecast(p, SarmaState(rc, psi), 4000)
    assert abs(out[-1]) <= 1e-3 * max(abs(out[0]), 1e-12) or abs(out[-1]) < 1e-12
