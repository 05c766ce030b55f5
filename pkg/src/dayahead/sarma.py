"""SARMA(1,1)x(1,1)_24 model for the deseasonalised forecast error.

    rc_t = phi0 + phi1 rc_{t-1} + phi24 rc_{t-24} + s phi1 phi24 rc_{t-25}
           + omega1 psi_{t-1} + omega24 psi_{t-24} + omega1 omega24 psi_{t-25} + psi_t

with ``s = ar_cross_sign`` (default -1). Estimation is by conditional sum of
squares with pre-sample values of ``rc`` and ``psi`` set to zero; the first 25
residuals are burn-in and excluded from the objective.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .data_io import DataError, InvariantError, TimeSeries

log = logging.getLogger(__name__)

BURN = 25
MIN_FIT_LENGTH = 30 * 24
COEF_BOUND = 0.999
COEF_NAMES = ("phi1", "phi24", "omega1", "omega24")


class SarmaError(DataError):
    pass


@dataclass(frozen=True)
class SarmaParams:
    phi0: float = 0.0
    phi1: float = 0.0
    phi24: float = 0.0
    omega1: float = 0.0
    omega24: float = 0.0
    sigma2: float = 0.0
    ar_cross_sign: float = -1.0

    def __post_init__(self):
        for name in ("phi0", *COEF_NAMES, "sigma2", "ar_cross_sign"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in COEF_NAMES:
            if not abs(getattr(self, name)) < 1.0:
                raise InvariantError(f"{name}={getattr(self, name)} violates |.| < 1")
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise InvariantError(f"sigma2={self.sigma2} must be finite and non-negative")
        if self.ar_cross_sign not in (-1.0, 1.0):
            raise InvariantError("ar_cross_sign must be -1 or +1")

    @property
    def ar_poly(self) -> np.ndarray:
        """Coefficients a of a(B) rc_t = phi0 + m(B) psi_t, a[0] = 1."""
        a = np.zeros(BURN + 1)
        a[0] = 1.0
        a[1] = -self.phi1
        a[24] = -self.phi24
        a[25] = -self.ar_cross_sign * self.phi1 * self.phi24
        return a

    @property
    def ma_poly(self) -> np.ndarray:
        m = np.zeros(BURN + 1)
        m[0] = 1.0
        m[1] = self.omega1
        m[24] = self.omega24
        m[25] = self.omega1 * self.omega24
        return m

    def to_kv(self, path) -> None:
        lines = [f"{k}={v!r}" for k, v in asdict(self).items()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_kv(cls, path) -> "SarmaParams":
        kv = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                k, v = line.split("=", 1)
                kv[k.strip()] = float(v)
        return cls(**kv)


@dataclass(frozen=True)
class SarmaState:
    """Last 25 values of rc and psi, most recent last."""

    rc: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        rc, psi = np.asarray(self.rc, float), np.asarray(self.psi, float)
        if rc.shape != (BURN,) or psi.shape != (BURN,):
            raise InvariantError("SarmaState needs exactly 25 rc and 25 psi values")
        object.__setattr__(self, "rc", rc)
        object.__setattr__(self, "psi", psi)


@dataclass(frozen=True)
class SarmaFit:
    params: SarmaParams
    converged: bool
    css: float
    n_obs: int
    n_iter: int = 0
    flags: tuple[str, ...] = field(default_factory=tuple)


def _residuals(params: SarmaParams, rc: np.ndarray) -> np.ndarray:
    u = lfilter(params.ar_poly, [1.0], rc) - params.phi0
    return lfilter([1.0], params.ma_poly, u)


def sarma_residuals(params: SarmaParams, rc: TimeSeries) -> TimeSeries:
    """Conditional innovations psi_t for positions 26.. of ``rc``."""
    if len(rc) <= BURN:
        raise SarmaError(f"series of length {len(rc)} too short for residuals (need > {BURN})")
    psi = _residuals(params, rc.values)
    return TimeSeries(rc.index[BURN], psi[BURN:], rc.unit)


def full_residuals(params: SarmaParams, rc: np.ndarray) -> np.ndarray:
    """Residuals for every position, burn-in included."""
    return _residuals(params, np.asarray(rc, dtype=float))


def simulate(params: SarmaParams, psi: np.ndarray) -> np.ndarray:
    """Generate rc from innovations ``psi`` with zero pre-sample values."""
    x = params.phi0 + lfilter(params.ma_poly, [1.0], np.asarray(psi, dtype=float))
    return lfilter([1.0], params.ar_poly, x)


def _acf(x: np.ndarray, lag: int) -> float:
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0 or lag >= x.size:
        return 0.0
    return float(x[lag:] @ x[:-lag]) / denom


def _css_and_grad(theta, z, sign):
    phi0, phi1, phi24, om1, om24 = theta
    p = SarmaParams(phi0, phi1, phi24, om1, om24, ar_cross_sign=sign)
    ma = p.ma_poly
    psi = _residuals(p, z)
    # Sensitivities of the zero-initialised recursion.
    z1 = np.concatenate(([0.0], z[:-1]))
    z24 = np.concatenate((np.zeros(24), z[:-24]))
    z25 = np.concatenate((np.zeros(25), z[:-25]))
    s1 = np.concatenate(([0.0], psi[:-1]))
    s24 = np.concatenate((np.zeros(24), psi[:-24]))
    s25 = np.concatenate((np.zeros(25), psi[:-25]))
    du = np.stack([
        -np.ones_like(z),
        -z1 - sign * phi24 * z25,
        -z24 - sign * phi1 * z25,
        -(s1 + om24 * s25),
        -(s24 + om1 * s25),
    ])
    dpsi = lfilter([1.0], ma, du, axis=1)
    e = psi[BURN:]
    n = e.size
    return float(e @ e) / n, 2.0 * (dpsi[:, BURN:] @ e) / n


def css(params: SarmaParams, rc: np.ndarray) -> float:
    """Conditional sum of squared residuals over positions 26..n."""
    e = _residuals(params, np.asarray(rc, dtype=float))[BURN:]
    return float(e @ e)


def fit(rc: TimeSeries | np.ndarray, ar_cross_sign: float = -1.0, maxiter: int = 500) -> SarmaFit:
    """Conditional-sum-of-squares fit with AR/MA coefficients boxed to |.| <= 0.999."""
    x = np.asarray(rc.values if isinstance(rc, TimeSeries) else rc, dtype=float)
    if x.size < MIN_FIT_LENGTH:
        raise SarmaError(f"series of length {x.size} below fitting floor {MIN_FIT_LENGTH}")
    if np.isnan(x).any():
        raise SarmaError("series contains missing values")
    n_obs = x.size - BURN
    mean = float(x.mean())
    scale = float(x.std())
    if scale <= 1e-9 * max(1.0, abs(mean)):
        params = SarmaParams(phi0=mean, ar_cross_sign=ar_cross_sign)
        return SarmaFit(params, True, css(params, x), n_obs, 0, ("degenerate",))

    z = x / scale
    start = [mean / scale]
    for lag in (1, 24, 1, 24):
        start.append(0.1 * float(np.sign(_acf(z, lag))))
    # order of start: phi0, phi1, phi24, omega1, omega24
    bounds = [(None, None)] + [(-COEF_BOUND, COEF_BOUND)] * 4
    res = minimize(
        _css_and_grad, np.array(start), args=(z, ar_cross_sign), jac=True,
        method="L-BFGS-B", bounds=bounds,
        options={"maxiter": maxiter, "ftol": 1e-10, "gtol": 1e-9},
    )
    theta = np.clip(res.x, [-np.inf] + [-COEF_BOUND] * 4, [np.inf] + [COEF_BOUND] * 4)
    params = SarmaParams(theta[0] * scale, *theta[1:], ar_cross_sign=ar_cross_sign)
    ssr = css(params, x)
    params = replace(params, sigma2=ssr / n_obs)
    flags = []
    for name, value in zip(COEF_NAMES, theta[1:]):
        if abs(value) >= COEF_BOUND - 1e-6:
            flags.append(f"boundary:{name}")
    if not res.success:
        flags.append("not-converged")
        log.warning("SARMA fit did not converge: %s", res.message)
    return SarmaFit(params, bool(res.success), ssr, n_obs, int(res.nit), tuple(flags))


def state_from(params: SarmaParams, rc: TimeSeries | np.ndarray) -> SarmaState:
    """Forecast state after filtering the whole of ``rc``."""
    x = np.asarray(rc.values if isinstance(rc, TimeSeries) else rc, dtype=float)
    if x.size < BURN:
        raise SarmaError("need at least 25 observations to build a forecast state")
    psi = _residuals(params, x)
    return SarmaState(x[-BURN:], psi[-BURN:])


def forecast(params: SarmaParams, state: SarmaState, horizon: int) -> np.ndarray:
    """Conditional-expectation forecasts for 1..horizon steps (future psi = 0)."""
    if horizon < 1:
        raise SarmaError("horizon must be >= 1")
    p = params
    cross = p.ar_cross_sign * p.phi1 * p.phi24
    ma_cross = p.omega1 * p.omega24
    rc = list(state.rc)
    psi = list(state.psi)
    out = np.empty(horizon)
    for k in range(horizon):
        y = (p.phi0 + p.phi1 * rc[-1] + p.phi24 * rc[-24] + cross * rc[-25]
             + p.omega1 * psi[-1] + p.omega24 * psi[-24] + ma_cross * psi[-25])
        out[k] = y
        rc.append(y)
        psi.append(0.0)
    return out
