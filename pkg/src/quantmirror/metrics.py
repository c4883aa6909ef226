"""Error metrics, rate-exponent fitting and schedule condition checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHECK_HORIZONS = (1_000, 10_000, 100_000)


@dataclass(frozen=True)
class RelativeError:
    per_agent: np.ndarray
    average: np.ndarray
    absolute: bool


def relative_error(record, optimal_value=None):
    """Per-agent and network-averaged ``|f(x_hat) - f*| / |f*|`` for every ``T``.

    The network-averaged form compares ``(1/N) sum_l f(x_hat_l(T))`` with
    ``f*``.  When ``f* == 0`` the absolute error is returned instead and
    ``absolute`` is set.
    """
    f_star = record.meta["optimal_value"] if optimal_value is None else optimal_value
    f_hat = np.asarray(record.f_hat if hasattr(record, "f_hat") else record, dtype=np.float64)
    scale = abs(f_star)
    absolute = scale == 0.0
    if absolute:
        scale = 1.0
    per_agent = np.abs(f_hat - f_star) / scale
    average = np.abs(f_hat.mean(axis=-1) - f_star) / scale
    return RelativeError(per_agent, average, absolute)


class RateFitError(ValueError):
    """Raised when the error tail does not decrease and no exponent can be fitted."""


@dataclass(frozen=True)
class RateFit:
    exponent: float
    ci_low: float
    ci_high: float
    residual: float
    t_min: int
    t_max: int

    def as_dict(self):
        return {
            "exponent": self.exponent, "ci_low": self.ci_low, "ci_high": self.ci_high,
            "residual": self.residual, "t_min": self.t_min, "t_max": self.t_max,
        }


def fit_rate_exponent(errors, t_min=None, ts=None):
    """Fit ``e(T) ~ c / T^rho`` by least squares on the log-log tail.

    Parameters
    ----------
    errors : array_like
        ``e(T)`` for ``T = 1 .. len(errors)`` (or for the given ``ts``).
    t_min : int, optional
        First ``T`` of the fitting window, default ``T_max // 10``.

    Returns
    -------
    RateFit
        ``exponent`` is ``-slope``; the interval is a 95% normal-approximation
        band from the slope standard error; ``residual`` is the RMS of the
        log-residuals.
    """
    e = np.asarray(errors, dtype=np.float64)
    ts = np.arange(1, len(e) + 1) if ts is None else np.asarray(ts, dtype=np.float64)
    t_max = int(ts[-1])
    t_min = max(1, t_max // 10) if t_min is None else int(t_min)
    if t_max < 10 * t_min:
        raise ValueError("fitting window must span at least a decade (T_max / t_min >= 10)")
    mask = ts >= t_min
    tail_t, tail_e = ts[mask], e[mask]
    if np.any(tail_e <= 0) or not np.all(np.isfinite(tail_e)):
        raise RateFitError("error tail contains nonpositive or non-finite values")
    lx, ly = np.log(tail_t), np.log(tail_e)
    slope, intercept = np.polyfit(lx, ly, 1)
    if slope >= 0:
        raise RateFitError(f"error tail is non-decreasing (log-log slope {slope:.3g})")
    resid = ly - (slope * lx + intercept)
    dof = max(len(lx) - 2, 1)
    se = np.sqrt(resid @ resid / dof / np.sum((lx - lx.mean()) ** 2))
    rho = -float(slope)
    return RateFit(rho, rho - 1.96 * float(se), rho + 1.96 * float(se), float(np.sqrt(np.mean(resid**2))), t_min, t_max)


@dataclass(frozen=True)
class ConditionReport:
    values: dict
    verdicts: dict
    shifted_agrees: bool

    @property
    def passed(self):
        return all(self.verdicts.values())


def _decreasing_to_zero(vals, rel_drop=0.9):
    vals = np.asarray(vals)
    return bool(np.all(np.diff(vals) < 0) and vals[-1] < rel_drop * vals[0])


def condition_check(alpha, beta, tau=0, horizons=CHECK_HORIZONS):
    """Numerical verdicts on the convergence conditions for given schedules.

    ``alpha`` and ``beta`` are vectorized callables of ``t``.  Evaluates
    ``1/(T alpha(T + tau))``, ``(1/T) sum_{t<T} alpha(t)`` and
    ``(1/T) sum_{t<T} beta(t)`` at each horizon and calls a condition
    satisfied when the values decrease strictly and lose at least 10% over
    the horizons.  The delay-free forms (``tau = 0``) are evaluated as well
    and must give the same verdicts.
    """
    horizons = tuple(int(h) for h in horizons)
    ts = np.arange(max(horizons), dtype=np.float64)
    a_cum = np.cumsum(alpha(ts))
    b_cum = np.cumsum(beta(ts))
    H = np.array(horizons, dtype=np.float64)
    values = {
        "inv_T_alpha": [float(v) for v in 1.0 / (H * alpha(H + tau))],
        "inv_T_alpha_no_delay": [float(v) for v in 1.0 / (H * alpha(H))],
        "mean_alpha": [float(a_cum[h - 1] / h) for h in horizons],
        "mean_beta": [float(b_cum[h - 1] / h) for h in horizons],
    }
    verdicts = {
        "inv_T_alpha": _decreasing_to_zero(values["inv_T_alpha"]),
        "mean_alpha": _decreasing_to_zero(values["mean_alpha"]),
        "mean_beta": _decreasing_to_zero(values["mean_beta"]),
    }
    agrees = verdicts["inv_T_alpha"] == _decreasing_to_zero(values["inv_T_alpha_no_delay"])
    return ConditionReport(values, verdicts, agrees)
