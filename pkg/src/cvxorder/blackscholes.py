"""Zero-rate Black-Scholes closed forms, used as pricing oracles."""

from __future__ import annotations

import math

from .convexfns import norm_cdf


def bs_call(s0: float, strike: float, T: float, sigma: float) -> float:
    """Call value under dS = sigma S dW (zero rate, zero dividend)."""
    if T <= 0 or sigma <= 0:
        return max(s0 - strike, 0.0)
    if strike <= 0:
        return s0 - strike
    st = sigma * math.sqrt(T)
    d1 = (math.log(s0 / strike) + 0.5 * st * st) / st
    return s0 * norm_cdf(d1) - strike * norm_cdf(d1 - st)


def bs_put(s0: float, strike: float, T: float, sigma: float) -> float:
    """Put value by parity: P = C - S + K at zero rate."""
    return bs_call(s0, strike, T, sigma) - s0 + strike
