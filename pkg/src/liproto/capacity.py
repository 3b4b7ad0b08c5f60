"""BI-AWGN (BPSK) channel capacity, solved numerically.

Kept deliberately independent of the J-function table: the capacity
integral is evaluated directly over the channel output density, so
threshold gaps reported against it cross-check the EXIT numerics through
a second route.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import quad

_LN2 = float(np.log(2.0))


def biawgn_mi(sigma: float) -> float:
    """Mutual information of BPSK over AWGN with noise std ``sigma``.

    Uses I = 1 - E_{y ~ N(1, sigma^2)}[ log2(1 + e^(-2y/sigma^2)) ];
    the expectation is over the +1 symbol, which suffices by symmetry.
    """
    sigma = float(sigma)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    s2 = sigma * sigma

    def integrand(y: float) -> float:
        gauss = np.exp(-((y - 1.0) ** 2) / (2.0 * s2)) / np.sqrt(2.0 * np.pi * s2)
        return gauss * np.logaddexp(0.0, -2.0 * y / s2) / _LN2

    val, _ = quad(integrand, 1.0 - 42.0 * sigma, 1.0 + 42.0 * sigma,
                  epsabs=1e-13, epsrel=1e-12, limit=500, points=[0.0, 1.0])
    return float(min(max(1.0 - val, 0.0), 1.0))


def sigma_for_ebn0(ebn0_db: float, rate: float) -> float:
    """Noise std for unit-energy BPSK at the given Eb/N0 (dB) and code rate."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    return float(np.sqrt(1.0 / (2.0 * rate * 10.0 ** (ebn0_db / 10.0))))


@lru_cache(maxsize=None)
def capacity_ebn0_db(rate: float, tol_db: float = 1e-4) -> float:
    """Smallest Eb/N0 (dB) at which BI-AWGN capacity reaches ``rate``.

    Bisection on a bracket wide enough for any code rate in (0, 1).
    For rate 1/2 this evaluates to ~0.187 dB.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"rate must be in (0, 1), got {rate}")
    lo, hi = -3.0, 20.0
    if biawgn_mi(sigma_for_ebn0(hi, rate)) < rate:
        raise ValueError(f"capacity bracket too small for rate {rate}")
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if biawgn_mi(sigma_for_ebn0(mid, rate)) >= rate:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
