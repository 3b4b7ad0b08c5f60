"""Mutual-information transfer function of consistent Gaussian LLR messages.

A binary-input Gaussian LLR message with mean ``mu`` and variance ``2*mu``
(the symmetric parametrization used for EXIT analysis on the BI-AWGN
channel) carries mutual information

    I(mu) = 1 - E[ log2(1 + exp(-tau)) ],    tau ~ N(mu, 2*mu).

``j_fun`` evaluates I(mu), ``j_inv`` its inverse.

Evaluation strategy
-------------------
A 4096-knot golden table is computed once by adaptive quadrature
(``j_fun_quad``) and shipped as package data; ``j_fun`` interpolates it
with a monotone cubic (PCHIP).  ``j_inv`` starts from the inverse-table
interpolant and refines with Newton steps on the *forward* interpolant,
so the round trip ``j_fun(j_inv(I)) == I`` holds to interpolant
precision, not just table precision.  The knot layout concentrates
points where the third derivative is large (small and mid mu); the
audited interpolation error against fresh quadrature stays below 1e-9.

Saturation: MI values ``I >= 1 - 1e-12`` have no usefully
representable mean in float64.  ``j_inv`` clamps them to ``MU_CAP``;
callers that care (the EXIT engine) count clamped entries via
``saturation_count`` so silent saturation never poisons a threshold
search.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

_LN2 = float(np.log(2.0))

#: Mean assigned to saturated MI inputs (I >= MI_SATURATION).
MU_CAP = 1.0e4
#: MI at or above this value is treated as saturated by ``j_inv``.
MI_SATURATION = 1.0 - 1e-12
#: Largest tabulated mean; j_fun returns exactly 1.0 beyond it
#: (1 - I(200) is far below float64 resolution near 1).
MU_TABLE_MAX = 200.0
TABLE_SIZE = 4096

_TABLE_FILENAME = "j_table.npz"


def j_fun_quad(mu: float) -> float:
    """Quadrature oracle for I(mu); independent of the interpolation table.

    Integrates the Gaussian density of mean ``mu`` and variance ``2*mu``
    against log2(1 + e^-tau) over mu +/- 42 standard deviations.  The
    softplus factor is evaluated through logaddexp so both tails are
    stable.
    """
    mu = float(mu)
    if mu < 0:
        raise ValueError(f"mean must be non-negative, got {mu}")
    if mu == 0.0:
        return 0.0
    sd = np.sqrt(2.0 * mu)

    def integrand(tau: float) -> float:
        gauss = np.exp(-((tau - mu) ** 2) / (4.0 * mu)) / np.sqrt(4.0 * np.pi * mu)
        return gauss * np.logaddexp(0.0, -tau) / _LN2

    lo = mu - 42.0 * sd
    hi = mu + 42.0 * sd
    pts = [p for p in (0.0, mu) if lo < p < hi]
    val, _ = quad(integrand, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=800, points=pts)
    return float(min(max(1.0 - val, 0.0), 1.0))


def table_knots() -> np.ndarray:
    """Knot layout of the golden table.

    Log-spaced segments with per-band density chosen so that the PCHIP
    error tracks below 1e-9: the integrand's third derivative blows up
    like a half-integer power towards mu -> 0 and the absolute knot
    spacing grows with mu, so the bands [0.03, 0.3] and [1.5, 20] need
    the most knots.
    """
    knots = np.concatenate(
        [
            [0.0],
            np.logspace(-6, np.log10(0.03), 641)[:-1],
            np.logspace(np.log10(0.03), np.log10(0.3), 401)[:-1],
            np.logspace(np.log10(0.3), np.log10(1.5), 481)[:-1],
            np.logspace(np.log10(1.5), np.log10(20.0), 1951)[:-1],
            np.logspace(np.log10(20.0), np.log10(MU_TABLE_MAX), 625),
        ]
    )
    assert knots.shape == (TABLE_SIZE,)
    assert np.all(np.diff(knots) > 0)
    return knots


def build_j_table() -> tuple[np.ndarray, np.ndarray]:
    """Run the quadrature oracle at every knot (takes a few seconds)."""
    mu = table_knots()
    mi = np.array([j_fun_quad(m) for m in mu])
    if np.any(np.diff(mi) < 0):
        raise RuntimeError("golden table is not monotone; quadrature failure")
    return mu, mi


def default_table_path() -> Path:
    return Path(__file__).resolve().parent / "data" / _TABLE_FILENAME


def write_j_table(path: Path | None = None) -> Path:
    """Regenerate the golden table file (used once; the file is shipped)."""
    path = default_table_path() if path is None else Path(path)
    mu, mi = build_j_table()
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, mu=mu, mi=mi)
    return path


class _Interpolants:
    """Lazily constructed forward/inverse interpolants of the golden table."""

    def __init__(self) -> None:
        path = default_table_path()
        if not path.exists():
            raise FileNotFoundError(
                f"golden J table missing at {path}; run `python -m liproto.jfun` to regenerate"
            )
        with np.load(path) as data:
            mu = data["mu"]
            mi = data["mi"]
        if mu.shape != (TABLE_SIZE,) or np.any(np.diff(mu) <= 0):
            raise ValueError("corrupt golden J table (knot grid)")
        self.forward = PchipInterpolator(mu, mi, extrapolate=False)
        self.forward_d = self.forward.derivative()
        # Strictly increasing prefix: beyond it 1 - I drops under float64
        # resolution and the map is not invertible numerically.
        cut = int(np.argmin(np.diff(mi) > 0)) or len(mi) - 1
        if np.all(np.diff(mi) > 0):
            cut = len(mi) - 1
        self.inv_top_mu = float(mu[cut])
        self.inv_top_mi = float(mi[cut])
        self.inverse = PchipInterpolator(mi[: cut + 1], mu[: cut + 1], extrapolate=False)


_INTERP: _Interpolants | None = None


def _interp() -> _Interpolants:
    global _INTERP
    if _INTERP is None:
        _INTERP = _Interpolants()
    return _INTERP


def j_fun(mu):
    """Mutual information of a consistent Gaussian message with mean ``mu``.

    Accepts scalars or arrays; strictly increasing on the tabulated
    range, exactly 0 at 0, exactly 1.0 for ``mu >= MU_TABLE_MAX``.
    Raises ValueError on negative input.
    """
    arr = np.asarray(mu, dtype=float)
    if arr.size and (np.any(arr < 0) or not np.all(np.isfinite(arr))):
        raise ValueError("j_fun requires finite non-negative means")
    it = _interp()
    out = np.ones_like(arr)
    inside = arr < MU_TABLE_MAX
    if np.any(inside):
        out[inside] = np.clip(it.forward(arr[inside]), 0.0, 1.0)
    if arr.ndim == 0:
        return float(out)
    return out


def j_inv(mi):
    """Mean of the consistent Gaussian message carrying mutual information ``mi``.

    Inputs in ``[MI_SATURATION, 1]`` are clamped to ``MU_CAP`` (see module
    docstring); inputs outside ``[0, 1]`` raise ValueError.
    """
    arr = np.asarray(mi, dtype=float)
    if arr.size and (np.any(arr < 0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr))):
        raise ValueError("j_inv requires mutual information in [0, 1]")
    it = _interp()
    out = np.full_like(arr, MU_CAP)
    active = arr < MI_SATURATION
    if np.any(active):
        x = np.clip(arr[active], 0.0, it.inv_top_mi)
        mu = it.inverse(x)
        # Newton refinement against the forward interpolant.
        for _ in range(3):
            d = it.forward_d(mu)
            f = it.forward(mu) - x
            step = np.where(d > 0, f / np.where(d > 0, d, 1.0), 0.0)
            mu = np.clip(mu - step, 0.0, it.inv_top_mu)
        out[active] = mu
    if arr.ndim == 0:
        return float(out)
    return out


def saturation_count(mi) -> int:
    """Number of entries ``j_inv`` would clamp to ``MU_CAP``."""
    arr = np.asarray(mi, dtype=float)
    return int(np.count_nonzero(arr >= MI_SATURATION))


if __name__ == "__main__":
    out = write_j_table()
    print(f"wrote {out}")
