"""Bessel functions of real order and log-log power-law regression.

Only what the propagators need is provided: J_nu(x) for real nu >= 0 and
x >= 0, the modified function on the negative imaginary axis
I_nu(-ix) = exp(-i pi nu / 2) J_nu(x), and batched "ladders"
J_{nu0 + k}(x), k = 0..count-1, which dominate the cost of the partial-wave
sums.

Evaluation regimes
------------------
* ascending series when x^2/4 <= nu + 1 (terms decrease from the start, so
  there is no cancellation);
* Hankel asymptotic expansion when x > max(30, nu^2);
* Miller's downward recurrence otherwise, normalised with the Neumann sum
  (x/2)^nu0 = sum_k (nu0 + 2k) Gamma(nu0 + k) / k! J_{nu0+2k}(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit

__all__ = [
    "PowerLawFit",
    "bessel_j",
    "bessel_j_ladder",
    "bessel_i_neg_imag",
    "fit_power_law",
    "hausdorff_from_exponent",
]

_RESCALE_AT = 1e250
_RESCALE_BY = 1e-250
_LOG2 = math.log(2.0)


def _miller_start(top, x):
    big = max(top, x)
    return int(big + 20.0 + math.sqrt(160.0 * big)) + 2


# ---------------------------------------------------------------------------
# scalar regimes


@njit
def _series(nu, x):
    q = -0.25 * x * x
    term = 1.0
    total = 1.0
    k = 0
    while k < 1000:
        k += 1
        term *= q / (k * (nu + k))
        total += term
        if abs(term) <= 1e-17 * abs(total):
            break
    if nu == 0.0:
        return total  # avoids 0 * log(0) when x/2 underflows
    log_pre = nu * (math.log(x) - _LOG2) - math.lgamma(nu + 1.0)
    if log_pre < -745.0:
        return 0.0
    return total * math.exp(log_pre)


@njit
def _hankel(nu, x):
    mu4 = 4.0 * nu * nu
    p = 1.0
    q = 0.0
    term = 1.0
    prev = 1.0
    k = 0
    while k < 200:
        k += 1
        odd = 2 * k - 1
        term *= (mu4 - odd * odd) / (8.0 * k * x)
        if abs(term) > prev:
            break
        prev = abs(term)
        r = k % 4
        if r == 1:
            q += term
        elif r == 2:
            p -= term
        elif r == 3:
            q -= term
        else:
            p += term
        if abs(term) < 1e-17:
            break
    shift = (0.5 * nu + 0.25) * math.pi
    cos_chi = math.cos(x) * math.cos(shift) + math.sin(x) * math.sin(shift)
    sin_chi = math.sin(x) * math.cos(shift) - math.cos(x) * math.sin(shift)
    return math.sqrt(2.0 / (math.pi * x)) * (p * cos_chi - q * sin_chi)


# ---------------------------------------------------------------------------
# Miller ladders: out[b, k] = J_{nu0[b] + k}(x[b]), x[b] > 0, 0 <= nu0[b] <= 1


def _norm_coeffs(nu0, kmax):
    # c_0 = Gamma(nu0 + 1); c_k = (nu0 + 2k) Gamma(nu0 + k) / k!
    c = np.empty(kmax + 1)
    c[0] = math.gamma(nu0 + 1.0)
    for k in range(1, kmax + 1):
        c[k] = (nu0 + 2 * k) * math.exp(math.lgamma(nu0 + k) - math.lgamma(k + 1.0))
    return c


def _starts(nu0, x, need):
    return np.array([_miller_start(n - 1 + v, xv) for v, xv, n in zip(nu0, x, need)], dtype=np.int64)


def _ladders_numpy(nu0, x, count, need):
    nu0 = np.asarray(nu0, dtype=float)
    x = np.asarray(x, dtype=float)
    nb = nu0.size
    out = np.zeros((nb, count))
    if nb == 0:
        return out
    # each row starts its own recurrence, so a row never depends on its batch
    starts = _starts(nu0, x, need)
    top = int(starts.max())
    coeffs = np.stack([_norm_coeffs(v, top // 2 + 1) for v in nu0])
    j_up = np.zeros(nb)
    j_here = np.full(nb, 1e-30)
    norm = np.zeros(nb)
    rows = np.arange(nb)
    for n in range(top, -1, -1):
        live = n <= starts
        if n < count:
            out[:, n] = np.where(live, j_here, 0.0)
        if n % 2 == 0:
            norm += np.where(live, coeffs[:, n // 2] * j_here, 0.0)
        if n == 0:
            break
        j_down = 2.0 * (nu0 + n) / x * j_here - j_up
        j_up = np.where(live, j_here, j_up)
        j_here = np.where(live, j_down, j_here)
        big = np.abs(j_here) > _RESCALE_AT
        if big.any():
            idx = rows[big]
            j_here[idx] *= _RESCALE_BY
            j_up[idx] *= _RESCALE_BY
            norm[idx] *= _RESCALE_BY
            out[idx, :] *= _RESCALE_BY
    log_half = np.log(x) - _LOG2
    scale = np.where(nu0 == 0.0, 1.0, np.exp(nu0 * log_half)) / norm
    return out * scale[:, None]


@njit
def _ladder_into(nu0, x, count, start, out_row):
    j_up = 0.0
    j_here = 1e-30
    norm = 0.0
    for n in range(start, -1, -1):
        if n < count:
            out_row[n] = j_here
        if n % 2 == 0:
            k = n // 2
            if k == 0:
                c = math.gamma(nu0 + 1.0)
            else:
                c = (nu0 + 2 * k) * math.exp(math.lgamma(nu0 + k) - math.lgamma(k + 1.0))
            norm += c * j_here
        if n == 0:
            break
        j_down = 2.0 * (nu0 + n) / x * j_here - j_up
        j_up = j_here
        j_here = j_down
        if abs(j_here) > 1e250:
            j_here *= 1e-250
            j_up *= 1e-250
            norm *= 1e-250
            for i in range(min(count, start + 1)):
                out_row[i] *= 1e-250
    if nu0 == 0.0:
        scale = 1.0 / norm
    else:
        scale = math.exp(nu0 * (math.log(x) - _LOG2)) / norm
    for i in range(count):
        out_row[i] *= scale


@njit
def _ladders_numba_impl(nu0, x, count, starts):
    nb = nu0.size
    out = np.zeros((nb, count))
    for b in range(nb):
        _ladder_into(nu0[b], x[b], count, starts[b], out[b])
    return out


def _ladders_numba(nu0, x, count, need):
    nu0 = np.ascontiguousarray(nu0, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _ladders_numba_impl(nu0, x, int(count), _starts(nu0, x, need))


if HAVE_NUMBA:
    _ladders_fast = _ladders_numba
else:  # pragma: no cover
    _ladders_fast = _ladders_numpy

_ladders = _ladders_fast if USE_NUMBA else _ladders_numpy


def bessel_j_ladder(nu0, x, count, need=None):
    """Return J_{nu0 + k}(x) for k = 0..count-1.

    ``nu0`` and ``x`` may be scalars or equal-length 1-D arrays; the result
    has shape ``(count,)`` or ``(len(nu0), count)`` accordingly. Each
    ``nu0`` must lie in [0, 1].

    ``need`` (per row, default ``count``) is how many leading orders the
    caller actually uses; it sets where the row's recurrence starts, and
    entries past it carry no accuracy guarantee. A row's values depend only
    on its own (nu0, x, need), never on the rest of the batch.
    """
    scalar = np.ndim(nu0) == 0 and np.ndim(x) == 0
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    x = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), nu0.shape).copy()
    if count < 0:
        raise ValueError("count must be non-negative")
    if np.any(~np.isfinite(nu0)) or np.any(~np.isfinite(x)):
        raise ValueError("order and argument must be finite")
    if np.any(nu0 < 0) or np.any(nu0 > 1):
        raise ValueError("ladder base order must lie in [0, 1]")
    if np.any(x < 0):
        raise ValueError("argument must be non-negative")
    out = np.zeros((nu0.size, count))
    if count:
        zero = x == 0.0
        if zero.any():
            out[zero & (nu0 == 0.0), 0] = 1.0
        live = ~zero
        if live.any():
            need = np.broadcast_to(np.asarray(count if need is None else need, dtype=np.int64), nu0.shape)
            if np.any(need < 0) or np.any(need > count):
                raise ValueError("need must lie in [0, count]")
            out[live] = _ladders(nu0[live], x[live], count, np.maximum(need[live], 1))
    if not np.all(np.isfinite(out)):
        raise OverflowError("Bessel ladder lost finiteness")
    return out[0] if scalar else out


def bessel_j(nu: float, x: float) -> float:
    """Bessel function of the first kind J_nu(x) for real nu >= 0, x >= 0.

    >>> round(bessel_j(1.0, 1.0), 7)
    0.4400506
    """
    nu = float(nu)
    x = float(x)
    if not (math.isfinite(nu) and math.isfinite(x)):
        raise ValueError("order and argument must be finite")
    if nu < 0 or x < 0:
        raise ValueError("bessel_j is defined here for nu >= 0 and x >= 0")
    if x == 0.0:
        return 1.0 if nu == 0.0 else 0.0
    if 0.25 * x * x <= nu + 1.0:
        val = _series(nu, x)
    elif x > 30.0 and x > nu * nu:
        val = _hankel(nu, x)
    else:
        base = math.floor(nu)
        nu0 = nu - base
        count = int(base) + 1
        val = float(_ladders(np.array([nu0]), np.array([x]), count, np.array([count]))[0, -1])
    if not math.isfinite(val):
        raise OverflowError(f"J_{nu}({x}) could not be held in double precision")
    return val


def bessel_i_neg_imag(nu: float, x: float) -> complex:
    """Modified Bessel function I_nu(-i x) = exp(-i pi nu / 2) J_nu(x)."""
    j = bessel_j(nu, x)
    phase = -0.5 * math.pi * nu
    return complex(j * math.cos(phase), j * math.sin(phase))


# ---------------------------------------------------------------------------
# power laws


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares fit of L(eps) = amplitude * eps**(-exponent)."""

    amplitude: float
    exponent: float
    stderr_exponent: float
    n_points: int

    def __call__(self, scale):
        return self.amplitude * np.asarray(scale, dtype=float) ** (-self.exponent)


def _as_points(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be a sequence of (scale, length) pairs")
    return arr[:, 0], arr[:, 1]


def fit_power_law(points: Iterable[Sequence[float]]) -> PowerLawFit:
    """Unweighted OLS of log(length) against log(scale).

    The returned exponent follows L = L0 * eps**(-exponent): a positive
    exponent means the measured length grows as the yardstick shrinks.
    """
    scale, length = _as_points(points)
    n = scale.size
    if n < 2:
        raise ValueError("need at least two points for a power-law fit")
    if not (np.all(np.isfinite(scale)) and np.all(np.isfinite(length))):
        raise ValueError("points must be finite")
    if np.any(scale <= 0) or np.any(length <= 0):
        raise ValueError("scales and lengths must be positive")
    if np.unique(scale).size != n:
        raise ValueError("scales must be distinct")
    order = np.argsort(scale, kind="stable")
    lx = np.log(scale[order])
    ly = np.log(length[order])
    mx = lx.mean()
    my = ly.mean()
    dx = lx - mx
    sxx = float(np.dot(dx, dx))
    slope = float(np.dot(dx, ly - my)) / sxx
    intercept = my - slope * mx
    if n > 2:
        resid = ly - (intercept + slope * lx)
        stderr = math.sqrt(float(np.dot(resid, resid)) / (n - 2) / sxx)
    else:
        stderr = 0.0
    return PowerLawFit(
        amplitude=math.exp(intercept),
        exponent=-slope,
        stderr_exponent=stderr,
        n_points=int(n),
    )


def hausdorff_from_exponent(exponent: float) -> float:
    """Hausdorff dimension of a curve whose length scales with ``exponent``."""
    return float(exponent) + 1.0
