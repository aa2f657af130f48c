"""Free, winding-sector, Aharonov-Bohm and semi-classical propagators in 2-D.

Geometry convention: the solenoid sits at the origin and the classical
straight-line trajectory runs parallel to the x axis at height ``h``, from
(-L/2, h) to (+L/2, h). Angles live on the branch (-pi, pi], so that
theta_fi - theta_in = 2 atan(2h/L) - pi.

All propagators accept ``normalize=True`` to divide out the common factor
mu / (2 pi i hbar T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import bessel_j_ladder

__all__ = [
    "PhysParams",
    "PolarPair",
    "ExperimentGeometry",
    "DIMENSIONLESS",
    "PHYSICAL",
    "PHYSICAL_LENGTH_FM",
    "SOLENOID_DIAMETER_FM",
    "QuadratureError",
    "to_polar",
    "bessel_argument",
    "free_exact",
    "free_partial_wave",
    "ab_propagator",
    "ab_propagator_many",
    "semiclassical",
    "winding_sector_free",
    "ab_cross_section",
    "de_broglie",
]

DEFAULT_M_MAX = 50
DEFAULT_LAMBDA_CUT = 60.0


class QuadratureError(RuntimeError):
    """Raised when the winding-sector integral does not reach its tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (estimated residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class PhysParams:
    """Particle and run constants (natural units are fine: hbar = c = 1)."""

    mass_mu: float = 1.0
    hbar: float = 1.0
    light_c: float = 1.0
    charge_q: float = 1.0
    time_T: float = 10.0

    def __post_init__(self):
        for name in ("mass_mu", "hbar", "light_c", "time_T"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v!r}")
        if not math.isfinite(self.charge_q):
            raise ValueError("charge_q must be finite")

    @property
    def prefactor(self) -> complex:
        """mu / (2 pi i hbar T)."""
        return self.mass_mu / (2j * math.pi * self.hbar * self.time_T)

    @property
    def flux_coupling(self) -> float:
        """q / (2 pi hbar c): converts a flux into the dimensionless alpha."""
        return self.charge_q / (2.0 * math.pi * self.hbar * self.light_c)


# hbar = mu = 1, T = 10 with L = 2: the dimensionless convergence studies
DIMENSIONLESS = PhysParams(mass_mu=1.0, hbar=1.0, light_c=1.0, charge_q=1.0, time_T=10.0)
# electron with hbar = c = 1, lengths in fm: mu = 0.511 MeV = 0.259e-2 fm^-1, T = 1 s
PHYSICAL = PhysParams(mass_mu=0.259e-2, hbar=1.0, light_c=1.0, charge_q=1.0, time_T=3e23)
PHYSICAL_LENGTH_FM = 2e13
SOLENOID_DIAMETER_FM = 5e9


def _wrap(theta: float) -> float:
    t = math.remainder(theta, 2.0 * math.pi)
    return math.pi if t == -math.pi else t


@dataclass(frozen=True)
class PolarPair:
    """Initial (r, theta) and final (r', theta') points about the solenoid."""

    r_in: float
    theta_in: float
    r_fi: float
    theta_fi: float

    def __post_init__(self):
        if self.r_in < 0 or self.r_fi < 0:
            raise ValueError("radii must be non-negative")
        object.__setattr__(self, "theta_in", _wrap(self.theta_in))
        object.__setattr__(self, "theta_fi", _wrap(self.theta_fi))

    @property
    def dtheta(self) -> float:
        return self.theta_fi - self.theta_in


@dataclass(frozen=True)
class ExperimentGeometry:
    length_L: float
    dist_h: float

    def __post_init__(self):
        if not self.length_L > 0:
            raise ValueError("length_L must be positive")
        if not self.dist_h >= 0:
            raise ValueError("dist_h must be non-negative")


def to_polar(geom: ExperimentGeometry) -> PolarPair:
    half = 0.5 * geom.length_L
    h = geom.dist_h
    r = math.hypot(h, half)
    return PolarPair(r, math.atan2(h, -half), r, math.atan2(h, half))


def bessel_argument(p: PhysParams, pp: PolarPair) -> float:
    """x in I_nu(mu r r' / (i hbar T)) = I_nu(-i x)."""
    return p.mass_mu * pp.r_in * pp.r_fi / (p.hbar * p.time_T)


def _radial_phase(p: PhysParams, pp: PolarPair) -> complex:
    arg = p.mass_mu * (pp.r_in**2 + pp.r_fi**2) / (2.0 * p.hbar * p.time_T)
    return complex(math.cos(arg), math.sin(arg))


def _scale(p: PhysParams, normalize: bool) -> complex:
    return 1.0 if normalize else p.prefactor


def free_exact(p: PhysParams, pp: PolarPair, normalize: bool = False) -> complex:
    """Closed-form free propagator; depends on the chord |x_fi - x_in| only."""
    half = 0.5 * pp.dtheta
    chord2 = (pp.r_fi - pp.r_in) ** 2 + 4.0 * pp.r_in * pp.r_fi * math.sin(half) ** 2
    arg = p.mass_mu * chord2 / (2.0 * p.hbar * p.time_T)
    return _scale(p, normalize) * complex(math.cos(arg), math.sin(arg))


def _partial_wave_sums(x, dtheta, alpha, m_max):
    """sum_{|m| <= m_max} exp(i m dtheta) I_{|m - alpha|}(-i x), batched."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dtheta = np.broadcast_to(np.asarray(dtheta, dtype=float), x.shape)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), x.shape)
    m_max = int(m_max)
    if m_max < 0:
        raise ValueError("m_max must be non-negative")
    c = np.ceil(alpha)
    nu_up = c - alpha  # orders m - alpha for m = c .. m_max
    nu_lo = alpha - c + 1.0  # orders alpha - m for m = c-1 .. -m_max
    cnt_up = np.clip(m_max - c + 1, 0, None).astype(int)
    cnt_lo = np.clip(c + m_max, 0, None).astype(int)
    # terms with m outside [-m_max, m_max] never enter: c - 1 - j >= -m_max
    width = int(max(cnt_up.max(initial=0), cnt_lo.max(initial=0)))
    total = np.zeros(x.shape, dtype=complex)
    if width == 0:
        return total
    ladders = bessel_j_ladder(
        np.concatenate([nu_up, nu_lo]), np.concatenate([x, x]), width, need=np.concatenate([cnt_up, cnt_lo])
    )
    n = x.size
    j = np.arange(width)
    up, lo = ladders[:n], ladders[n:]
    m_up = c[:, None] + j
    m_lo = c[:, None] - 1.0 - j
    ph_up = np.exp(1j * (m_up * dtheta[:, None] - 0.5 * math.pi * (nu_up[:, None] + j)))
    ph_lo = np.exp(1j * (m_lo * dtheta[:, None] - 0.5 * math.pi * (nu_lo[:, None] + j)))
    keep_up = j < cnt_up[:, None]
    keep_lo = (j < cnt_lo[:, None]) & (m_lo <= m_max)
    # sequential sums: padding zeros past a row's own count leave it bit-identical
    total += np.cumsum(np.where(keep_up, ph_up * up, 0.0), axis=1)[:, -1]
    total += np.cumsum(np.where(keep_lo, ph_lo * lo, 0.0), axis=1)[:, -1]
    return total


def free_partial_wave(p: PhysParams, pp: PolarPair, m_max: int, normalize: bool = False) -> complex:
    """Free propagator as a truncated sum over angular momenta |m| <= m_max."""
    return ab_propagator(p, pp, 0.0, m_max, normalize=normalize)


def ab_propagator(
    p: PhysParams,
    pp: PolarPair,
    alpha: float,
    m_max: int = DEFAULT_M_MAX,
    normalize: bool = False,
) -> complex:
    """Aharonov-Bohm propagator, orders |m - alpha| for |m| <= m_max."""
    # one arithmetic route for scalar and batched calls keeps them bit-identical
    return complex(ab_propagator_many(p, [pp], [alpha], m_max, normalize)[0])


def ab_propagator_many(p: PhysParams, pairs, alphas, m_max: int = DEFAULT_M_MAX, normalize=False):
    """Vectorised ``ab_propagator`` over matching sequences of pairs and alphas."""
    pairs = list(pairs)
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (len(pairs),))
    x = np.array([bessel_argument(p, pp) for pp in pairs])
    dth = np.array([pp.dtheta for pp in pairs])
    rad = np.array([_radial_phase(p, pp) for pp in pairs])
    return _scale(p, normalize) * rad * _partial_wave_sums(x, dth, alphas, m_max)


def semiclassical(p: PhysParams, pp: PolarPair, alpha: float, normalize: bool = False) -> complex:
    """Free propagator times the AB phase picked up along the straight path."""
    ph = alpha * pp.dtheta
    return free_exact(p, pp, normalize) * complex(math.cos(ph), math.sin(ph))


def _gauss_legendre_unit(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def _sector_integral(x, big_theta, lambda_cut, n_nodes):
    panels = int(math.ceil(lambda_cut))
    t, w = _gauss_legendre_unit(n_nodes)
    lad = bessel_j_ladder(t, np.full(n_nodes, x), panels + 1)[:, :panels]
    nu = t[:, None] + np.arange(panels)
    f = 2.0 * np.cos(nu * big_theta) * np.exp(-0.5j * math.pi * nu) * lad
    return complex(np.sum(w[:, None] * f)), float(abs(lad[:, -1]).max())


def winding_sector_free(
    p: PhysParams,
    pp: PolarPair,
    n_w: int,
    lambda_cut: float = DEFAULT_LAMBDA_CUT,
    *,
    tol: float = 1e-12,
    normalize: bool = False,
    return_residual: bool = False,
):
    """Free propagator restricted to paths winding ``n_w`` times.

    Integrates exp(i lam Theta) I_{|lam|}(-ix) over |lam| <= lambda_cut with
    Theta = theta' - theta + 2 pi n_w, using Gauss-Legendre on unit panels
    in lam (the kink at lam = 0 sits on a panel edge). The node count grows
    with |Theta| and is doubled until two successive rules agree to ``tol``
    relative to the integrand scale.
    """
    if not lambda_cut > 0:
        raise ValueError("lambda_cut must be positive")
    x = bessel_argument(p, pp)
    big_theta = pp.dtheta + 2.0 * math.pi * int(n_w)
    n = 16 + int(math.ceil(abs(big_theta)))
    prev, tail = _sector_integral(x, big_theta, lambda_cut, n)
    residual = math.inf
    for _ in range(6):
        n = n + max(8, n // 2)
        cur, tail = _sector_integral(x, big_theta, lambda_cut, n)
        residual = abs(cur - prev) + 2.0 * tail
        prev = cur
        if residual <= tol:
            break
    else:
        raise QuadratureError(f"winding sector n_w={n_w} did not converge", residual)
    value = complex(_scale(p, normalize) * _radial_phase(p, pp) * prev)
    if return_residual:
        return value, residual * abs(_scale(p, normalize))
    return value


def ab_cross_section(theta: float, k: float, alpha: float) -> float:
    """Differential AB cross section (1/2 pi k) sin^2(pi alpha) / sin^2(theta/2)."""
    s = math.sin(0.5 * theta)
    if not k > 0:
        raise ValueError("wave number must be positive")
    if s == 0.0:
        raise ValueError("cross section is singular in the forward direction")
    return math.sin(math.pi * alpha) ** 2 / (2.0 * math.pi * k * s * s)


def de_broglie(p: PhysParams, r: float) -> float:
    """Wavelength pi hbar T / (mu r) for r = r' (speed 2r/T)."""
    if not r > 0:
        raise ValueError("r must be positive")
    return math.pi * p.hbar * p.time_T / (p.mass_mu * r)
