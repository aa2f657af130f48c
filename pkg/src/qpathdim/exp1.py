"""Experiment I: AB versus semi-classical propagator over an (h, alpha) grid.

A single solenoid sits at distance h from the straight classical path of
length L. For every grid point the AB propagator (partial-wave sum) and the
semi-classical propagator (free propagator times the straight-path AB phase)
are tabulated together with the absolute differences of their real and
imaginary parts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .propagator import (
    DEFAULT_M_MAX,
    DIMENSIONLESS,
    PHYSICAL,
    PHYSICAL_LENGTH_FM,
    SOLENOID_DIAMETER_FM,
    ExperimentGeometry,
    PhysParams,
    ab_propagator_many,
    de_broglie,
    free_exact,
    to_polar,
)

__all__ = [
    "ScanGrid",
    "ScanResult",
    "CSV_COLUMNS",
    "run_scan",
    "classical_quantum_boundary",
    "preset_grid",
    "PRESETS",
]

CSV_COLUMNS = (
    "h",
    "alpha",
    "re_ab",
    "im_ab",
    "re_semi",
    "im_semi",
    "abs_re_diff",
    "abs_im_diff",
    "quantum_region",
)


def _strictly_increasing(name, values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


@dataclass(frozen=True)
class ScanGrid:
    h_values: np.ndarray
    alpha_values: np.ndarray
    params: PhysParams = DIMENSIONLESS
    length_L: float = 2.0
    m_max: int = DEFAULT_M_MAX
    normalize: bool = False

    def __post_init__(self):
        h = _strictly_increasing("h_values", self.h_values)
        if np.any(h < 0):
            raise ValueError("h_values must be non-negative")
        object.__setattr__(self, "h_values", h)
        object.__setattr__(self, "alpha_values", _strictly_increasing("alpha_values", self.alpha_values))
        if not self.length_L > 0:
            raise ValueError("length_L must be positive")
        if int(self.m_max) < 0:
            raise ValueError("m_max must be non-negative")
        object.__setattr__(self, "m_max", int(self.m_max))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.h_values.size, self.alpha_values.size)


@dataclass(frozen=True)
class ScanResult:
    """Flattened table in (h, alpha) lexicographic order."""

    grid: ScanGrid = field(repr=False)
    h: np.ndarray
    alpha: np.ndarray
    ab: np.ndarray
    semi: np.ndarray
    quantum_region: np.ndarray
    boundary: float

    @property
    def abs_re_diff(self) -> np.ndarray:
        return np.abs(self.ab.real - self.semi.real)

    @property
    def abs_im_diff(self) -> np.ndarray:
        return np.abs(self.ab.imag - self.semi.imag)

    @property
    def abs_diff(self) -> np.ndarray:
        return np.abs(self.ab - self.semi)

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "h": self.h,
            "alpha": self.alpha,
            "re_ab": self.ab.real,
            "im_ab": self.ab.imag,
            "re_semi": self.semi.real,
            "im_semi": self.semi.imag,
            "abs_re_diff": self.abs_re_diff,
            "abs_im_diff": self.abs_im_diff,
            "quantum_region": self.quantum_region.astype(int),
        }

    def as_matrix(self, name: str) -> np.ndarray:
        """Column ``name`` reshaped to (n_h, n_alpha)."""
        return np.asarray(self.columns()[name]).reshape(self.grid.shape)


def classical_quantum_boundary(p: PhysParams, r: float) -> float:
    """lambda / 2 pi: resolutions h below it are in the quantum region."""
    return de_broglie(p, r) / (2.0 * math.pi)


def _row(grid: ScanGrid, h: float):
    pp = to_polar(ExperimentGeometry(grid.length_L, float(h)))
    alphas = grid.alpha_values
    ab = ab_propagator_many(grid.params, [pp] * alphas.size, alphas, grid.m_max, grid.normalize)
    free = free_exact(grid.params, pp, grid.normalize)
    semi = free * np.exp(1j * alphas * pp.dtheta)
    return ab, semi


def run_scan(grid: ScanGrid, jobs: int = 1) -> ScanResult:
    """Tabulate both propagators over the grid.

    Rows (fixed h) are independent; ``jobs > 1`` evaluates them in a thread
    pool but results are always assembled in grid order, so the output does
    not depend on ``jobs``.
    """
    hs = grid.h_values
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            rows = list(pool.map(lambda h: _row(grid, h), hs))
    else:
        rows = [_row(grid, h) for h in hs]
    ab = np.concatenate([r[0] for r in rows])
    semi = np.concatenate([r[1] for r in rows])
    if not (np.all(np.isfinite(ab)) and np.all(np.isfinite(semi))):
        raise FloatingPointError("non-finite propagator value in scan")
    boundary = classical_quantum_boundary(grid.params, 0.5 * grid.length_L)
    h = np.repeat(hs, grid.alpha_values.size)
    alpha = np.tile(grid.alpha_values, hs.size)
    return ScanResult(grid, h, alpha, ab, semi, h < boundary, boundary)


def preset_grid(name: str) -> ScanGrid:
    """Named scan setups.

    ``fig9`` and ``fig10`` share the dimensionless grid (real and imaginary
    parts of the same table); ``fig13`` is the physical electron set in fm,
    normalised by mu / (2 pi i hbar T).
    """
    alphas = np.linspace(0.0, 3.0, 61)
    if name in ("fig9", "fig10"):
        return ScanGrid(np.linspace(0.0, 10.0, 41), alphas, DIMENSIONLESS, 2.0, DEFAULT_M_MAX, False)
    if name == "fig13":
        hs = np.linspace(SOLENOID_DIAMETER_FM, 100.0 * SOLENOID_DIAMETER_FM, 41)
        return ScanGrid(hs, alphas, PHYSICAL, PHYSICAL_LENGTH_FM, DEFAULT_M_MAX, True)
    raise KeyError(f"unknown exp1 preset {name!r}; choose from {sorted(PRESETS)}")


PRESETS = ("fig9", "fig10", "fig13")
