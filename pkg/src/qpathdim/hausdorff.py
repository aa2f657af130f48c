"""Power-law fits reported as Hausdorff dimensions, with fit-window selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .specfun import PowerLawFit, _as_points, fit_power_law, hausdorff_from_exponent

__all__ = ["FitReport", "fit_with_window", "WINDOW_POLICIES"]

WINDOW_POLICIES = ("all", "auto")
MIN_WINDOW = 3


@dataclass(frozen=True)
class FitReport:
    """Power-law fit plus the derived dimension.

    ``window`` indexes the input points after sorting by increasing scale,
    inclusive on both ends.
    """

    fit: PowerLawFit
    d_H: float
    d_H_stderr: float
    window: tuple[int, int]
    points_used: int

    def summary_line(self) -> str:
        f = self.fit
        return (
            f"L0={f.amplitude:.8e} exponent={f.exponent:.8e}±{f.stderr_exponent:.8e} "
            f"dH={self.d_H:.8e}±{self.d_H_stderr:.8e} window=[{self.window[0]},{self.window[1]}]"
        )


def _report(fit: PowerLawFit, lo: int, hi: int) -> FitReport:
    return FitReport(
        fit=fit,
        d_H=hausdorff_from_exponent(fit.exponent),
        d_H_stderr=fit.stderr_exponent,
        window=(lo, hi),
        points_used=hi - lo + 1,
    )


def fit_with_window(points, window_policy: str = "all") -> FitReport:
    """Fit L = L0 eps**(-exponent) on all points or on an automatic window.

    ``auto`` scans every contiguous run of at least three scale-sorted points
    and keeps the one with the smallest exponent stderr per point. Exact ties
    go to the window starting at the smaller scale, then to the longer one.
    """
    if window_policy not in WINDOW_POLICIES:
        raise ValueError(f"window_policy must be one of {WINDOW_POLICIES}")
    scale, length = _as_points(points)
    n = scale.size
    if n < MIN_WINDOW:
        raise ValueError(f"need at least {MIN_WINDOW} points, got {n}")
    order = np.argsort(scale, kind="stable")
    pts = np.column_stack([scale[order], length[order]])
    if window_policy == "all":
        return _report(fit_power_law(pts), 0, n - 1)
    best = None
    for lo in range(n - MIN_WINDOW + 1):
        for hi in range(lo + MIN_WINDOW - 1, n):
            fit = fit_power_law(pts[lo : hi + 1])
            key = (fit.stderr_exponent / fit.n_points, lo, -hi)
            if best is None or key < best[0]:
                best = (key, fit, lo, hi)
    _, fit, lo, hi = best
    return _report(fit, lo, hi)
