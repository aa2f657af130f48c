"""Experiment II: recover per-class amplitudes from intensities and measure lengths.

Forward model
-------------
For flux set f and detector angle dtheta_j the detector sees

    I[f, j] = | a_ref + exp(i dtheta_j Phi_f) * sum_h K_h E[f, h] |^2,

with E[f, h] = exp(2 pi i n_h . phi_f) the winding part of the generalised AB
phase and Phi_f the total flux of set f. ``a_ref`` is an optional
flux-independent reference wave (e.g. the wave through a second slit that
does not wind around the array). Without it the common factor
exp(i dtheta Phi_f) drops out of every intensity, so extra detector angles
carry no information and the data cannot tell {K_h} from its twin
{conj(K_{-h})}. With it, both the global phase and the twin are fixed.

Reported amplitudes are always rotated so that the zero-winding class is
real and non-negative.
"""

from __future__ import annotations

import configparser
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.optimize import least_squares

from .hausdorff import FitReport, fit_with_window
from .propagator import ExperimentGeometry, PhysParams, to_polar, winding_sector_free
from .windings import (
    FluxAssignment,
    SolenoidArray,
    assign_fluxes,
    enumerate_classes,
    generalized_ab_phase,
    representative_path,
)

__all__ = [
    "Underdetermined",
    "NonConvergence",
    "DegenerateWeights",
    "ClassAmplitudes",
    "FluxSetFamily",
    "LengthEstimate",
    "Exp2Config",
    "PipelineResult",
    "gauge_fix",
    "winding_phases",
    "synth_intensity",
    "synth_family",
    "make_flux_family",
    "synthetic_amplitudes",
    "planted_amplitudes",
    "reconstruct",
    "quantum_length",
    "hausdorff_pipeline",
    "load_config",
    "DEFAULT_DTHETAS",
]

DEFAULT_DTHETAS = (-0.75 * math.pi, -0.5 * math.pi, -0.25 * math.pi)
DEFAULT_DECAY = 0.35
DEFAULT_STARTS = 16
# relative RMS residuals closer than this count as a tie between starts
TIE_RMS = 1e-12


class Underdetermined(ValueError):
    """Fewer flux sets than the 2 N_H + 1 needed for 2 N_H real unknowns."""


class NonConvergence(RuntimeError):
    pass


class DegenerateWeights(ZeroDivisionError):
    pass


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class ClassAmplitudes:
    """Per-class free amplitudes K_h, aligned with ``classes``.

    ``residual`` and ``converged`` are filled in by ``reconstruct``;
    ``n_consensus`` counts multistarts that reached the same optimum and
    ``ambiguous`` flags a start that reached an equally good but different one.
    """

    classes: tuple[tuple[int, ...], ...]
    k_free: np.ndarray
    gauge: int
    residual: float = 0.0
    converged: bool = True
    n_consensus: int = 0
    ambiguous: bool = False

    def __post_init__(self):
        k = np.asarray(self.k_free, dtype=complex).copy()
        object.__setattr__(self, "classes", tuple(tuple(int(n) for n in c) for c in self.classes))
        if k.shape != (len(self.classes),):
            raise ValueError("need exactly one amplitude per class")
        k.setflags(write=False)
        object.__setattr__(self, "k_free", k)

    @classmethod
    def from_values(cls, classes, k_free) -> "ClassAmplitudes":
        classes = tuple(tuple(int(n) for n in c) for c in classes)
        return cls(classes, gauge_fix(k_free, _zero_index(classes)), _zero_index(classes))


@dataclass(frozen=True)
class FluxSetFamily:
    """N_F flux sets and the intensities measured for each at every detector angle."""

    sets: tuple[FluxAssignment, ...]
    dthetas: np.ndarray
    intensities: np.ndarray
    reference: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))
        th = np.atleast_1d(np.asarray(self.dthetas, dtype=float))
        inten = np.asarray(self.intensities, dtype=float).reshape(len(self.sets), th.size)
        if np.any(inten < 0) or not np.all(np.isfinite(inten)):
            raise ValueError("intensities must be finite and non-negative")
        counts = {fa.count for fa in self.sets}
        if len(counts) != 1:
            raise ValueError("all flux sets must cover the same solenoids")
        object.__setattr__(self, "dthetas", th)
        object.__setattr__(self, "intensities", inten)
        object.__setattr__(self, "reference", complex(self.reference))

    @property
    def n_sets(self) -> int:
        return len(self.sets)


@dataclass(frozen=True)
class LengthEstimate:
    dx: float
    quantum_length: complex
    quantum_length_modulus: float
    free_length: complex
    n_classes: int = 0
    residual: float = 0.0


# ---------------------------------------------------------------------------
# forward model


def _zero_index(classes) -> int:
    for i, c in enumerate(classes):
        if not any(c):
            return i
    raise ValueError("class list must contain the zero winding vector")


def gauge_fix(k, gauge: int) -> np.ndarray:
    """Rotate the global phase so that ``k[gauge]`` is real and non-negative."""
    k = np.asarray(k, dtype=complex)
    a = k[gauge]
    if a == 0:
        return k.copy()
    out = k * (abs(a) / a)
    out[gauge] = abs(a)  # exactly real, not real up to rounding
    return out


def winding_phases(classes, sets) -> np.ndarray:
    """E[f, h] = exp(2 pi i n_h . phi_f), reduced mod 1 in exact arithmetic."""
    return np.array([[generalized_ab_phase(c, fa) for c in classes] for fa in sets])


def _total_phases(sets, dthetas) -> np.ndarray:
    tot = np.array([float(fa.total) for fa in sets])
    return np.exp(1j * np.outer(tot, np.asarray(dthetas, dtype=float)))


def synth_intensity(amps: ClassAmplitudes, fa: FluxAssignment, dtheta: float, reference: complex = 0.0) -> float:
    """Intensity at one detector angle for one flux set."""
    if len(amps.classes[0]) != fa.count:
        raise ValueError("winding vectors and flux assignment differ in length")
    s = sum(k * generalized_ab_phase(c, fa, dtheta=dtheta) for c, k in zip(amps.classes, amps.k_free))
    return float(abs(complex(reference) + s) ** 2)


def synth_family(
    amps: ClassAmplitudes,
    sets,
    dthetas=DEFAULT_DTHETAS,
    reference: complex = 0.0,
    noise: float = 0.0,
    rng=None,
) -> FluxSetFamily:
    """Intensities for every (flux set, detector angle) pair.

    ``noise`` > 0 multiplies each intensity by (1 + noise * N(0, 1)), clipped
    at zero; it is a robustness hook, not a detector model.
    """
    sets = tuple(sets)
    e = winding_phases(amps.classes, sets)
    g = _total_phases(sets, dthetas)
    amp = complex(reference) + g * (e @ amps.k_free)[:, None]
    inten = np.abs(amp) ** 2
    if noise > 0:
        rng = np.random.default_rng(rng)
        inten = np.clip(inten * (1.0 + noise * rng.standard_normal(inten.shape)), 0.0, None)
    return FluxSetFamily(sets, np.asarray(dthetas, dtype=float), inten, reference)


def make_flux_family(N_S: int, n_cutoff: int, n_sets: int, seed: int) -> tuple[FluxAssignment, ...]:
    """``n_sets`` certified flux assignments with seeds derived from ``seed``."""
    seeds = np.random.default_rng(seed).integers(0, 2**62, size=n_sets)
    return tuple(assign_fluxes(N_S, n_cutoff, int(s)) for s in seeds)


def synthetic_amplitudes(classes, seed: int, decay: float = DEFAULT_DECAY) -> ClassAmplitudes:
    """Random amplitudes with modulus ~ decay**|n|_1 and uniform phases."""
    classes = tuple(tuple(int(n) for n in c) for c in classes)
    rng = np.random.default_rng(seed)
    norm1 = np.array([sum(abs(n) for n in c) for c in classes], dtype=float)
    mag = decay**norm1 * rng.uniform(0.5, 1.5, size=len(classes))
    k = mag * np.exp(2j * math.pi * rng.uniform(size=len(classes)))
    return ClassAmplitudes.from_values(classes, k)


def planted_amplitudes(amps: ClassAmplitudes, lengths, target: float) -> ClassAmplitudes:
    """Replace the zero-class amplitude so that sum L_h K_h / sum K_h = target."""
    lengths = np.asarray(lengths, dtype=float)
    k = np.array(amps.k_free)
    g = amps.gauge
    if lengths[g] == target:
        raise ValueError("target equals the zero-class length; cannot plant")
    others = np.arange(k.size) != g
    k[g] = -np.sum((lengths[others] - target) * k[others]) / (lengths[g] - target)
    return ClassAmplitudes.from_values(amps.classes, k)


# ---------------------------------------------------------------------------
# inverse problem


def _unpack(x, nh, gauge, free_phase):
    if free_phase:
        return x[:nh] + 1j * x[nh:]
    re = x[:nh]
    im = np.insert(x[nh:], gauge, 0.0)
    return re + 1j * im


def reconstruct(
    family: FluxSetFamily,
    classes,
    init_seed: int = 0,
    *,
    n_starts: int = DEFAULT_STARTS,
    tol: float = 1e-14,
    accept: float = 1e-8,
    jobs: int = 1,
) -> ClassAmplitudes:
    """Least-squares inversion of the intensity model for the class amplitudes.

    Levenberg-Marquardt (MINPACK via scipy) with an analytic Jacobian, run from
    ``n_starts`` deterministic starting points drawn from ``init_seed``. With
    a reference wave, start 0 puts all weight on the zero class; all other
    starts are complex Gaussian. The start with the lowest cost wins. Costs
    within a relative RMS of ``TIE_RMS`` of the minimum are ties and go to
    the lower start index, so rounding-level differences between equally
    good fits (conjugate twins of the reference-free model) cannot decide
    the winner.
    The best fit counts as converged when its RMS residual, relative to the
    mean intensity, is below ``accept``.
    """
    classes = tuple(tuple(int(n) for n in c) for c in classes)
    nh = len(classes)
    if family.n_sets < 2 * nh + 1:
        raise Underdetermined(
            f"{family.n_sets} flux sets for {nh} classes: at least 2*N_H+1 = {2 * nh + 1} are required"
        )
    gauge = _zero_index(classes)
    ref = family.reference
    free_phase = ref != 0
    e = winding_phases(classes, family.sets)
    g = _total_phases(family.sets, family.dthetas)
    scale = float(np.mean(family.intensities))
    if scale == 0.0:
        return ClassAmplitudes(classes, np.zeros(nh), gauge, 0.0, True, n_starts, False)
    obs = family.intensities / scale
    ref_s = ref / math.sqrt(scale)
    # columns of d(amp)/d(x): amp = ref + g * (E @ k)
    ge = g[:, :, None] * e[:, None, :]  # (F, J, H)
    cols = np.concatenate([ge, 1j * ge], axis=2)
    if not free_phase:
        cols = np.delete(cols, nh + gauge, axis=2)
    cols = cols.reshape(-1, cols.shape[2])

    def model(x):
        k = _unpack(x, nh, gauge, free_phase)
        return ref_s + g * (e @ k)[:, None]

    def fun(x):
        return (np.abs(model(x)) ** 2 - obs).ravel()

    def jac(x):
        amp = model(x).ravel()
        return 2.0 * np.real(np.conj(amp)[:, None] * cols)

    nvar = cols.shape[1]
    rng = np.random.default_rng(init_seed)
    starts = []
    for s in range(n_starts):
        # without a reference the zero-class start is fixed by the twin map and
        # rounding alone would pick the twin, so every start is random then
        if s == 0 and free_phase:
            x0 = np.zeros(nvar)
            x0[gauge] = math.sqrt(max(np.mean(obs) - abs(ref_s) ** 2, 0.0)) or 1.0
        else:
            x0 = rng.standard_normal(nvar) / math.sqrt(2.0 * nh)
        starts.append(x0)

    def run(x0):
        return least_squares(fun, x0, jac=jac, method="lm", xtol=tol, ftol=tol, gtol=tol, max_nfev=200 * nvar)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(x0) for x0 in starts]

    costs = np.array([r.cost for r in results])
    tied = costs <= costs.min() + 0.5 * obs.size * TIE_RMS**2
    best = int(np.argmax(tied))  # first tied start
    k_best = gauge_fix(_unpack(results[best].x, nh, gauge, free_phase) * math.sqrt(scale), gauge)
    rms = math.sqrt(2.0 * costs[best] / obs.size)
    close = costs <= costs[best] + max(1e-12, 10.0 * costs[best])
    consensus = 0
    ambiguous = False
    for r, ok in zip(results, close):
        if not ok:
            continue
        k = gauge_fix(_unpack(r.x, nh, gauge, free_phase) * math.sqrt(scale), gauge)
        if np.allclose(k, k_best, rtol=1e-6, atol=1e-6 * np.max(np.abs(k_best))):
            consensus += 1
        else:
            ambiguous = True
    converged = rms <= accept
    if not converged and not any(r.success for r in results):
        raise NonConvergence(f"no multistart converged; best relative rms residual {rms:.3e}")
    return ClassAmplitudes(classes, k_best, gauge, rms, converged, consensus, ambiguous)


# ---------------------------------------------------------------------------
# lengths


def _weighted_length(lengths, weights, floor):
    den = np.sum(weights)
    if abs(den) < floor * max(float(np.sum(np.abs(weights))), np.finfo(float).tiny):
        raise DegenerateWeights(f"|sum of weights| = {abs(den):.3e} is below the floor")
    # normalise first so a single class (or one dominant weight) is exact
    return complex(np.sum(lengths * (weights / den)))


def quantum_length(
    amps: ClassAmplitudes,
    paths,
    fa: FluxAssignment | None = None,
    dtheta: float = 0.0,
    *,
    dx: float = 1.0,
    floor: float = 1e-12,
) -> LengthEstimate:
    """Transition-element length sum_h L_h w_h / sum_h w_h.

    ``paths`` holds one RepresentativePath (or plain length) per class. With a
    flux assignment the weights carry the generalised AB phase; the free
    length (weights K_h alone) is always reported as well.
    """
    lengths = np.array([getattr(q, "classical_length", q) for q in paths], dtype=float)
    if lengths.size != len(amps.classes):
        raise ValueError("need exactly one path per class")
    k = amps.k_free
    free = _weighted_length(lengths, k, floor)
    if fa is None:
        value = free
    else:
        ph = np.array([generalized_ab_phase(c, fa, dtheta=dtheta) for c in amps.classes])
        value = _weighted_length(lengths, k * ph, floor)
    return LengthEstimate(float(dx), value, abs(value), free, len(amps.classes), amps.residual)


# ---------------------------------------------------------------------------
# configuration and pipeline


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (int, float)):
        return (float(text),)
    if isinstance(text, str):
        return tuple(float(t) for t in text.replace(",", " ").split())
    return tuple(float(t) for t in text)


@dataclass(frozen=True)
class Exp2Config:
    """Pipeline settings; every field maps to a ``key = value`` config line.

    mode
        ``synthetic``: decaying random amplitudes on an nx by ny array;
        ``single_solenoid``: one solenoid with amplitudes from the
        winding-sector propagator at h = dx / 2.
    planted_c
        synthetic mode only: rescale the zero class so that the free length
        is exactly planted_c / dx.
    length_kind / reduce
        ``free`` or ``flux`` weights; ``modulus`` or ``real`` reduction.
    """

    mode: str = "synthetic"
    nx: int = 2
    ny: int = 1
    dx: tuple[float, ...] = (0.05, 0.1, 0.2, 0.4, 0.8)
    n_cutoff: int = 1
    n_flux_sets: int = 0  # 0 means 4 * N_H
    seed: int = 1
    init_seed: int = 0
    decay: float = DEFAULT_DECAY
    reference: float = 1.0
    dthetas: tuple[float, ...] = DEFAULT_DTHETAS
    path_length: float = 2.0
    planted_c: float = 0.0
    length_kind: str = "free"
    reduce: str = "modulus"
    noise: float = 0.0
    n_starts: int = DEFAULT_STARTS
    solver_tol: float = 1e-14
    accept: float = 1e-8
    fit_window: str = "all"
    mass_mu: float = 1.0
    hbar: float = 1.0
    time_T: float = 10.0
    lambda_cut: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "dx", _floats(self.dx))
        object.__setattr__(self, "dthetas", _floats(self.dthetas))
        if self.mode not in ("synthetic", "single_solenoid"):
            raise ValueError("mode must be 'synthetic' or 'single_solenoid'")
        if self.length_kind not in ("free", "flux"):
            raise ValueError("length_kind must be 'free' or 'flux'")
        if self.reduce not in ("modulus", "real"):
            raise ValueError("reduce must be 'modulus' or 'real'")
        if any(d <= 0 for d in self.dx):
            raise ValueError("dx values must be positive")
        if self.n_cutoff < 1:
            raise ValueError("n_cutoff must be >= 1")

    @property
    def params(self) -> PhysParams:
        return PhysParams(mass_mu=self.mass_mu, hbar=self.hbar, time_T=self.time_T)

    @classmethod
    def from_mapping(cls, data) -> "Exp2Config":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in data.items():
            key = key.strip().replace("-", "_")
            if key not in kinds:
                raise ValueError(f"unknown exp2 config key {key!r}")
            kind = kinds[key]
            if key in ("dx", "dthetas"):
                out[key] = _floats(raw)
            elif kind == "int":
                out[key] = int(raw)
            elif kind == "float":
                out[key] = float(raw)
            else:
                out[key] = str(raw).strip()
        return cls(**out)

    def as_mapping(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = " ".join(repr(float(t)) for t in v) if isinstance(v, tuple) else str(v)
        return out


def load_config(text: str) -> Exp2Config:
    """Parse flat ``key = value`` text (``#`` comments allowed)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[exp2]\n" + text)
    return Exp2Config.from_mapping(dict(cp["exp2"]))


@dataclass(frozen=True)
class ScaleRecord:
    estimate: LengthEstimate
    planted: ClassAmplitudes
    recovered: ClassAmplitudes
    lengths: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class PipelineResult:
    records: tuple[ScaleRecord, ...]
    report: FitReport

    @property
    def d_H(self) -> float:
        return self.report.d_H

    @property
    def fit(self):
        return self.report.fit


def _scale_setup(cfg: Exp2Config, dx: float, index: int):
    if cfg.mode == "single_solenoid":
        arr = SolenoidArray(1, 1, dx)
        classes = enumerate_classes(1, cfg.n_cutoff)
        half = 0.5 * cfg.path_length
        x_in, x_fi = (-half, 0.5 * dx), (half, 0.5 * dx)
        pp = to_polar(ExperimentGeometry(cfg.path_length, 0.5 * dx))
        k = [winding_sector_free(cfg.params, pp, c[0], cfg.lambda_cut, normalize=True) for c in classes]
        truth = ClassAmplitudes.from_values(classes, k)
    else:
        arr = SolenoidArray(cfg.nx, cfg.ny, dx)
        classes = enumerate_classes(arr.count, cfg.n_cutoff)
        mid_y = ((arr.ny - 1) // 2 + 0.5) * dx  # a row of gap midpoints
        width = (arr.nx - 1) * dx
        x_in = (0.5 * width - 0.5 * cfg.path_length, mid_y)
        x_fi = (0.5 * width + 0.5 * cfg.path_length, mid_y)
        truth = synthetic_amplitudes(classes, cfg.seed * 1000 + index, cfg.decay)
    paths = [representative_path(c, arr, x_in, x_fi) for c in classes]
    lengths = np.array([q.classical_length for q in paths])
    if cfg.mode == "synthetic" and cfg.planted_c > 0:
        truth = planted_amplitudes(truth, lengths, cfg.planted_c / dx)
    return arr, classes, truth, paths, lengths


def _one_scale(cfg: Exp2Config, dx: float, index: int) -> ScaleRecord:
    arr, classes, truth, paths, lengths = _scale_setup(cfg, dx, index)
    nh = len(classes)
    n_sets = cfg.n_flux_sets or 4 * nh
    sets = make_flux_family(arr.count, cfg.n_cutoff, n_sets, cfg.seed * 7919 + index)
    family = synth_family(truth, sets, cfg.dthetas, cfg.reference, cfg.noise, rng=cfg.seed + index)
    rec = reconstruct(family, classes, cfg.init_seed + index, n_starts=cfg.n_starts, tol=cfg.solver_tol, accept=cfg.accept)
    fa = sets[0] if cfg.length_kind == "flux" else None
    est = quantum_length(rec, paths, fa, cfg.dthetas[0], dx=dx)
    return ScaleRecord(est, truth, rec, lengths)


def _reduce(est: LengthEstimate, cfg: Exp2Config) -> float:
    return est.quantum_length_modulus if cfg.reduce == "modulus" else est.quantum_length.real


def hausdorff_pipeline(dx_values=None, config: Exp2Config | None = None, *, jobs: int = 1) -> PipelineResult:
    """Per scale: set up, synthesise, reconstruct, measure <L>; then fit d_H."""
    cfg = config or Exp2Config()
    if dx_values is not None:
        cfg = replace(cfg, dx=_floats(dx_values))
    if len(cfg.dx) < 3:
        raise ValueError("need at least three dx values")
    work = list(enumerate(cfg.dx))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            records = list(pool.map(lambda t: _one_scale(cfg, t[1], t[0]), work))
    else:
        records = [_one_scale(cfg, d, i) for i, d in work]
    points = [(r.estimate.dx, _reduce(r.estimate, cfg)) for r in records]
    report = fit_with_window(points, cfg.fit_window)
    return PipelineResult(tuple(records), report)
