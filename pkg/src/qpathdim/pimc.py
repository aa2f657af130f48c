"""Euclidean lattice path-integral Monte Carlo for path-length scaling.

Paths x_0 .. x_N in D dimensions with fixed endpoints are sampled from
exp(-S_E / hbar),

    S_E = sum_{i=0}^{N-1} delta [ (mu/2) |x_{i+1} - x_i|^2 / delta^2 + V_i ],

where V_i = V(x_i) for local potentials and V_i = U_0 |x_{i+1} - x_i|^a / delta^a
for the velocity-dependent interaction. Updates are single-site Metropolis
moves in checkerboard order (all odd interior sites, then all even ones), so
the compiled scalar loop and the vectorised numpy half-sweeps perform the
same updates given the same random numbers.

Error bars come from a jackknife over 32 bins after dropping the first
10 integrated autocorrelation times of each chain.
"""

from __future__ import annotations

import configparser
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ._accel import USE_NUMBA, njit
from .hausdorff import FitReport, fit_with_window
from .propagator import PhysParams

__all__ = [
    "LatticePath",
    "PotentialSpec",
    "McEstimate",
    "ChainRun",
    "DeltaRow",
    "DhResult",
    "PimcConfig",
    "euclidean_action",
    "metropolis_sweep",
    "run_chain",
    "measure_length",
    "check_eq13",
    "estimate_dh",
    "jackknife",
    "integrated_autocorr_time",
    "load_config",
    "PRESETS",
]

N_BINS = 32
DISCARD_TAUS = 10
KINDS = {"free": 0, "harmonic": 1, "coulomb": 2, "velocity": 3}
UNIT = PhysParams(mass_mu=1.0, hbar=1.0, time_T=1.0)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "free"
    omega: float = 1.0
    kappa: float = 1.0
    eps_reg: float = 0.1
    u0: float = 1.0
    alpha_v: float = 3.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"potential kind must be one of {sorted(KINDS)}")
        for name in ("omega", "kappa", "eps_reg", "u0", "alpha_v"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive")

    def packed(self) -> tuple[int, np.ndarray]:
        return KINDS[self.kind], np.array([self.omega, self.kappa, self.eps_reg, self.u0, self.alpha_v])


@dataclass
class LatticePath:
    """Positions x[0..N] (shape (N+1, D)) at slice width ``delta``; endpoints stay fixed."""

    x: np.ndarray
    delta: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 3:
            raise ValueError("a path needs N >= 2 slices, i.e. at least three points")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        self.x = np.ascontiguousarray(x)

    @property
    def n_slices(self) -> int:
        return self.x.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def increments(self) -> np.ndarray:
        """|x_{k+1} - x_k| for k = 0..N-1."""
        d = np.diff(self.x, axis=0)
        return np.sqrt(np.sum(d * d, axis=1))

    def length(self) -> float:
        return float(np.sum(self.increments()))

    @classmethod
    def straight(cls, x_in, x_fi, n_slices: int, delta: float) -> "LatticePath":
        x_in = np.atleast_1d(np.asarray(x_in, dtype=float))
        x_fi = np.atleast_1d(np.asarray(x_fi, dtype=float))
        t = np.linspace(0.0, 1.0, n_slices + 1)[:, None]
        return cls(x_in + t * (x_fi - x_in), delta)

    @classmethod
    def bridge(cls, x_in, x_fi, n_slices: int, delta: float, sigma: float, rng) -> "LatticePath":
        """Brownian bridge with per-step standard deviation ``sigma``."""
        path = cls.straight(x_in, x_fi, n_slices, delta)
        steps = rng.standard_normal((n_slices, path.dim)) * sigma
        walk = np.vstack([np.zeros((1, path.dim)), np.cumsum(steps, axis=0)])
        t = np.linspace(0.0, 1.0, n_slices + 1)[:, None]
        path.x += walk - t * walk[-1]
        path.x[0] = x_in
        path.x[-1] = x_fi
        return path


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_samples: int
    autocorr_time: float


# ---------------------------------------------------------------------------
# action


def _site_energy_np(y, kind, par, mu):
    if kind == 1:
        return 0.5 * mu * par[0] ** 2 * np.sum(y * y, axis=-1)
    if kind == 2:
        return -par[1] / (np.sqrt(np.sum(y * y, axis=-1)) + par[2])
    return np.zeros(y.shape[:-1])


def _link_energy_np(u, v, kind, par, mu, delta):
    d = v - u
    d2 = np.sum(d * d, axis=-1)
    e = (0.5 * mu / delta) * d2
    if kind == 3:
        e = e + delta * par[3] * (np.sqrt(d2) / delta) ** par[4]
    return e


def euclidean_action(path: LatticePath, pot: PotentialSpec, p: PhysParams = UNIT) -> float:
    kind, par = pot.packed()
    x, delta, mu = path.x, path.delta, p.mass_mu
    links = _link_energy_np(x[:-1], x[1:], kind, par, mu, delta)
    sites = delta * _site_energy_np(x[:-1], kind, par, mu)
    return float(np.sum(links + sites))


# ---------------------------------------------------------------------------
# kernels: compiled scalar loop


@njit
def _site_energy(x, k, kind, par, mu):
    if kind == 0 or kind == 3:
        return 0.0
    r2 = 0.0
    for c in range(x.shape[1]):
        r2 += x[k, c] * x[k, c]
    if kind == 1:
        return 0.5 * mu * par[0] ** 2 * r2
    return -par[1] / (math.sqrt(r2) + par[2])


@njit
def _link_energy(x, i, j, kind, par, mu, delta):
    d2 = 0.0
    for c in range(x.shape[1]):
        d = x[j, c] - x[i, c]
        d2 += d * d
    e = (0.5 * mu / delta) * d2
    if kind == 3:
        e = e + delta * par[3] * (math.sqrt(d2) / delta) ** par[4]
    return e


@njit
def _local(x, k, kind, par, mu, delta):
    return (
        _link_energy(x, k - 1, k, kind, par, mu, delta)
        + _link_energy(x, k, k + 1, kind, par, mu, delta)
        + delta * _site_energy(x, k, kind, par, mu)
    )


@njit
def _block_numba(x, delta, mu, hbar, kind, par, props, us, out_l, out_sq, out_acc, out_mid):
    n = x.shape[0] - 1
    dim = x.shape[1]
    old = np.empty(dim)
    for s in range(props.shape[0]):
        accepted = 0
        for first in range(1, 3):
            for k in range(first, n, 2):
                s_old = _local(x, k, kind, par, mu, delta)
                for c in range(dim):
                    old[c] = x[k, c]
                    x[k, c] = old[c] + props[s, k - 1, c]
                ds = _local(x, k, kind, par, mu, delta) - s_old
                arg = -ds / hbar
                if arg > 0.0:
                    arg = 0.0
                if us[s, k - 1] < math.exp(arg):
                    accepted += 1
                else:
                    for c in range(dim):
                        x[k, c] = old[c]
        tot_l = 0.0
        tot_sq = 0.0
        for k in range(n):
            d2 = 0.0
            for c in range(dim):
                d = x[k + 1, c] - x[k, c]
                d2 += d * d
            tot_l += math.sqrt(d2)
            tot_sq += d2
        out_l[s] = tot_l
        out_sq[s] = tot_sq
        out_acc[s] = accepted / (n - 1)
        out_mid[s] = x[n // 2, 0]


# ---------------------------------------------------------------------------
# kernels: vectorised numpy


def _local_np(x, ks, y, kind, par, mu, delta):
    return (
        _link_energy_np(x[ks - 1], y, kind, par, mu, delta)
        + _link_energy_np(y, x[ks + 1], kind, par, mu, delta)
        + delta * _site_energy_np(y, kind, par, mu)
    )


def _block_numpy(x, delta, mu, hbar, kind, par, props, us, out_l, out_sq, out_acc, out_mid):
    n = x.shape[0] - 1
    halves = [np.arange(first, n, 2) for first in (1, 2)]
    for s in range(props.shape[0]):
        accepted = 0
        for ks in halves:
            y = x[ks]
            y_new = y + props[s, ks - 1]
            ds = _local_np(x, ks, y_new, kind, par, mu, delta) - _local_np(x, ks, y, kind, par, mu, delta)
            take = us[s, ks - 1] < np.exp(np.minimum(-ds / hbar, 0.0))
            x[ks[take]] = y_new[take]
            accepted += int(np.count_nonzero(take))
        d = np.diff(x, axis=0)
        d2 = np.sum(d * d, axis=1)
        out_l[s] = np.sum(np.sqrt(d2))
        out_sq[s] = np.sum(d2)
        out_acc[s] = accepted / (n - 1)
        out_mid[s] = x[n // 2, 0]


def _run_block(path, pot, p, step, rng, n_sweeps, backend=None):
    """Advance ``n_sweeps`` sweeps; random numbers come from ``rng`` in a fixed layout."""
    n = path.n_slices
    props = rng.uniform(-1.0, 1.0, size=(n_sweeps, n - 1, path.dim)) * step
    us = rng.random((n_sweeps, n - 1))
    out_l = np.empty(n_sweeps)
    out_sq = np.empty(n_sweeps)
    out_acc = np.empty(n_sweeps)
    out_mid = np.empty(n_sweeps)
    kind, par = pot.packed()
    use_numba = USE_NUMBA if backend is None else backend == "numba"
    kernel = _block_numba if use_numba else _block_numpy
    kernel(
        path.x, float(path.delta), float(p.mass_mu), float(p.hbar), kind, par, props, us, out_l, out_sq, out_acc, out_mid
    )
    return out_l, out_sq, out_acc, out_mid


def metropolis_sweep(path: LatticePath, pot: PotentialSpec, p: PhysParams, step: float, rng, backend=None) -> float:
    """One checkerboard pass over the interior sites; returns the acceptance rate."""
    if not step > 0:
        raise ValueError("step must be positive")
    _, _, acc, _ = _run_block(path, pot, p, step, rng, 1, backend)
    return float(acc[0])


# ---------------------------------------------------------------------------
# statistics


def integrated_autocorr_time(series, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 2:
        return 0.0
    x = x - x.mean()
    var = float(np.dot(x, x))
    if var == 0.0:
        return 0.0
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / var
    tau = 0.5
    for m in range(1, n):
        tau += acf[m]
        if m >= c * tau:
            break
    return max(float(tau), 0.5)


def jackknife(columns, stat, n_bins: int = N_BINS) -> tuple[float, float]:
    """Jackknife estimate of ``stat(*means)`` over contiguous bins of each column."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = cols[0].size
    nb = min(n_bins, n)
    if nb < 2:
        raise ValueError("insufficient samples for a jackknife estimate")
    edges = np.linspace(0, n, nb + 1).astype(int)
    sums = np.array([[c[a:b].sum() for a, b in zip(edges[:-1], edges[1:])] for c in cols])
    counts = np.diff(edges)
    total = sums.sum(axis=1)
    full = stat(*(total / n))
    leave = np.array([stat(*((total - sums[:, b]) / (n - counts[b]))) for b in range(nb)])
    err = math.sqrt((nb - 1) / nb * float(np.sum((leave - leave.mean()) ** 2)))
    return float(full), err


# ---------------------------------------------------------------------------
# chains


@dataclass(frozen=True)
class ChainRun:
    """Per-sweep measurements of one chain (measurement phase only)."""

    length: np.ndarray = field(repr=False)
    sq_sum: np.ndarray = field(repr=False)
    midpoint: np.ndarray = field(repr=False)
    acceptance: float
    step: float
    n_slices: int
    delta: float
    dim: int

    @property
    def mean_abs_dx(self) -> np.ndarray:
        return self.length / self.n_slices

    @property
    def mean_sq_dx(self) -> np.ndarray:
        return self.sq_sum / self.n_slices


def run_chain(
    pot: PotentialSpec,
    p: PhysParams,
    n_slices: int,
    delta: float,
    *,
    sweeps: int,
    therm_sweeps: int,
    seed,
    dim: int = 1,
    x_in=None,
    x_fi=None,
    block: int = 256,
    backend=None,
) -> ChainRun:
    """Thermalise with step tuning, then record ``sweeps`` measurements.

    The chain starts from a Brownian bridge whose step width is the smaller
    of the kinetic scale sqrt(hbar delta / mu) and, for the velocity action,
    the scale (hbar delta^(a-1) / U_0)^(1/a) where that term reaches hbar. During
    thermalisation the proposal half-width is rescaled every 50 sweeps
    towards an acceptance rate in [0.4, 0.6]; it is frozen afterwards.
    """
    rng = np.random.default_rng(seed)
    x_in = np.zeros(dim) if x_in is None else x_in
    x_fi = np.zeros(dim) if x_fi is None else x_fi
    sigma = math.sqrt(p.hbar * delta / p.mass_mu)
    if pot.kind == "velocity":
        sigma = min(sigma, (p.hbar * delta ** (pot.alpha_v - 1.0) / pot.u0) ** (1.0 / pot.alpha_v))
    path = LatticePath.bridge(x_in, x_fi, n_slices, delta, sigma, rng)
    step = 2.0 * sigma
    done = 0
    while done < therm_sweeps:
        chunk = min(50, therm_sweeps - done)
        _, _, acc, _ = _run_block(path, pot, p, step, rng, chunk, backend)
        rate = float(acc.mean())
        if rate < 0.4:
            step *= 0.5 + rate
        elif rate > 0.6:
            step *= 0.4 + rate
        done += chunk
    lengths, sq, accs, mids = [], [], [], []
    done = 0
    while done < sweeps:
        chunk = min(block, sweeps - done)
        out_l, out_sq, out_acc, out_mid = _run_block(path, pot, p, step, rng, chunk, backend)
        lengths.append(out_l)
        sq.append(out_sq)
        accs.append(out_acc)
        mids.append(out_mid)
        done += chunk
    return ChainRun(
        length=np.concatenate(lengths),
        sq_sum=np.concatenate(sq),
        midpoint=np.concatenate(mids),
        acceptance=float(np.concatenate(accs).mean()),
        step=step,
        n_slices=n_slices,
        delta=delta,
        dim=dim,
    )


def _trimmed(chains, key):
    """Concatenate per-chain series after dropping 10 tau_int from each."""
    parts, taus = [], []
    for ch in chains:
        s = np.asarray(key(ch), dtype=float)
        tau = integrated_autocorr_time(s)
        taus.append(tau)
        parts.append(s[int(math.ceil(DISCARD_TAUS * tau)) :])
    return np.concatenate(parts), float(max(taus))


def _as_chains(samples):
    if isinstance(samples, ChainRun):
        return [samples]
    samples = list(samples)
    if samples and isinstance(samples[0], ChainRun):
        return samples
    return None


def measure_length(samples) -> McEstimate:
    """<L> = <sum_k |x_{k+1} - x_k|> with a jackknife error.

    ``samples`` is a ChainRun, a list of ChainRuns, a list of LatticePaths
    or a plain array of per-sample lengths.
    """
    chains = _as_chains(samples)
    if chains is not None:
        data, tau = _trimmed(chains, lambda c: c.length)
    else:
        data = np.array([q.length() if isinstance(q, LatticePath) else float(q) for q in samples])
        tau = integrated_autocorr_time(data)
    if data.size == 0:
        raise ValueError("insufficient samples")
    if data.size == 1 or np.all(data == data[0]):
        return McEstimate(float(data[0]), 0.0, int(data.size), 0.0)
    mean, err = jackknife([data], lambda a: a)
    return McEstimate(mean, err, int(data.size), tau)


def _increment_series(samples):
    chains = _as_chains(samples)
    if chains is not None:
        a, tau_a = _trimmed(chains, lambda c: c.mean_abs_dx)
        b, tau_b = _trimmed(chains, lambda c: c.mean_sq_dx)
        m = min(a.size, b.size)
        return a[-m:], b[-m:], max(tau_a, tau_b)
    paths = list(samples)
    a = np.array([q.increments().mean() for q in paths])
    b = np.array([np.mean(q.increments() ** 2) for q in paths])
    return a, b, integrated_autocorr_time(a)


def check_eq13(samples) -> McEstimate:
    """Ratio <|dx|>^2 / <dx^2>; 2/pi for Gaussian increments in one dimension."""
    a, b, tau = _increment_series(samples)
    if a.size < 2:
        raise ValueError("insufficient samples")
    if not np.any(b > 0):
        raise ValueError("increments have zero variance; ratio undefined")
    mean, err = jackknife([a, b], lambda ma, mb: ma * ma / mb)
    return McEstimate(mean, err, int(a.size), tau)


def _mean_estimate(samples, key) -> McEstimate:
    data, tau = _trimmed(samples, key)
    mean, err = jackknife([data], lambda v: v)
    return McEstimate(mean, err, int(data.size), tau)


# ---------------------------------------------------------------------------
# dimension estimate


@dataclass(frozen=True)
class PimcConfig:
    potential: str = "free"
    omega: float = 1.0
    kappa: float = 1.0
    eps_reg: float = 0.1
    u0: float = 1.0
    alpha_v: float = 3.0
    total_time: float = 1.0
    n_slices: tuple[int, ...] = (16, 32, 64, 128, 256, 512, 1024)
    dim: int = 1
    sweeps: int = 20000
    therm_sweeps: int = 2000
    n_chains: int = 2
    seed: int = 12345
    mass_mu: float = 1.0
    hbar: float = 1.0
    fit_window: str = "all"

    def __post_init__(self):
        ns = tuple(int(n) for n in (self.n_slices if not isinstance(self.n_slices, str) else self.n_slices.replace(",", " ").split()))
        object.__setattr__(self, "n_slices", ns)
        if any(n < 2 for n in ns):
            raise ValueError("every chain needs at least two slices")
        if self.sweeps < 2 * N_BINS or self.n_chains < 1 or self.therm_sweeps < 0:
            raise ValueError("sweeps must be >= 64, n_chains >= 1, therm_sweeps >= 0")
        self.potential_spec()

    def potential_spec(self) -> PotentialSpec:
        return PotentialSpec(self.potential, self.omega, self.kappa, self.eps_reg, self.u0, self.alpha_v)

    @property
    def params(self) -> PhysParams:
        return PhysParams(mass_mu=self.mass_mu, hbar=self.hbar, time_T=self.total_time)

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(self.total_time / n for n in self.n_slices)

    @classmethod
    def from_mapping(cls, data) -> "PimcConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in data.items():
            key = key.strip().replace("-", "_")
            if key == "N":
                key = "n_slices"
            if key not in kinds:
                raise ValueError(f"unknown pimc config key {key!r}")
            kind = kinds[key]
            if key == "n_slices":
                out[key] = tuple(int(t) for t in str(raw).replace(",", " ").split())
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
            out[f.name] = " ".join(str(t) for t in v) if isinstance(v, tuple) else str(v)
        return out


PRESETS = {
    "desk": {},
    "quick": {"n_slices": (16, 32, 64, 128), "sweeps": 4000, "therm_sweeps": 500, "n_chains": 1},
}


def load_config(text: str) -> PimcConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string("[pimc]\n" + text)
    return PimcConfig.from_mapping(dict(cp["pimc"]))


@dataclass(frozen=True)
class DeltaRow:
    delta: float
    n_slices: int
    mean_abs_dx: McEstimate
    mean_sq_dx: McEstimate
    mean_L: McEstimate
    ratio_eq13: McEstimate
    acceptance: float
    tau_slow: float
    sweeps: int

    @property
    def slow_modes_resolved(self) -> bool:
        """False when the midpoint autocorrelation is too long for the run.

        Local moves relax the longest path mode in ~N^2 sweeps, a time the
        length observable itself barely sees; when this flag is False the
        quoted error bars miss that slow contribution.
        """
        return self.sweeps >= DISCARD_TAUS * N_BINS * self.tau_slow


@dataclass(frozen=True)
class DhResult:
    rows: tuple[DeltaRow, ...]
    report: FitReport

    @property
    def d_H(self) -> float:
        return self.report.d_H

    @property
    def fit(self):
        return self.report.fit


def _delta_row(cfg: PimcConfig, n: int, seeds) -> DeltaRow:
    delta = cfg.total_time / n
    pot = cfg.potential_spec()
    chains = [
        run_chain(pot, cfg.params, n, delta, sweeps=cfg.sweeps, therm_sweeps=cfg.therm_sweeps, seed=s, dim=cfg.dim)
        for s in seeds
    ]
    return DeltaRow(
        delta=delta,
        n_slices=n,
        mean_abs_dx=_mean_estimate(chains, lambda c: c.mean_abs_dx),
        mean_sq_dx=_mean_estimate(chains, lambda c: c.mean_sq_dx),
        mean_L=measure_length(chains),
        ratio_eq13=check_eq13(chains),
        acceptance=float(np.mean([c.acceptance for c in chains])),
        tau_slow=float(max(integrated_autocorr_time(c.midpoint) for c in chains)),
        sweeps=cfg.sweeps,
    )


def estimate_dh(cfg: PimcConfig | None = None, *, jobs: int = 1, **overrides) -> DhResult:
    """Run chains at every slice count, then fit <L> against eps = <|dx|>.

    The total Euclidean time is held fixed, so delta = total_time / N.
    Chain seeds are spawned from ``cfg.seed`` in a fixed order, which keeps
    results independent of ``jobs``.
    """
    cfg = replace(cfg or PimcConfig(), **overrides)
    if len(cfg.n_slices) < 3:
        raise ValueError("need at least three slice counts")
    ss = np.random.SeedSequence(cfg.seed)
    per_delta = ss.spawn(len(cfg.n_slices))
    work = [(n, sq.spawn(cfg.n_chains)) for n, sq in zip(cfg.n_slices, per_delta)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            rows = list(pool.map(lambda t: _delta_row(cfg, *t), work))
    else:
        rows = [_delta_row(cfg, n, seeds) for n, seeds in work]
    points = [(r.mean_abs_dx.mean, r.mean_L.mean) for r in rows]
    return DhResult(tuple(rows), fit_with_window(points, cfg.fit_window))
