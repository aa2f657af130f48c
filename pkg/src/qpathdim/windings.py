"""Winding vectors, exact flux assignments and representative paths.

Fluxes are exact rationals in units where q / (2 pi hbar c) = 1, i.e. a flux
value is directly the dimensionless AB parameter alpha of that solenoid. A
path class is labelled by its winding vector (one integer per solenoid).

Representative paths live on the lattice of gap midpoints: points halfway
between two neighbouring solenoids of a regular square array, plus the
matching points on the outer ring of the array. Internally every point is
kept in doubled integer coordinates (solenoid (ix, iy) sits at (2ix, 2iy)),
so the graph construction is exact.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np

__all__ = [
    "DecodeError",
    "NoSolutionError",
    "NotUniqueError",
    "FluxAssignment",
    "SolenoidArray",
    "RepresentativePath",
    "assign_fluxes",
    "verify_uniqueness",
    "decode_total_flux",
    "total_flux",
    "generalized_ab_phase",
    "enumerate_classes",
    "representative_path",
    "parse_winding",
    "format_winding",
]

DEFAULT_CLASS_LIMIT = 200_000


class DecodeError(ValueError):
    pass


class NoSolutionError(DecodeError):
    pass


class NotUniqueError(DecodeError):
    def __init__(self, solutions):
        self.solutions = [tuple(s) for s in solutions]
        shown = ", ".join("(" + ",".join(map(str, s)) + ")" for s in self.solutions[:4])
        super().__init__(f"total flux is reached by {len(self.solutions)} winding vectors: {shown}")


# ---------------------------------------------------------------------------
# flux assignments


@dataclass(frozen=True)
class FluxAssignment:
    fluxes: tuple[Fraction, ...]
    n_cutoff: int

    def __post_init__(self):
        fl = tuple(Fraction(f) for f in self.fluxes)
        object.__setattr__(self, "fluxes", fl)
        if not fl:
            raise ValueError("need at least one solenoid")
        if int(self.n_cutoff) < 1:
            raise ValueError("n_cutoff must be >= 1")
        object.__setattr__(self, "n_cutoff", int(self.n_cutoff))

    @property
    def count(self) -> int:
        return len(self.fluxes)

    @property
    def total(self) -> Fraction:
        return sum(self.fluxes, Fraction(0))

    def as_float(self) -> np.ndarray:
        return np.array([float(f) for f in self.fluxes])

    def to_text(self) -> str:
        lines = [f"n_cutoff={self.n_cutoff}"]
        lines += [f"{f.numerator}/{f.denominator}" for f in self.fluxes]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FluxAssignment":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("n_cutoff="):
            raise ValueError("flux file must start with 'n_cutoff=<k>'")
        cutoff = int(lines[0].split("=", 1)[1])
        return cls(tuple(Fraction(s) for s in lines[1:]), cutoff)


def _integer_fluxes(fluxes: Sequence[Fraction]) -> tuple[list[int], int]:
    denom = reduce(math.lcm, (f.denominator for f in fluxes), 1)
    return [int(f * denom) for f in fluxes], denom


def verify_uniqueness(fa: FluxAssignment, limit: int = DEFAULT_CLASS_LIMIT) -> bool:
    """True when all winding vectors inside the cutoff box give distinct totals.

    Exhaustive when the box has at most ``limit`` points. Larger boxes are
    certified only by the prime-denominator argument: if the reduced
    denominators are distinct primes, each larger than 2 n_cutoff, then
    sum d_i p_i / q_i = 0 with |d_i| <= 2 n_cutoff forces every d_i = 0.
    """
    n = fa.n_cutoff
    width = 2 * n + 1
    if width ** fa.count <= limit:
        ints, _ = _integer_fluxes(fa.fluxes)
        sums = {0}
        for a in ints:
            grown = {s + k * a for s in sums for k in range(-n, n + 1)}
            if len(grown) != len(sums) * width:
                return False
            sums = grown
        return True
    dens = [f.denominator for f in fa.fluxes]
    if len(set(dens)) != len(dens):
        raise ValueError("cutoff box too large for exhaustive check and denominators repeat")
    for q in dens:
        if q <= 2 * n or not _is_prime(q):
            raise ValueError("cutoff box too large for exhaustive check; no prime certificate")
    return True


def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    for d in range(2, math.isqrt(q) + 1):
        if q % d == 0:
            return False
    return True


def _primes_between(lo: int, hi: int) -> list[int]:
    sieve = np.ones(hi, dtype=bool)
    sieve[:2] = False
    for d in range(2, math.isqrt(hi - 1) + 1):
        if sieve[d]:
            sieve[d * d :: d] = False
    return [int(q) for q in np.nonzero(sieve)[0] if q >= lo]


def assign_fluxes(N_S: int, n_cutoff: int, seed: int, *, max_tries: int = 32) -> FluxAssignment:
    """Draw N_S fluxes p_i/q_i in (0, 1) with distinct prime denominators.

    Denominators are primes above max(10 n_cutoff, 97); numerators are
    uniform in [1, q_i - 1], so each fraction is already reduced.
    """
    if N_S < 1 or n_cutoff < 1:
        raise ValueError("N_S and n_cutoff must be >= 1")
    lo = max(10 * n_cutoff + 1, 97)
    pool = _primes_between(lo, lo + max(2000, 40 * N_S))
    if len(pool) < N_S:  # pragma: no cover
        raise ValueError("not enough primes in the denominator pool")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        qs = rng.choice(len(pool), size=N_S, replace=False)
        fl = []
        for qi in qs:
            q = pool[int(qi)]
            p = int(rng.integers(1, q))
            fl.append(Fraction(p, q))
        fa = FluxAssignment(tuple(fl), n_cutoff)
        if verify_uniqueness(fa):
            return fa
    raise RuntimeError(f"no certified flux assignment after {max_tries} draws (seed={seed})")


def total_flux(w: Sequence[int], fa: FluxAssignment) -> Fraction:
    if len(w) != fa.count:
        raise ValueError("winding vector and flux assignment differ in length")
    return sum((int(n) * f for n, f in zip(w, fa.fluxes)), Fraction(0))


def decode_total_flux(R, fa: FluxAssignment, limit: int = DEFAULT_CLASS_LIMIT) -> tuple[int, ...]:
    """Recover the winding vector with sum n_i phi_i = R inside the cutoff box.

    Exact integer arithmetic, meet-in-the-middle over the two halves of the
    solenoid list. Raises NoSolutionError or NotUniqueError.
    """
    R = Fraction(R)
    n = fa.n_cutoff
    if (2 * n + 1) ** fa.count > limit:
        raise ValueError("cutoff box exceeds the enumeration limit")
    ints, denom = _integer_fluxes(fa.fluxes)
    target = R * denom
    if target.denominator != 1:
        raise NoSolutionError(f"total flux {R} is not an integer combination of the fluxes")
    target = int(target)
    half = fa.count // 2
    rng = range(-n, n + 1)
    left: dict[int, list[tuple[int, ...]]] = {}
    for combo in itertools.product(rng, repeat=half):
        s = sum(k * a for k, a in zip(combo, ints[:half]))
        left.setdefault(s, []).append(combo)
    found = []
    for combo in itertools.product(rng, repeat=fa.count - half):
        s = sum(k * a for k, a in zip(combo, ints[half:]))
        for lhs in left.get(target - s, ()):
            found.append(lhs + combo)
    if not found:
        raise NoSolutionError(f"no winding vector with |n_i| <= {n} gives total flux {R}")
    if len(found) > 1:
        raise NotUniqueError(sorted(found))
    return found[0]


def generalized_ab_phase(w: Sequence[int], fa: FluxAssignment, p=None, dtheta: float = 0.0) -> complex:
    """exp[i c ((theta'-theta) phi_tot + 2 pi sum_i n_i phi_i)], c = q / (2 pi hbar c).

    Without ``p`` the coupling is 1 and the winding part is reduced modulo 1
    in exact arithmetic before it becomes a float, so the result is a group
    homomorphism in ``w`` up to rounding of a single cos/sin.
    """
    wind = total_flux(w, fa)
    if p is None:
        frac = wind - math.floor(wind)
        angle = 2.0 * math.pi * float(frac) + float(dtheta) * float(fa.total)
    else:
        c = p.flux_coupling
        angle = c * (float(dtheta) * float(fa.total) + 2.0 * math.pi * float(wind))
    return complex(math.cos(angle), math.sin(angle))


def enumerate_classes(N_S: int, n_cutoff: int, limit: int = DEFAULT_CLASS_LIMIT) -> list[tuple[int, ...]]:
    """All winding vectors with |n_i| <= n_cutoff, in lexicographic order."""
    if N_S < 1 or n_cutoff < 0:
        raise ValueError("N_S must be >= 1 and n_cutoff >= 0")
    size = (2 * n_cutoff + 1) ** N_S
    if size > limit:
        raise ValueError(f"{size} homotopy classes exceed the configured limit {limit}")
    return list(itertools.product(range(-n_cutoff, n_cutoff + 1), repeat=N_S))


def parse_winding(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(","))


def format_winding(w: Sequence[int]) -> str:
    return ",".join(str(int(n)) for n in w)


# ---------------------------------------------------------------------------
# solenoid arrays and representative paths


@dataclass(frozen=True)
class SolenoidArray:
    """nx by ny square array of solenoids, spacing ``spacing_dx``.

    Solenoid (ix, iy) sits at origin + (ix, iy) * dx and has index ix * ny + iy.
    """

    nx: int
    ny: int
    spacing_dx: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("array needs at least one solenoid")
        if not self.spacing_dx > 0:
            raise ValueError("spacing must be positive")

    @property
    def count(self) -> int:
        return self.nx * self.ny

    @property
    def positions(self) -> np.ndarray:
        ix, iy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        grid = np.stack([ix.ravel(), iy.ravel()], axis=1) * self.spacing_dx
        return grid + np.asarray(self.origin, dtype=float)

    def cell(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.count:
            raise IndexError(f"solenoid index {index} out of range")
        return divmod(index, self.ny)

    def to_real(self, node) -> np.ndarray:
        return np.asarray(self.origin, dtype=float) + 0.5 * self.spacing_dx * np.asarray(node, dtype=float)


@dataclass(frozen=True)
class RepresentativePath:
    polyline: np.ndarray = field(repr=False)
    winding: tuple[int, ...]
    classical_length: float


def _midpoint_graph(arr: SolenoidArray):
    nodes = set()
    for iy in range(arr.ny):
        for ix in range(-1, arr.nx):
            nodes.add((2 * ix + 1, 2 * iy))
    for ix in range(arr.nx):
        for iy in range(-1, arr.ny):
            nodes.add((2 * ix, 2 * iy + 1))
    adj: dict[tuple[int, int], set] = {v: set() for v in nodes}
    for cx in range(-1, arr.nx):
        for cy in range(-1, arr.ny):
            a, b = 2 * cx + 1, 2 * cy + 1
            around = [v for v in ((a, b - 1), (a, b + 1), (a - 1, b), (a + 1, b)) if v in nodes]
            for u, v in itertools.combinations(around, 2):
                adj[u].add(v)
                adj[v].add(u)
    return adj


def _dijkstra(adj, weight, sources, eps):
    """Shortest paths with ties broken by lexicographically smallest vertex sequence."""
    best = {}
    heap = []
    for s in sources:
        best[s] = (0.0, (s,))
        heapq.heappush(heap, (0.0, (s,)))
    while heap:
        d, path = heapq.heappop(heap)
        u = path[-1]
        bd, bp = best[u]
        if d > bd + eps or (abs(d - bd) <= eps and path != bp):
            continue
        for v in sorted(adj[u]):
            nd = d + weight(u, v)
            npath = path + (v,)
            if v not in best:
                best[v] = (nd, npath)
                heapq.heappush(heap, (nd, npath))
                continue
            od, op = best[v]
            if nd < od - eps or (abs(nd - od) <= eps and npath < op):
                best[v] = (nd, npath)
                heapq.heappush(heap, (nd, npath))
    return best


def representative_path(w: Sequence[int], arr: SolenoidArray, x_in, x_fi) -> RepresentativePath:
    """Shortest gap-midpoint polyline from x_in to x_fi carrying winding ``w``.

    The base route is a shortest path through the midpoint graph. Each
    nonzero n_i adds |n_i| turns of the diamond through the four midpoints
    around solenoid i (counter-clockwise for n_i > 0), reached by a shortest
    detour from the nearest vertex of the base route and left the same way.
    """
    w = tuple(int(n) for n in w)
    if len(w) != arr.count:
        raise ValueError(f"winding vector has {len(w)} entries, array has {arr.count} solenoids")
    x_in = np.asarray(x_in, dtype=float)
    x_fi = np.asarray(x_fi, dtype=float)
    ox, _ = arr.origin
    if not (x_in[0] < ox and x_fi[0] > ox + (arr.nx - 1) * arr.spacing_dx):
        raise ValueError("x_in must lie left of the array and x_fi right of it")

    adj = _midpoint_graph(arr)
    start, end = ("in",), ("fi",)
    pos = {v: arr.to_real(v) for v in adj}
    pos[start] = x_in
    pos[end] = x_fi
    left_col = min(v[0] for v in adj)
    right_col = max(v[0] for v in adj)
    full = {v: set(nb) for v, nb in adj.items()}
    full[start] = {v for v in adj if v[0] in (left_col, left_col + 1)}
    full[end] = set()
    for v in adj:
        if v[0] in (right_col, right_col - 1):
            full[v].add(end)

    def weight(u, v):
        return float(np.hypot(*(pos[u] - pos[v])))

    eps = 1e-12 * max(float(np.hypot(*(x_fi - x_in))), arr.spacing_dx)
    base = _route(full, weight, start, end, eps)
    route_nodes = base[1:-1]

    excursions: dict[int, list] = {}
    for i, n in enumerate(w):
        if n == 0:
            continue
        ix, iy = arr.cell(i)
        cx, cy = 2 * ix, 2 * iy
        diamond = [(cx + 1, cy), (cx, cy + 1), (cx - 1, cy), (cx, cy - 1)]
        if any(d not in adj for d in diamond):  # pragma: no cover - regular grids always have them
            raise ValueError(f"solenoid {i} is not surrounded by gap midpoints")
        tree = _dijkstra(adj, weight, [diamond[0], diamond[1], diamond[2], diamond[3]], eps)
        choice = None
        for k, v in enumerate(route_nodes):
            d, path = tree[v]
            if choice is None or d < choice[0] - eps:
                choice = (d, k, path)
        _, k, path = choice
        detour = list(reversed(path))  # v ... diamond vertex
        d0 = diamond.index(detour[-1])
        ring = diamond if n > 0 else [diamond[0], diamond[3], diamond[2], diamond[1]]
        r0 = ring.index(diamond[d0])
        loop = []
        for _ in range(abs(n)):
            loop += [ring[(r0 + s) % 4] for s in range(1, 5)]
        excursions.setdefault(k, []).append(detour[1:] + loop + list(reversed(detour))[1:])

    seq = [start]
    for k, v in enumerate(route_nodes):
        seq.append(v)
        for exc in excursions.get(k, ()):
            seq.extend(exc)
    seq.append(end)
    poly = np.array([pos[v] for v in seq])
    length = float(np.sum(np.hypot(*np.diff(poly, axis=0).T)))
    return RepresentativePath(polyline=poly, winding=w, classical_length=length)


def _route(full, weight, start, end, eps):
    # lexicographic tie-break needs comparable labels: map to sortable keys
    order = sorted((v for v in full if v not in (start, end)))
    key = {v: (1,) + v for v in order}
    key[start] = (0, 0, 0)
    key[end] = (2, 0, 0)
    inv = {k: v for v, k in key.items()}
    adj = {key[u]: {key[v] for v in nb} for u, nb in full.items()}

    def w(a, b):
        return weight(inv[a], inv[b])

    best = _dijkstra(adj, w, [key[start]], eps)
    if key[end] not in best:  # pragma: no cover
        raise ValueError("x_fi is unreachable from x_in")
    return [inv[k] for k in best[key[end]][1]]
