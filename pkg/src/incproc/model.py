"""Underlying random walk, particle configurations, and inclusion-process kinetics.

The model is an interacting particle system on a finite site set: a particle
at site x jumps to y at rate ``eta_x * (d + eta_y) * r(x, y)``, the sum of an
attractive term ``eta_x * eta_y * r`` and a diffusive term ``d * eta_x * r``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import MissingValue, NonIrreducibleWalk, SameSite

MAX_SITES = 64

_FLAG_TOL = 1e-12


def _strongly_connected(adj: np.ndarray) -> bool:
    """Forward and backward reachability from node 0 over a boolean adjacency."""
    n = adj.shape[0]

    def reach(a: np.ndarray) -> bool:
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.nonzero(a[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        return bool(seen.all())

    return reach(adj) and reach(adj.T)


@dataclass(frozen=True)
class WalkSpec:
    """An irreducible continuous-time random walk on a finite label set.

    Parameters
    ----------
    sites : tuple of str
        External site labels; internally sites are indices ``0..kappa-1``.
    rates : ndarray, shape (kappa, kappa)
        Nonnegative jump rates with zero diagonal, units 1/time.
    """

    sites: tuple[str, ...]
    rates: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        object.__setattr__(self, "rates", r)
        kappa = len(self.sites)
        if kappa < 2:
            raise ValueError("need at least 2 sites")
        if kappa > MAX_SITES:
            raise ValueError(f"at most {MAX_SITES} sites supported")
        if r.shape != (kappa, kappa):
            raise ValueError(f"rate matrix shape {r.shape} != ({kappa}, {kappa})")
        if (r < 0).any():
            raise ValueError("rates must be nonnegative")
        if np.diagonal(r).any():
            raise ValueError("rate matrix diagonal must be zero")
        if not _strongly_connected(r > 0):
            raise NonIrreducibleWalk("rate graph is not strongly connected")
        r.setflags(write=False)

    @property
    def kappa(self) -> int:
        return len(self.sites)

    @property
    def holding(self) -> np.ndarray:
        """Per-site holding rates ``lambda(x) = sum_y r(x, y)``."""
        return self.rates.sum(axis=1)

    def neighbor_pairs(self) -> list[tuple[int, int]]:
        """Unordered pairs x < y with ``r(x,y) + r(y,x) > 0``."""
        out = []
        for x in range(self.kappa):
            for y in range(x + 1, self.kappa):
                if self.rates[x, y] + self.rates[y, x] > 0:
                    out.append((x, y))
        return out

    @classmethod
    def from_matrix(cls, rates, sites: Sequence[str] | None = None) -> "WalkSpec":
        r = np.asarray(rates, dtype=float)
        if sites is None:
            sites = tuple(str(i) for i in range(r.shape[0]))
        return cls(tuple(str(s) for s in sites), r)

    @classmethod
    def cycle(cls, kappa: int, p: float, total: float = 1.0) -> "WalkSpec":
        """Directed cycle: rate ``total*p`` to x+1 and ``total*(1-p)`` to x-1."""
        r = np.zeros((kappa, kappa))
        for x in range(kappa):
            r[x, (x + 1) % kappa] += total * p
            r[x, (x - 1) % kappa] += total * (1.0 - p)
        return cls.from_matrix(r)

    def to_json(self) -> str:
        return json.dumps(
            {"sites": list(self.sites), "rates": self.rates.tolist()},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, doc: str | Mapping) -> "WalkSpec":
        data = json.loads(doc) if isinstance(doc, str) else dict(doc)
        unknown = set(data) - {"sites", "rates"}
        if unknown:
            raise ValueError(f"unknown keys in walk document: {sorted(unknown)}")
        if "sites" not in data or "rates" not in data:
            raise ValueError("walk document needs 'sites' and 'rates'")
        sites = tuple(str(s) for s in data["sites"])
        rates = np.asarray(data["rates"], dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or rates.shape[0] != len(sites):
            raise ValueError("rate matrix shape does not match the site list")
        return cls(sites, rates)


@dataclass(frozen=True)
class WalkAnalysis:
    """Derived quantities of a walk: invariant measure, constants, flags.

    ``q_pair[x, y]`` is ``min(r(x,y), r(y,x)) / max(r(x,y), r(y,x))`` for
    interacting pairs and NaN elsewhere; ``q`` is its maximum over pairs with
    unequal rates (0 when every interacting pair is symmetric, the tightest
    consistent choice since q only feeds error bounds).
    """

    m: np.ndarray
    m_star: float
    s_max: tuple[int, ...]
    r1: float
    r2: float
    lam: float
    q_pair: np.ndarray
    q: float
    rev: bool
    ui: bool
    up: bool


def analyze_walk(spec: WalkSpec) -> WalkAnalysis:
    """Solve the walk's stationarity equations and derive its constants."""
    r = spec.rates
    kappa = spec.kappa
    q_gen = r.T - np.diag(spec.holding)  # columns: balance equations
    a = q_gen.copy()
    a[-1, :] = 1.0
    b = np.zeros(kappa)
    b[-1] = 1.0
    m = np.linalg.solve(a, b)
    residual = np.abs(m @ (r - np.diag(spec.holding))).max()
    if residual > 1e-10 * max(1.0, np.abs(r).max()):
        raise NonIrreducibleWalk(f"stationary solve residual {residual:.2e}")

    m_star = float(m.max())
    s_max = tuple(int(i) for i in np.nonzero(m >= m_star - _FLAG_TOL)[0])
    positive = r[r > 0]
    r1 = float(positive.min())
    r2 = float(r.max())
    lam = float(spec.holding.max())

    q_pair = np.full((kappa, kappa), np.nan)
    q = 0.0
    for x in range(kappa):
        for y in range(kappa):
            if x == y:
                continue
            hi = max(r[x, y], r[y, x])
            if hi > 0:
                lo = min(r[x, y], r[y, x])
                q_pair[x, y] = lo / hi
                if r[x, y] != r[y, x]:
                    q = max(q, lo / hi)

    rev = True
    for x in range(kappa):
        for y in range(kappa):
            if abs(m[x] * r[x, y] - m[y] * r[y, x]) > _FLAG_TOL:
                rev = False
    ui = bool(np.abs(m - 1.0 / kappa).max() <= _FLAG_TOL)
    off_diag = r[~np.eye(kappa, dtype=bool)]
    up = bool(off_diag.min() > 0)

    return WalkAnalysis(
        m=m, m_star=m_star, s_max=s_max, r1=r1, r2=r2, lam=lam,
        q_pair=q_pair, q=q, rev=rev, ui=ui, up=up,
    )


@dataclass(frozen=True)
class ProcessParams:
    """Particle count N and diffusion parameter d_N for one system size.

    ``schedule`` optionally records the deterministic map N -> d_N the value
    came from, so parameters at other sizes can be derived with ``at``.
    """

    n: int
    d: float
    schedule: Callable[[int], float] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("N must be a positive integer")
        if not self.d > 0:
            raise ValueError("d_N must be positive")

    @classmethod
    def from_schedule(cls, n: int, schedule: Callable[[int], float]) -> "ProcessParams":
        return cls(n=n, d=float(schedule(n)), schedule=schedule)

    def at(self, n: int) -> "ProcessParams":
        """Parameters at another size; requires a schedule."""
        if self.schedule is None:
            raise ValueError("no schedule attached to these parameters")
        return ProcessParams.from_schedule(n, self.schedule)


def schedule_power(coeff: float, exponent: float) -> Callable[[int], float]:
    """Deterministic schedule N -> coeff * N**(-exponent)."""
    def d_of_n(n: int) -> float:
        return coeff * float(n) ** (-exponent)
    return d_of_n


def schedule_fixed(value: float) -> Callable[[int], float]:
    """Constant schedule N -> value."""
    def d_of_n(n: int) -> float:
        return value
    return d_of_n


@dataclass(frozen=True)
class Configuration:
    """Particle counts per site, summing to the total N."""

    counts: tuple[int, ...]
    total: int = field(init=False)

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "total", int(sum(self.counts)))

    @classmethod
    def single_site(cls, kappa: int, n: int, x: int) -> "Configuration":
        counts = [0] * kappa
        counts[x] = n
        return cls(tuple(counts))

    def __getitem__(self, x: int) -> int:
        return self.counts[x]

    def __len__(self) -> int:
        return len(self.counts)


def apply_move(eta: Configuration | Sequence[int], x: int, y: int):
    """Send one particle from x to y; identity when site x is empty."""
    if x == y:
        raise SameSite(f"move {x} -> {y}")
    counts = eta.counts if isinstance(eta, Configuration) else tuple(eta)
    if counts[x] == 0:
        return eta if isinstance(eta, Configuration) else counts
    moved = list(counts)
    moved[x] -= 1
    moved[y] += 1
    moved = tuple(moved)
    return Configuration(moved) if isinstance(eta, Configuration) else moved


@dataclass(frozen=True)
class LocalKinetics:
    """Outgoing moves of one configuration: rates, holding rate, jump probs."""

    moves: tuple[tuple[int, int, float], ...]
    holding: float
    probs: tuple[tuple[int, int, float], ...]


def local_kinetics(spec: WalkSpec, params: ProcessParams,
                   eta: Configuration | Sequence[int]) -> LocalKinetics:
    """All positive-rate moves out of ``eta`` with the holding rate.

    The rate of the move x -> y is ``eta_x * (d + eta_y) * r(x, y)``; moves
    with zero rate are omitted.
    """
    counts = eta.counts if isinstance(eta, Configuration) else tuple(eta)
    r = spec.rates
    d = params.d
    moves = []
    holding = 0.0
    for x in range(spec.kappa):
        cx = counts[x]
        if cx == 0:
            continue
        for y in range(spec.kappa):
            rxy = r[x, y]
            if rxy == 0.0 or y == x:
                continue
            rate = cx * (d + counts[y]) * rxy
            moves.append((x, y, rate))
            holding += rate
    probs = tuple((x, y, rate / holding) for x, y, rate in moves)
    return LocalKinetics(moves=tuple(moves), holding=holding, probs=probs)


def generator_apply(spec: WalkSpec, params: ProcessParams,
                    f: Mapping | Callable, eta: Configuration | Sequence[int]) -> float:
    """Apply the process generator to a state-indexed function at ``eta``.

    Returns ``sum_{x,y} eta_x (d + eta_y) r(x,y) (f(sigma^{x,y} eta) - f(eta))``.
    ``f`` may be a mapping keyed by count tuples or a callable on them.
    """
    counts = eta.counts if isinstance(eta, Configuration) else tuple(eta)

    def value(state: tuple[int, ...]) -> float:
        try:
            if callable(f):
                return float(f(state))
            return float(f[state])
        except KeyError as exc:
            raise MissingValue(f"function undefined at state {state}") from exc

    here = value(counts)
    kin = local_kinetics(spec, params, counts)
    total = 0.0
    for x, y, rate in kin.moves:
        moved = list(counts)
        moved[x] -= 1
        moved[y] += 1
        total += rate * (value(tuple(moved)) - here)
    return total


def log_weight_table(n: int, d: float) -> np.ndarray:
    """Log of the single-site occupation weights w(0..n).

    w(0) = 1 and w(k+1) = w(k) * (k + d) / (k + 1); equivalently
    w(k) = Gamma(k + d) / (k! Gamma(d)). Computed in log space because the
    products underflow for large n.
    """
    logw = np.zeros(n + 1)
    for k in range(1, n + 1):
        logw[k] = logw[k - 1] + math.log((k - 1 + d) / k)
    return logw
