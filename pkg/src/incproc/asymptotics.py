"""Closed-form predictions and classification of the condensate dynamics.

The drift digraph ``b(x, y) = max(r(x,y) - r(y,x), 0)`` determines which
sites survive in the long-time limit (the terminal strongly connected
components), which limiting chain describes the condensate motion, and on
which time scale (1/d_N for symmetric motion, 1/(N d_N) otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (InsufficientData, InvalidCase, NotSemiAttracting,
                     PremiseViolated)
from .gordan import GordanCertificate, gordan_certificate
from .model import WalkSpec, analyze_walk
from .regions import RegionSpec
from .states import DEFAULT_CAP, StateEnumeration


@dataclass(frozen=True)
class ErrorScale:
    """The error scale ell_N = d_N log N + q**N with its two components."""

    n: int
    d: float
    q: float

    @property
    def log_term(self) -> float:
        return self.d * math.log(self.n)

    @property
    def geometric_term(self) -> float:
        return self.q ** self.n if self.q > 0 else 0.0

    @property
    def ell(self) -> float:
        return self.log_term + self.geometric_term


def strongly_connected_components(adj: np.ndarray) -> list[list[int]]:
    """Tarjan's algorithm (iterative) over a boolean adjacency matrix."""
    n = adj.shape[0]
    succ = [[int(v) for v in np.nonzero(adj[u])[0]] for u in range(n)]
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            u, pi = work[-1]
            if pi == 0:
                index[u] = low[u] = counter
                counter += 1
                stack.append(u)
                on_stack[u] = True
            advanced = False
            for k in range(pi, len(succ[u])):
                v = succ[u][k]
                if index[v] == -1:
                    work[-1] = (u, k + 1)
                    work.append((v, 0))
                    advanced = True
                    break
                if on_stack[v]:
                    low[u] = min(low[u], index[v])
            if advanced:
                continue
            if low[u] == index[u]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == u:
                        break
                out.append(sorted(comp))
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[u])
    return out


@dataclass(frozen=True)
class Classification:
    """Recurrent structure of the drift digraph of a walk."""

    walk: WalkSpec
    b: np.ndarray
    components: tuple[tuple[int, ...], ...]
    terminal_components: tuple[tuple[int, ...], ...]
    s0: tuple[int, ...]
    irreducible_on_s0: bool
    symmetric_on_s0: bool

    def is_attracting(self, a_set) -> bool:
        """Every interacting pair leaving A has strictly larger inward rate."""
        return self._attracting(a_set, strict=True)

    def is_semi_attracting(self, a_set) -> bool:
        """Every interacting pair leaving A has at least as large inward rate."""
        return self._attracting(a_set, strict=False)

    def _attracting(self, a_set, strict: bool) -> bool:
        a = set(int(v) for v in a_set)
        r = self.walk.rates
        for x in a:
            for y in range(self.walk.kappa):
                if y in a:
                    continue
                if r[x, y] + r[y, x] == 0:
                    continue
                if strict:
                    if not r[x, y] < r[y, x]:
                        return False
                elif not r[x, y] <= r[y, x]:
                    return False
        return True


def classify(walk: WalkSpec) -> Classification:
    """Drift kernel, its recurrent set, and the limiting-chain flags.

    The recurrent set is the union of terminal strongly connected components
    of the strict-positivity digraph of ``b``; it is always semi-attracting.
    """
    r = walk.rates
    b = np.maximum(r - r.T, 0.0)
    comps = strongly_connected_components(b > 0)
    comp_of = {}
    for ci, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = ci
    terminal = []
    for ci, comp in enumerate(comps):
        exits = False
        for u in comp:
            for v in np.nonzero(b[u] > 0)[0]:
                if comp_of[int(v)] != ci:
                    exits = True
        if not exits:
            terminal.append(tuple(comp))
    s0 = tuple(sorted(v for comp in terminal for v in comp))
    symmetric = all(r[x, y] == r[y, x] for x in s0 for y in s0)
    return Classification(
        walk=walk, b=b,
        components=tuple(tuple(c) for c in comps),
        terminal_components=tuple(terminal),
        s0=s0,
        irreducible_on_s0=(len(terminal) == 1),
        symmetric_on_s0=symmetric,
    )


@dataclass(frozen=True)
class LimitChain:
    """Limiting condensate chain on the surviving sites with its time scale."""

    mode: str  # "rv" | "nrv"
    sites: tuple[int, ...]
    rates: np.ndarray
    scale: str  # "1/d_N" | "1/(N*d_N)"
    nu: np.ndarray

    def theta(self, n: int, d: float) -> float:
        return 1.0 / d if self.mode == "rv" else 1.0 / (n * d)


def _chain_stationary(rates: np.ndarray) -> np.ndarray:
    k = rates.shape[0]
    if k == 1:
        return np.ones(1)
    gen = rates - np.diag(rates.sum(axis=1))
    a = gen.T.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    return np.linalg.solve(a, rhs)


def limit_chain(walk: WalkSpec, classification: Classification, mode: str) -> LimitChain:
    """Build the limiting chain for the requested route.

    ``nrv``: drift rates on the recurrent set at scale 1/(N d_N); requires a
    single terminal component. ``rv``: the walk restricted to the recurrent
    set at scale 1/d_N; requires symmetric rates on it, an attracting
    recurrent set, and irreducibility of the restriction.
    """
    s0 = classification.s0
    idx = {x: i for i, x in enumerate(s0)}
    k = len(s0)
    if mode == "nrv":
        if not classification.irreducible_on_s0:
            raise PremiseViolated(
                "drift chain restricted to the recurrent set is not irreducible "
                f"({len(classification.terminal_components)} terminal components)")
        rates = np.zeros((k, k))
        for x in s0:
            for y in s0:
                if x != y:
                    rates[idx[x], idx[y]] = classification.b[x, y]
        return LimitChain(mode="nrv", sites=s0, rates=rates, scale="1/(N*d_N)",
                          nu=_chain_stationary(rates))
    if mode == "rv":
        if not classification.symmetric_on_s0:
            raise PremiseViolated("rates are not symmetric on the recurrent set")
        if not classification.is_attracting(s0):
            raise PremiseViolated("recurrent set is not attracting")
        rates = np.zeros((k, k))
        for x in s0:
            for y in s0:
                if x != y:
                    rates[idx[x], idx[y]] = walk.rates[x, y]
        if k > 1 and not _irreducible(rates):
            raise PremiseViolated(
                "walk restricted to the recurrent set is not irreducible")
        return LimitChain(mode="rv", sites=s0, rates=rates, scale="1/d_N",
                          nu=_chain_stationary(rates))
    raise ValueError(f"unknown mode {mode!r}; expected 'rv' or 'nrv'")


def _irreducible(rates: np.ndarray) -> bool:
    from .model import _strongly_connected
    return _strongly_connected(rates > 0)


TUBE_CASES = ("asym_fwd", "asym_bwd", "asym_noback", "symmetric")


@dataclass(frozen=True)
class TubePrediction:
    """Leading-order boundary-hitting probability from the first tube state."""

    case: str
    probability: float
    error_scale: ErrorScale


def tube_hitting_prediction(case: str, q_xy: float, n: int,
                            d: float = 0.0) -> TubePrediction:
    """Closed-form crossing probability for one tube, by rate ordering.

    ``asym_fwd`` (r(x,y) > r(y,x) > 0): (1-q)/(1-q^N); ``asym_bwd``
    (reverse ordering): (q^{N-1}-q^N)/(1-q^N); ``asym_noback``
    (r(y,x) = 0): 1; ``symmetric``: 1/N. The attached scale bounds the
    omitted corrections.
    """
    if case not in TUBE_CASES:
        raise InvalidCase(f"{case!r} not one of {TUBE_CASES}")
    if not 0.0 <= q_xy < 1.0:
        raise InvalidCase(f"q_xy={q_xy} outside [0, 1)")
    if case == "asym_fwd":
        prob = (1.0 - q_xy) / (1.0 - q_xy ** n)
    elif case == "asym_bwd":
        prob = (q_xy ** (n - 1) - q_xy ** n) / (1.0 - q_xy ** n)
    elif case == "asym_noback":
        prob = 1.0
    else:
        prob = 1.0 / n
    return TubePrediction(case=case, probability=prob,
                          error_scale=ErrorScale(n=n, d=d, q=q_xy))


@dataclass(frozen=True)
class MeanRatePrediction:
    """Predicted normalized trace rates with the applicable error family."""

    a_set: tuple[int, ...]
    normalized: np.ndarray
    error_family: str  # "O(1/N + ell_N)" | "O(ell_N)"
    error_scale: ErrorScale
    error_budget: float


def predicted_mean_rate(walk: WalkSpec, a_set, n: int, d: float) -> MeanRatePrediction:
    """Leading-order prediction for trace rates normalized by d*N.

    For x, y in A: ``r(x,y) - r(y,x)`` when positive, 0 when negative,
    ``r(x,y)/N`` for symmetric pairs. The error budget is 1/N + ell_N for a
    semi-attracting A and ell_N when A is attracting.
    """
    a_set = tuple(sorted(set(int(v) for v in a_set)))
    cls = classify(walk)
    if not cls.is_semi_attracting(a_set):
        raise NotSemiAttracting(f"set {a_set} is not semi-attracting")
    analysis = analyze_walk(walk)
    scale = ErrorScale(n=n, d=d, q=analysis.q)
    attracting = cls.is_attracting(a_set)
    family = "O(ell_N)" if attracting else "O(1/N + ell_N)"
    budget = scale.ell if attracting else 1.0 / n + scale.ell
    k = len(a_set)
    pred = np.zeros((k, k))
    r = walk.rates
    for i, x in enumerate(a_set):
        for j, y in enumerate(a_set):
            if x == y:
                continue
            if r[x, y] > r[y, x]:
                pred[i, j] = r[x, y] - r[y, x]
            elif r[x, y] == r[y, x]:
                pred[i, j] = r[x, y] / n
    return MeanRatePrediction(a_set=a_set, normalized=pred, error_family=family,
                              error_scale=scale, error_budget=budget)


@dataclass(frozen=True)
class TestFunction:
    """Harmonic-sum drift witness on the inner core of an R-tube.

    ``f0(eta) = sum_x coeff_x * H(eta_x)`` with H the harmonic numbers; the
    drift of ``f0`` under the auxiliary kernel is positive everywhere on the
    inner core, which is what the hitting-time bound needs.
    """

    variant: str            # certificate branch: "alpha" | "beta"
    mode: str               # "reversed" (discrete kernel) | "forward" (generator)
    r_set: tuple[int, ...]
    coefficients: np.ndarray
    certificate: GordanCertificate
    oscillation: float
    min_drift: float
    drift: np.ndarray       # per inner-core state, in region index order
    inner_core: np.ndarray
    row_sum_range: tuple[float, float]  # kernel row sums over the inner core

    def f0(self, eta: Sequence[int]) -> float:
        total = 0.0
        for i, x in enumerate(self.r_set):
            total += self.coefficients[i] * _harmonic(int(eta[x]))
        return total


def _harmonic(k: int) -> float:
    return sum(1.0 / j for j in range(1, k + 1))


def test_function(walk: WalkSpec, r_set, n: int, d: float, eps: float,
                  mode: str = "reversed", cap: int = DEFAULT_CAP) -> TestFunction:
    """Build the harmonic test function and evaluate its drift exactly.

    ``reversed`` mode uses the discrete auxiliary chain whose step weights
    swap source and target roles (weight of moving a particle x -> y is
    ``eta_y (d + eta_x) r(y, x)``, normalized per state); ``forward`` mode
    uses the continuous-time process generator. Both need strictly positive
    rates inside R.
    """
    if mode not in ("reversed", "forward"):
        raise ValueError(f"unknown mode {mode!r}")
    r_set = tuple(sorted(set(int(v) for v in r_set)))
    rmat = walk.rates
    for x in r_set:
        for y in r_set:
            if x != y and rmat[x, y] == 0.0:
                raise PremiseViolated(
                    f"rates must be positive within R; r({x},{y}) = 0")

    q = np.array([[rmat[x, y] - rmat[y, x] for y in r_set] for x in r_set])
    cert = gordan_certificate(q)
    if cert.variant == "alpha":
        coeff = cert.vector if mode == "reversed" else -cert.vector
    else:
        coeff = cert.vector

    enum = StateEnumeration(walk.kappa, n, cap=cap)
    reg = RegionSpec(walk, enum, r_set, eps=eps)
    counts = enum.counts_matrix()
    hmax = np.zeros(n + 2)
    for k in range(1, n + 2):
        hmax[k] = hmax[k - 1] + 1.0 / k

    col = {x: i for i, x in enumerate(r_set)}

    def f0_of(row) -> float:
        return float(sum(coeff[col[x]] * hmax[row[x]] for x in r_set))

    inner = reg.inner_core
    closure_vals = {int(i): f0_of(counts[i]) for i in reg.inner_closure}
    if closure_vals:
        vals = np.array(list(closure_vals.values()))
        oscillation = float(vals.max() - vals.min())
    else:
        oscillation = 0.0

    drift = np.zeros(inner.size)
    row_sums = np.zeros(inner.size)
    for pos, i in enumerate(inner):
        s = counts[i]
        f_here = closure_vals[int(i)]
        w_state = 0.0
        for x in r_set:
            for y in r_set:
                if x == y:
                    continue
                w_state += s[x] * (d + s[y]) * rmat[x, y]
        acc = 0.0
        rs = 0.0
        for x in r_set:
            if s[x] == 0:
                continue
            for y in r_set:
                if y == x:
                    continue
                if mode == "reversed":
                    weight = s[y] * (d + s[x]) * rmat[y, x]
                else:
                    weight = s[x] * (d + s[y]) * rmat[x, y]
                if weight == 0.0:
                    continue
                moved = s.astype(np.int64).copy()
                moved[x] -= 1
                moved[y] += 1
                j = enum.rank(tuple(int(v) for v in moved))
                f_there = closure_vals.get(j)
                if f_there is None:
                    f_there = f0_of(counts[j])
                acc += weight * (f_there - f_here)
                rs += weight
        if mode == "reversed":
            drift[pos] = acc / w_state
            row_sums[pos] = rs / w_state
        else:
            drift[pos] = acc
            row_sums[pos] = rs
    min_drift = float(drift.min()) if drift.size else float("nan")
    rng = ((float(row_sums.min()), float(row_sums.max()))
           if row_sums.size else (float("nan"), float("nan")))
    return TestFunction(
        variant=cert.variant, mode=mode, r_set=r_set,
        coefficients=np.asarray(coeff, dtype=float), certificate=cert,
        oscillation=oscillation, min_drift=min_drift, drift=drift,
        inner_core=inner, row_sum_range=rng)


def auxiliary_kernel_row(walk: WalkSpec, d: float, region: RegionSpec,
                         eta: Sequence[int]):
    """One row of the auxiliary reversed kernel at ``eta``: (moves, self-loop).

    Moves are (x, y, probability) of relocating a particle from x to y, with
    probability proportional to ``eta_y (d + eta_x) r(y, x)``, kept only when
    the target stays in the inner-core closure; the self-loop remainder
    absorbs the rest (positive only on the inner boundary, where the chain
    is effectively stopped).
    """
    r_set = region.r_set
    rmat = walk.rates
    closure = set(int(i) for i in region.inner_closure)
    if region.enum.rank(tuple(int(v) for v in eta)) not in closure:
        raise ValueError("state is outside the inner-core closure")
    w = 0.0
    for a in r_set:
        for b in r_set:
            if a != b:
                w += eta[a] * (d + eta[b]) * rmat[a, b]
    moves = []
    for x in r_set:
        if eta[x] == 0:
            continue
        for y in r_set:
            if y == x:
                continue
            weight = eta[y] * (d + eta[x]) * rmat[y, x]
            if weight == 0:
                continue
            moved = list(int(v) for v in eta)
            moved[x] -= 1
            moved[y] += 1
            if region.enum.rank(tuple(moved)) in closure:
                moves.append((x, y, weight / w))
    return moves, 1.0 - sum(p for _, _, p in moves)


@dataclass(frozen=True)
class ConvergenceReport:
    """Cauchy differences across system sizes and a final-point residual."""

    sizes: tuple[int, ...]
    cauchy: tuple[float, ...]
    residual: float | None


def convergence_probe(points: Sequence[tuple[int, Sequence[float]]],
                      rates: np.ndarray | None = None) -> ConvergenceReport:
    """Check a size-indexed family of vectors for stabilization.

    ``points`` is a list of (N, vector); reports sup-norm differences between
    consecutive vectors and, when limiting chain rates are supplied, the
    stationarity residual ``max_x |sum_y pi(x) a(x,y) - sum_y pi(y) a(y,x)|``
    of the final vector.
    """
    if len(points) < 3:
        raise InsufficientData(f"need at least 3 points, got {len(points)}")
    sizes = tuple(int(n) for n, _ in sorted(points, key=lambda t: t[0]))
    vecs = [np.atleast_1d(np.asarray(v, dtype=float))
            for _, v in sorted(points, key=lambda t: t[0])]
    cauchy = tuple(float(np.abs(vecs[i + 1] - vecs[i]).max())
                   for i in range(len(vecs) - 1))
    residual = None
    if rates is not None:
        a = np.asarray(rates, dtype=float)
        pi = vecs[-1]
        out = pi * a.sum(axis=1)
        inc = pi @ a
        residual = float(np.abs(out - inc).max())
    return ConvergenceReport(sizes=sizes, cauchy=cauchy, residual=residual)
