"""Exact stationary distributions, hitting probabilities, trace rates, flows.

Everything here is a direct linear-algebra computation on the enumerated
configuration space; no asymptotics. Sparse direct solves carry one step of
iterative refinement and are checked against explicit residual tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import log
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (ConditionNotSatisfied, DimensionMismatch, OutOfRange,
                     SolverFailure)
from .model import ProcessParams, WalkSpec, analyze_walk, log_weight_table
from .regions import RegionSpec, b_set_masses
from .states import DEFAULT_CAP, Distribution, StateEnumeration

STATIONARY_TOL = 1e-10
HITTING_TOL = 1e-12
POWER_TOL = 1e-13
POWER_MAX_SWEEPS = 1_000_000


def build_rate_matrix(spec: WalkSpec, params: ProcessParams,
                      enum: StateEnumeration) -> sp.csr_matrix:
    """Sparse jump-rate matrix over the enumeration (zero diagonal)."""
    counts = enum.counts_matrix()
    d = params.d
    rows, cols, vals = [], [], []
    for x in range(spec.kappa):
        cx = counts[:, x]
        src_mask = cx >= 1
        src = np.nonzero(src_mask)[0]
        if src.size == 0:
            continue
        for y in range(spec.kappa):
            rxy = spec.rates[x, y]
            if y == x or rxy == 0.0:
                continue
            shifted = counts[src].astype(np.int64)
            shifted[:, x] -= 1
            shifted[:, y] += 1
            tgt = enum.rank_many(shifted)
            rate = cx[src] * (d + counts[src, y]) * rxy
            rows.append(src)
            cols.append(tgt)
            vals.append(rate)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(enum.size, enum.size))


def build_generator(spec: WalkSpec, params: ProcessParams,
                    enum: StateEnumeration) -> sp.csr_matrix:
    rates = build_rate_matrix(spec, params, enum)
    holding = np.asarray(rates.sum(axis=1)).ravel()
    return (rates - sp.diags(holding)).tocsr()


def enumerate_states(kappa: int, n: int, cap: int = DEFAULT_CAP) -> StateEnumeration:
    """Lexicographic (largest-first) enumeration of all configurations."""
    return StateEnumeration(kappa, n, cap=cap)


def _solve_refined(a: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    # generator sparsity is structurally symmetric, where this ordering
    # produces far less fill than the COLAMD default
    lu = spla.splu(a, permc_spec="MMD_AT_PLUS_A")
    x = lu.solve(b)
    x -= lu.solve(a @ x - b)
    return x


def _power_iteration(q: sp.csr_matrix) -> np.ndarray:
    """Uniformized power iteration fallback for the stationary vector."""
    n = q.shape[0]
    theta = 1.01 * float((-q.diagonal()).max())
    p = (sp.eye(n) + q / theta).tocsr()
    mu = np.full(n, 1.0 / n)
    for _ in range(POWER_MAX_SWEEPS):
        nxt = mu @ p
        nxt /= nxt.sum()
        if np.abs(nxt - mu).max() <= POWER_TOL:
            return nxt
        mu = nxt
    return mu


def stationary_exact(spec: WalkSpec, params: ProcessParams,
                     cap: int = DEFAULT_CAP, tol: float = STATIONARY_TOL) -> Distribution:
    """Stationary distribution by sparse direct solve of the balance system.

    One balance row of the transposed generator is replaced by a pin on a
    reference state (the heaviest metastable state by the walk measure, so
    the solution stays well scaled), keeping the system fully sparse; the
    result is renormalized afterwards. Falls back to uniformized power
    iteration if the direct solve misses the residual target ``tol * max|Q|``.
    """
    enum = enumerate_states(spec.kappa, params.n, cap=cap)
    q = build_generator(spec, params, enum)
    n = enum.size
    ref = enum.xi_index(int(np.argmax(analyze_walk(spec).m)))
    a = q.T.tolil()
    a.rows[ref] = [ref]
    a.data[ref] = [1.0]
    a = a.tocsc()
    b = np.zeros(n)
    b[ref] = 1.0
    scale = float(np.abs(q.data).max())

    mu = _solve_refined(a, b)
    if mu.min() < -1e-9 * max(mu.max(), 1.0):
        mu = _power_iteration(q)
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    residual = float(np.abs(mu @ q).max())
    if residual > tol * scale:
        mu = _power_iteration(q)
        mu = np.clip(mu, 0.0, None)
        mu /= mu.sum()
        residual = float(np.abs(mu @ q).max())
        if residual > tol * scale:
            raise SolverFailure(
                f"stationary residual {residual:.3e} > {tol:.1e} * {scale:.3e}")
    return Distribution(enum, mu, normalized=True)


def stationary_closed_form(spec: WalkSpec, params: ProcessParams,
                           cap: int = DEFAULT_CAP) -> Distribution:
    """Product-form stationary distribution, valid under reversibility or a
    uniform walk measure.

    Weight of a state is ``prod_x (m(x)/m_star)**eta_x * w(eta_x)`` with the
    occupation weights ``w`` from :func:`incproc.model.log_weight_table`; all
    products run in log space and the log-partition value is returned on the
    distribution.
    """
    analysis = analyze_walk(spec)
    if not (analysis.rev or analysis.ui):
        raise ConditionNotSatisfied(
            "closed form requires a reversible walk or a uniform invariant measure")
    enum = enumerate_states(spec.kappa, params.n, cap=cap)
    counts = enum.counts_matrix()
    logw = log_weight_table(params.n, params.d)
    log_site_ratio = np.log(analysis.m / analysis.m_star)
    logs = logw[counts].sum(axis=1) + counts @ log_site_ratio
    shift = logs.max()
    unnorm = np.exp(logs - shift)
    total = unnorm.sum()
    log_norm = float(shift + np.log(total))
    return Distribution(enum, unnorm / total, normalized=True, log_norm=log_norm)


@dataclass(frozen=True)
class RegionMassReport:
    """Masses of one R-tube's pieces under a distribution."""

    r_set: tuple[int, ...]
    eps: float
    threshold: int
    tube: float
    boundary: float
    outer_core: float
    inner_core: float
    slices: np.ndarray  # (len(r_set), N+1): slice masses per site and count


@dataclass(frozen=True)
class MassReport:
    """Condensate and tube masses of a distribution."""

    e_mass: float
    xi_mass: np.ndarray
    b_mass: np.ndarray
    b_ratios: np.ndarray
    regions: tuple[RegionMassReport, ...]


def region_masses(mu: Distribution, regions: Sequence[RegionSpec] = ()) -> MassReport:
    """Masses of the metastable states, occupied-count sets, and given tubes."""
    enum = mu.enum
    for reg in regions:
        if not reg.enum.same_space(enum):
            raise DimensionMismatch("region built for a different state space")
    xi = np.array([mu.weights[enum.xi_index(x)] for x in range(enum.kappa)])
    b_mass = b_set_masses(mu.weights, enum)
    with np.errstate(divide="ignore", invalid="ignore"):
        b_ratios = b_mass[1:] / b_mass[:-1]
    counts = enum.counts_matrix()
    reports = []
    for reg in regions:
        n = enum.n
        slices = np.zeros((len(reg.r_set), n + 1))
        tube_idx = reg.tube
        tube_w = mu.weights[tube_idx]
        for i, x in enumerate(reg.r_set):
            slices[i] = np.bincount(counts[tube_idx, x], weights=tube_w,
                                    minlength=n + 1)
        reports.append(RegionMassReport(
            r_set=reg.r_set, eps=reg.eps, threshold=reg.threshold,
            tube=mu.mass(reg.tube), boundary=mu.mass(reg.boundary),
            outer_core=mu.mass(reg.outer_core), inner_core=mu.mass(reg.inner_core),
            slices=slices))
    return MassReport(e_mass=float(xi.sum()), xi_mass=xi, b_mass=b_mass,
                      b_ratios=b_ratios, regions=tuple(reports))


def hitting_probabilities(spec: WalkSpec, params: ProcessParams, a_set, y: int,
                          cap: int = DEFAULT_CAP, tol: float = HITTING_TOL,
                          _prebuilt=None) -> tuple[np.ndarray, StateEnumeration]:
    """Probability, per starting state, of reaching all-particles-at-y before
    any other all-particles-at-z with z in the target set.

    Solves the first-step system with boundary values 1 at xi^y and 0 at the
    other metastable states of ``a_set``; returns the full state-indexed
    vector and the enumeration.
    """
    a_set = tuple(sorted(set(int(v) for v in a_set)))
    if not a_set:
        raise ValueError("target site set must be nonempty")
    if y not in a_set:
        raise ValueError(f"site {y} not in target set {a_set}")
    if _prebuilt is None:
        enum = enumerate_states(spec.kappa, params.n, cap=cap)
        rates = build_rate_matrix(spec, params, enum)
    else:
        enum, rates = _prebuilt
    holding = np.asarray(rates.sum(axis=1)).ravel()
    p = sp.diags(1.0 / holding) @ rates

    xi_indices = np.asarray([enum.xi_index(x) for x in a_set], dtype=np.int64)
    boundary = np.zeros(enum.size, dtype=bool)
    boundary[xi_indices] = True
    interior = np.nonzero(~boundary)[0]

    p_csc = p.tocsc()
    p_ii = p_csc[interior][:, interior]
    b = np.asarray(p_csc[interior][:, [enum.xi_index(y)]].todense()).ravel()
    a_mat = (sp.eye(interior.size) - p_ii).tocsc()
    h_int = _solve_refined(a_mat, b)
    residual = float(np.abs(a_mat @ h_int - b).max())
    if residual > tol:
        raise SolverFailure(f"hitting-probability residual {residual:.3e} > {tol:.1e}")

    h = np.zeros(enum.size)
    h[interior] = np.clip(h_int, 0.0, 1.0)
    h[enum.xi_index(y)] = 1.0
    return h, enum


@dataclass(frozen=True)
class TraceRateMatrix:
    """Mean-jump rates of the trace process on the metastable states of A.

    ``raw[i, j]`` is the trace jump rate from xi^{A[i]} to xi^{A[j]};
    ``normalized`` is ``raw / (d * N)``.
    """

    a_set: tuple[int, ...]
    raw: np.ndarray
    normalized: np.ndarray
    n: int
    d: float

    def generator(self) -> np.ndarray:
        gen = self.raw.copy()
        np.fill_diagonal(gen, 0.0)
        np.fill_diagonal(gen, -gen.sum(axis=1))
        return gen

    def stationary(self) -> np.ndarray:
        """Stationary distribution of the trace chain on A."""
        gen = self.generator()
        k = gen.shape[0]
        a = gen.T.copy()
        a[-1, :] = 1.0
        b = np.zeros(k)
        b[-1] = 1.0
        return np.linalg.solve(a, b)


def mean_jump_rate_exact(spec: WalkSpec, params: ProcessParams, a_set,
                         cap: int = DEFAULT_CAP) -> TraceRateMatrix:
    """Exact trace-process mean-jump rates between metastable states.

    Uses the first-step decomposition: the rate from xi^x to xi^y equals
    ``sum_z N d r(x, z) * h(one particle moved from x to z)`` where h is the
    exact probability of reaching xi^y before the rest of the metastable set.
    """
    a_set = tuple(sorted(set(int(v) for v in a_set)))
    n, d = params.n, params.d
    if n < 2:
        raise ValueError("trace rates need N >= 2")
    enum = enumerate_states(spec.kappa, params.n, cap=cap)
    rates = build_rate_matrix(spec, params, enum)
    k = len(a_set)
    raw = np.zeros((k, k))
    for j, y in enumerate(a_set):
        h, _ = hitting_probabilities(spec, params, a_set, y, cap=cap,
                                     _prebuilt=(enum, rates))
        for i, x in enumerate(a_set):
            if x == y:
                continue
            total = 0.0
            for z in range(spec.kappa):
                if z == x or spec.rates[x, z] == 0.0:
                    continue
                eta = [0] * spec.kappa
                eta[x] = n - 1
                eta[z] = 1
                total += n * d * spec.rates[x, z] * h[enum.rank(eta)]
            raw[i, j] = total
    return TraceRateMatrix(a_set=a_set, raw=raw, normalized=raw / (d * n),
                           n=n, d=d)


def flow_profile(spec: WalkSpec, params: ProcessParams, mu: Distribution,
                 r_set, x: int) -> tuple[np.ndarray, np.ndarray]:
    """Stationary probability flows across the slices of an R-tube at site x.

    Returns arrays (up, down) of length N: ``up[k]`` sums
    ``mu(eta) * rate(eta -> zeta)`` over moves raising the count at x from k
    to k+1 inside the tube, ``down[k]`` over the reverse moves.
    """
    enum = mu.enum
    r_set = tuple(sorted(set(int(v) for v in r_set)))
    if x not in r_set:
        raise ValueError(f"site {x} not in R {r_set}")
    # only the tube mask is needed; the occupancy threshold is irrelevant here
    reg = RegionSpec(spec, enum, r_set, eps=0.1, validate_eps=False)
    counts = enum.counts_matrix()
    tube = reg.tube
    n, d = enum.n, params.d
    up = np.zeros(n + 1)
    down = np.zeros(n + 1)
    w = mu.weights
    for y in r_set:
        if y == x:
            continue
        # up-moves: particle y -> x from states with eta_y >= 1
        ryx = spec.rates[y, x]
        if ryx > 0:
            src = tube[counts[tube, y] >= 1]
            k = counts[src, x]
            rate = counts[src, y] * (d + k) * ryx
            np.add.at(up, k, w[src] * rate)
        # down-moves: particle x -> y from states with eta_x >= 1
        rxy = spec.rates[x, y]
        if rxy > 0:
            src = tube[counts[tube, x] >= 1]
            k = counts[src, x]
            rate = k * (d + counts[src, y]) * rxy
            np.add.at(down, k - 1, w[src] * rate)
    return up[:n], down[:n]


def flow(spec: WalkSpec, params: ProcessParams, mu: Distribution,
         r_set, x: int, k: int) -> tuple[float, float]:
    """Flow pair (up, down) across level k -> k+1 of the slice at site x."""
    n = mu.enum.n
    if not 0 <= k <= n - 1:
        raise ValueError(f"k={k} outside [0, {n - 1}]")
    up, down = flow_profile(spec, params, mu, r_set, x)
    return float(up[k]), float(down[k])


def m_function(mu: Distribution, r_set) -> np.ndarray:
    """State-indexed values ``mu(eta) * prod_{x in R} eta_x``."""
    counts = mu.enum.counts_matrix()
    r_set = tuple(sorted(set(int(v) for v in r_set)))
    prod = counts[:, list(r_set)].astype(float).prod(axis=1)
    return mu.weights * prod


EXACT_RATIONAL_LIMIT = 300
RECIPROCAL_N_MAX = 10_000
RECIPROCAL_K_MAX = 8


@dataclass(frozen=True)
class ReciprocalSum:
    """One reciprocal-composition sum with its logarithmic bound check."""

    n: int
    k: int
    value: Fraction | float
    bound: float
    within_bound: bool


def reciprocal_sum_table(n_max: int, k_max: int, exact: bool):
    """Table of sums over compositions of n into k positive parts of the
    product of reciprocals, via the one-step recursion on the last part.

    Exact mode uses rational arithmetic (n_max <= 300); float otherwise.
    """
    one = Fraction(1) if exact else 1.0
    inv = [None] + [one / m for m in range(1, n_max + 1)]
    table = [[None] * (n_max + 1) for _ in range(k_max + 1)]
    for n in range(1, n_max + 1):
        table[1][n] = inv[n]
    for k in range(2, k_max + 1):
        for n in range(k, n_max + 1):
            acc = table[k - 1][n - 1] * inv[1]
            for m in range(2, n - k + 2):
                acc += table[k - 1][n - m] * inv[m]
            table[k][n] = acc
    return table


def reciprocal_bound_holds(value, n: int, k: int) -> bool:
    """Check ``value <= (3 log(n+1))**(k-1) / n`` without rounding artifacts.

    At k = 1 the bound is exactly 1/n and the sum attains it, so the
    comparison must be rational; for k >= 2 the inequality carries a real
    margin and the float bound is compared directly (Fraction <= float
    compares against the float's exact rational value).
    """
    if k == 1:
        rhs = Fraction(1, n)
        return value <= rhs if isinstance(value, Fraction) else value <= float(rhs)
    return value <= (3.0 * log(n + 1.0)) ** (k - 1) / n


def reciprocal_sum(n: int, k: int) -> ReciprocalSum:
    """Reciprocal-composition sum S(n, k) and its bound flag.

    Exact rational for n <= 300, float beyond; the bound checked is
    ``(3 log(n+1))**(k-1) / n``.
    """
    if not (1 <= k <= n):
        raise OutOfRange(f"need n >= k >= 1, got n={n}, k={k}")
    if n > RECIPROCAL_N_MAX or k > RECIPROCAL_K_MAX:
        raise OutOfRange(
            f"supported range is n <= {RECIPROCAL_N_MAX}, k <= {RECIPROCAL_K_MAX}")
    exact = n <= EXACT_RATIONAL_LIMIT
    table = reciprocal_sum_table(n, k, exact)
    value = table[k][n]
    bound = (3.0 * log(n + 1.0)) ** (k - 1) / n
    return ReciprocalSum(n=n, k=k, value=value, bound=bound,
                         within_bound=reciprocal_bound_holds(value, n, k))
