"""Tube, core, and slice index sets used by the condensation analysis.

For a site subset R the R-tube holds the configurations supported on R. It
splits into the boundary (some site of R empty), the outer core (all sites of
R occupied, some at most ``floor(eps*log N)`` particles), and the inner core
(every site of R above that threshold). Slices fix the count at one site.
"""

from __future__ import annotations

import math
import warnings
from functools import cached_property

import numpy as np

from .model import WalkAnalysis, WalkSpec, analyze_walk
from .states import StateEnumeration


class RegionSpec:
    """Index sets of one R-tube at threshold ``floor(eps * log N)``.

    All members are sorted int64 index arrays into the enumeration.
    """

    def __init__(self, walk: WalkSpec, enum: StateEnumeration,
                 r_set, eps: float = 0.1, validate_eps: bool = True):
        r_set = tuple(sorted(set(int(x) for x in r_set)))
        if not r_set:
            raise ValueError("R must be nonempty")
        if r_set[0] < 0 or r_set[-1] >= enum.kappa:
            raise ValueError(f"R {r_set} out of range for {enum.kappa} sites")
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.walk = walk
        self.enum = enum
        self.r_set = r_set
        self.eps = eps
        self.threshold = int(math.floor(eps * math.log(enum.n)))
        if validate_eps and self.threshold > 0:
            self.check_epsilon(analyze_walk(walk))

    @cached_property
    def _in_r(self) -> np.ndarray:
        mask = np.zeros(self.enum.kappa, dtype=bool)
        mask[list(self.r_set)] = True
        return mask

    @cached_property
    def tube_mask(self) -> np.ndarray:
        counts = self.enum.counts_matrix()
        return (counts[:, ~self._in_r] == 0).all(axis=1)

    @cached_property
    def tube(self) -> np.ndarray:
        return np.nonzero(self.tube_mask)[0]

    @cached_property
    def boundary(self) -> np.ndarray:
        """Tube states with some site of R empty."""
        counts = self.enum.counts_matrix()
        some_empty = (counts[:, self._in_r] == 0).any(axis=1)
        return np.nonzero(self.tube_mask & some_empty)[0]

    @cached_property
    def core(self) -> np.ndarray:
        counts = self.enum.counts_matrix()
        all_occ = (counts[:, self._in_r] > 0).all(axis=1)
        return np.nonzero(self.tube_mask & all_occ)[0]

    @cached_property
    def outer_core(self) -> np.ndarray:
        counts = self.enum.counts_matrix()
        all_occ = (counts[:, self._in_r] > 0).all(axis=1)
        low = (counts[:, self._in_r] <= self.threshold).any(axis=1)
        return np.nonzero(self.tube_mask & all_occ & low)[0]

    @cached_property
    def inner_core(self) -> np.ndarray:
        counts = self.enum.counts_matrix()
        deep = (counts[:, self._in_r] > self.threshold).all(axis=1)
        return np.nonzero(self.tube_mask & deep)[0]

    @cached_property
    def inner_closure(self) -> np.ndarray:
        """Inner core plus states one positive-rate move away from it."""
        counts = self.enum.counts_matrix()
        inner = self.inner_core
        reach = np.zeros(self.enum.size, dtype=bool)
        reach[inner] = True
        rates = self.walk.rates
        for x in self.r_set:
            for y in self.r_set:
                if x == y or rates[x, y] == 0.0:
                    continue
                src = inner[counts[inner, x] >= 1]
                if src.size == 0:
                    continue
                shifted = counts[src].astype(np.int64)
                shifted[:, x] -= 1
                shifted[:, y] += 1
                reach[self.enum.rank_many(shifted)] = True
        return np.nonzero(reach)[0]

    @cached_property
    def inner_boundary(self) -> np.ndarray:
        inner = np.zeros(self.enum.size, dtype=bool)
        inner[self.inner_core] = True
        return self.inner_closure[~inner[self.inner_closure]]

    def slice_indices(self, x: int, k: int) -> np.ndarray:
        """Tube states with exactly k particles at site x."""
        if x not in self.r_set:
            raise ValueError(f"site {x} not in R {self.r_set}")
        counts = self.enum.counts_matrix()
        return np.nonzero(self.tube_mask & (counts[:, x] == k))[0]

    def metastable_indices(self) -> np.ndarray:
        return np.asarray([self.enum.xi_index(x) for x in self.r_set], dtype=np.int64)

    def check_epsilon(self, analysis: WalkAnalysis) -> tuple[float, bool]:
        """Validate that the slice-growth constant stays polynomially bounded.

        The slice recursion multiplies at most C0 per level, with
        C0 = max over k of R2 (k + d)(N - k) / (R1 (k + 1)(N - k - 1 + d))
        evaluated at d -> 0; the threshold is admissible when
        C0 ** threshold <= N. Warns (and returns False) otherwise.
        """
        n = self.enum.n
        ks = np.arange(0, n - 1, dtype=float)
        ratios = (analysis.r2 * np.maximum(ks, 1.0) * (n - ks)
                  / (analysis.r1 * (ks + 1.0) * (n - ks - 1.0)))
        c0 = float(ratios.max()) if ratios.size else analysis.r2 / analysis.r1
        ok = c0 ** self.threshold <= n
        if not ok:
            warnings.warn(
                f"threshold {self.threshold} too large for slice constant "
                f"C0={c0:.3g}: C0**threshold exceeds N={n}; decrease eps",
                stacklevel=2)
        return c0, ok


def b_set_masses(weights: np.ndarray, enum: StateEnumeration) -> np.ndarray:
    """Masses of the at-most-k-occupied-sites sets, k = 1..kappa."""
    occ = enum.occupied_counts()
    return np.array([float(weights[occ <= k].sum()) for k in range(1, enum.kappa + 1)])
