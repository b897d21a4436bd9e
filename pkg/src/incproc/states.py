"""Ranked enumeration of the configuration space and distributions over it."""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, StateSpaceTooLarge

DEFAULT_CAP = 500_000


def space_size(kappa: int, n: int) -> int:
    """Number of configurations of n particles on kappa sites."""
    return comb(n + kappa - 1, kappa - 1)


class StateEnumeration:
    """Bijective rank/unrank over all count vectors summing to N.

    States are ordered lexicographically with larger counts first, so rank 0
    is ``(N, 0, ..., 0)`` and the last rank is ``(0, ..., 0, N)``.
    """

    def __init__(self, kappa: int, n: int, cap: int = DEFAULT_CAP):
        if kappa < 2:
            raise ValueError("kappa must be at least 2")
        if n < 1:
            raise ValueError("N must be at least 1")
        size = space_size(kappa, n)
        if size > cap:
            raise StateSpaceTooLarge(size, cap)
        self.kappa = kappa
        self.n = n
        self.size = size
        # cum[m, k] = number of compositions of totals 0..m into k parts
        #           = sum_{u=0}^{m} C(u+k-1, k-1) = C(m+k, k)
        self._cum = np.zeros((n + 1, kappa), dtype=np.int64)
        for m in range(n + 1):
            for k in range(1, kappa):
                self._cum[m, k] = comb(m + k, k)
        self._counts_matrix: np.ndarray | None = None

    def rank(self, eta: Sequence[int]) -> int:
        eta = tuple(int(v) for v in eta)
        if len(eta) != self.kappa:
            raise DimensionMismatch(f"state has {len(eta)} sites, expected {self.kappa}")
        if any(v < 0 for v in eta) or sum(eta) != self.n:
            raise ValueError(f"not a configuration of {self.n} particles: {eta}")
        r = 0
        remaining = self.n
        for j in range(self.kappa - 1):
            parts_after = self.kappa - 1 - j
            v = eta[j]
            if v < remaining:
                # states with a larger count at position j come first
                r += self._cum[remaining - v - 1, parts_after]
            remaining -= v
        return int(r)

    def unrank(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise ValueError(f"rank {index} out of range [0, {self.size})")
        out = []
        remaining = self.n
        r = index
        for j in range(self.kappa - 1):
            parts_after = self.kappa - 1 - j
            # block of states with count exactly v at position j starts at
            # offset(v) = cum[remaining - v - 1, parts_after], offset(remaining) = 0;
            # pick the v whose block contains r
            v = remaining
            while v > 0 and self._cum[remaining - v, parts_after] <= r:
                v -= 1
            if v < remaining:
                r -= self._cum[remaining - v - 1, parts_after]
            out.append(v)
            remaining -= v
        out.append(remaining)
        return tuple(out)

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for row in self.counts_matrix():
            yield tuple(int(v) for v in row)

    def xi_index(self, x: int) -> int:
        """Rank of the configuration with all particles at site x."""
        eta = [0] * self.kappa
        eta[x] = self.n
        return self.rank(eta)

    def counts_matrix(self) -> np.ndarray:
        """All states as a (size, kappa) int32 matrix, in rank order."""
        if self._counts_matrix is None:
            mat = np.zeros((self.size, self.kappa), dtype=np.int32)
            state = [0] * self.kappa
            state[0] = self.n
            for i in range(self.size):
                mat[i] = state
                if i + 1 == self.size:
                    break
                # next state in larger-counts-first order
                j = self.kappa - 2
                while state[j] == 0:
                    j -= 1
                tail = sum(state[j + 1:])
                state[j] -= 1
                for t in range(j + 1, self.kappa):
                    state[t] = 0
                state[j + 1] = tail + 1
            mat.setflags(write=False)
            self._counts_matrix = mat
        return self._counts_matrix

    def rank_many(self, counts: np.ndarray) -> np.ndarray:
        """Vectorized rank of a (m, kappa) array of valid configurations."""
        counts = np.asarray(counts, dtype=np.int64)
        m = counts.shape[0]
        r = np.zeros(m, dtype=np.int64)
        remaining = np.full(m, self.n, dtype=np.int64)
        for j in range(self.kappa - 1):
            parts_after = self.kappa - 1 - j
            v = counts[:, j]
            gap = remaining - v - 1
            mask = gap >= 0
            if mask.any():
                r[mask] += self._cum[gap[mask], parts_after]
            remaining -= v
        return r

    def occupied_counts(self) -> np.ndarray:
        """Number of occupied sites per state, in rank order."""
        return (self.counts_matrix() > 0).sum(axis=1)

    def same_space(self, other: "StateEnumeration") -> bool:
        return self.kappa == other.kappa and self.n == other.n


@dataclass
class Distribution:
    """A weight per enumerated state, optionally normalized to a probability.

    ``log_norm`` carries the log-partition value of closed-form constructions;
    it is None for distributions obtained from linear solves.
    """

    enum: StateEnumeration
    weights: np.ndarray
    normalized: bool = False
    log_norm: float | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.enum.size,):
            raise DimensionMismatch(
                f"{self.weights.shape[0]} weights for {self.enum.size} states")
        if self.normalized and abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("normalized distribution must sum to 1 within 1e-12")

    def normalize(self) -> "Distribution":
        total = self.weights.sum()
        if total <= 0:
            raise ValueError("cannot normalize nonpositive total mass")
        return Distribution(self.enum, self.weights / total, normalized=True,
                            log_norm=self.log_norm)

    def mass(self, indices) -> float:
        return float(self.weights[np.asarray(indices, dtype=np.int64)].sum())

    def xi_mass(self, x: int) -> float:
        return float(self.weights[self.enum.xi_index(x)])

    def to_csv(self, path, site_labels: Sequence[str] | None = None) -> None:
        """Write (rank, counts..., weight) rows; floats use repr round-trip."""
        labels = list(site_labels) if site_labels is not None else [
            str(i) for i in range(self.enum.kappa)]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["rank"] + labels + ["weight"]) + "\n")
            for i, row in enumerate(self.enum.counts_matrix()):
                cells = [str(i)] + [str(int(v)) for v in row] + [repr(float(self.weights[i]))]
                fh.write(",".join(cells) + "\n")

    def summary(self) -> dict:
        """JSON-ready summary: condensate masses and slice-count ratios."""
        enum = self.enum
        xi = {str(x): float(self.weights[enum.xi_index(x)]) for x in range(enum.kappa)}
        e_mass = sum(xi.values())
        occ = enum.occupied_counts()
        b_mass = [float(self.weights[occ <= k].sum()) for k in range(1, enum.kappa + 1)]
        ratios = [b_mass[k] / b_mass[k - 1] if b_mass[k - 1] > 0 else float("inf")
                  for k in range(1, enum.kappa)]
        return {
            "E_mass": float(e_mass),
            "per_site_xi_mass": xi,
            "ratios": ratios,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)
