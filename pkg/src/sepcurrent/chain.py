"""One-particle chain computations: transition tables and duality profiles.

Duality reduces occupation means of the interacting system to this chain:
the mean occupation at site x after time t is the chain's expectation of the
initial occupation, started from x.  Everything here is built on that identity.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .kernels import Configuration, Partition, RateKernel
from .uniformization import expm_action, expm_table, generator_matrix

__all__ = [
    "SemigroupTable",
    "semigroup",
    "occupation_mean",
    "occupation_profile",
    "balance_profile",
    "rigidity_profile",
    "expected_current",
    "geometric_grid",
    "table_to_csv",
]


@dataclass(frozen=True, eq=False)
class SemigroupTable:
    """Dense transition probabilities p_t(x, y) for the one-particle chain."""

    window: object
    time: float
    probs: np.ndarray
    accuracy: float

    def prob(self, x: int, y: int) -> float:
        return float(self.probs[self.window.index(x), self.window.index(y)])


def one_particle_generator(kernel: RateKernel):
    return generator_matrix(kernel.pair_i, kernel.pair_j, kernel.pair_rates, kernel.window.size)


def semigroup(kernel: RateKernel, t: float, tol: float = 1e-10) -> SemigroupTable:
    """Transition table at time t with per-row truncation error <= tol."""
    Q = one_particle_generator(kernel)
    probs, err = expm_table(Q, t, tol)
    return SemigroupTable(kernel.window, float(t), probs, err)


def occupation_mean(table: SemigroupTable, eta: Configuration, x: int) -> float:
    """Mean occupation at x under the exclusion dynamics, via duality."""
    if eta.window is not table.window and eta.window.sites != table.window.sites:
        raise ValueError("table and configuration must share a window")
    i = table.window.index(x)
    return float(table.probs[i] @ eta.occupation)


def occupation_profile(kernel: RateKernel, eta: Configuration, t: float, tol: float = 1e-10) -> np.ndarray:
    """Vector of mean occupations at every site, without building the table."""
    Q = one_particle_generator(kernel)
    v, _ = expm_action(Q, eta.occupation.astype(np.float64), t, tol)
    return v


def _check_grid(t_grid) -> np.ndarray:
    ts = np.asarray(list(t_grid), dtype=np.float64)
    if ts.size == 0:
        raise ValueError("time grid must be nonempty")
    if np.any(ts < 0) or np.any(np.diff(ts) < 0):
        raise ValueError("time grid must be nonnegative and nondecreasing")
    return ts


def _profile_on_grid(kernel: RateKernel, v0: np.ndarray, t_grid, tol: float) -> list[np.ndarray]:
    """Evolve v0 to every grid time, stepping incrementally between times."""
    ts = _check_grid(t_grid)
    Q = one_particle_generator(kernel)
    per_tol = tol / ts.size
    out = []
    v = np.asarray(v0, dtype=np.float64)
    prev = 0.0
    for t in ts:
        v, _ = expm_action(Q, v, t - prev, per_tol)
        prev = t
        out.append(v.copy())
    return out


def balance_profile(kernel: RateKernel, partition: Partition, t_grid, tol: float = 1e-10) -> dict:
    """For each site x: the chain's probability of sitting in A at each grid time.

    A partition behaves like a balanced cut when these values stay away from
    0 and 1 at late times; callers inspect the min/max at the final time.
    """
    in_a = (~partition.in_b).astype(np.float64)
    profiles = _profile_on_grid(kernel, in_a, t_grid, tol)
    sites = kernel.window.sites
    return {s: [float(p[i]) for p in profiles] for i, s in enumerate(sites)}


def rigidity_profile(kernel: RateKernel, eta: Configuration, t_grid, tol: float = 1e-10) -> list[float]:
    """Expected number of initially occupied sites that are empty at each time.

    Unbounded growth of this quantity (in the infinite-system limit) is what
    keeps current fluctuations growing; on a finite window it saturates and
    only its growth up to the horizon is informative.
    """
    if eta.n_particles == 0:
        raise ValueError("rigidity undefined for vacuum")
    profiles = _profile_on_grid(kernel, eta.occupation.astype(np.float64), t_grid, tol)
    occ = eta.occupation.astype(bool)
    return [float(np.sum(1.0 - p[occ])) for p in profiles]


def expected_current(kernel: RateKernel, eta: Configuration, partition: Partition,
                     t: float, tol: float = 1e-10) -> float:
    """Mean net current into the B side by time t (duality, no sampling)."""
    m = occupation_profile(kernel, eta, t, tol)
    b = partition.in_b
    return float(np.sum(m[b] - eta.occupation[b]))


def geometric_grid(t0: float, n_points: int, factor: float = 2.0) -> list[float]:
    """Default doubling time grid t0 * factor^k; growth rates show up as slopes."""
    if t0 <= 0 or n_points < 1:
        raise ValueError("need t0 > 0 and at least one point")
    return [t0 * factor**k for k in range(n_points)]


def table_to_csv(table: SemigroupTable) -> str:
    """CSV export: row site, column site, probability."""
    buf = io.StringIO()
    buf.write("# schema_version=1\n")
    buf.write("row_site,col_site,prob\n")
    sites = table.window.sites
    for i, x in enumerate(sites):
        for j, y in enumerate(sites):
            buf.write(f"{x},{y},{table.probs[i, j]!r}\n")
    return buf.getvalue()
