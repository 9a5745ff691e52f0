"""Site windows, symmetric rate kernels, partitions, and occupation states.

Rates are stored once per unordered site pair, so the symmetry p(x,y) = p(y,x)
holds by construction.  All objects are immutable after construction and safe
to share across worker threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SiteWindow",
    "RateKernel",
    "Partition",
    "Configuration",
    "make_nearest_neighbor",
    "make_heavy_tail",
    "make_random_environment",
    "step_configuration",
    "product_configuration",
    "kernel_to_json",
    "kernel_from_json",
    "PRESETS",
]


@dataclass(frozen=True)
class SiteWindow:
    """An ordered finite set of integer site labels."""

    sites: tuple[int, ...]

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if len(sites) < 2:
            raise ValueError("window needs at least 2 sites")
        if len(set(sites)) != len(sites):
            raise ValueError("window sites must be distinct")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(sites)})

    @classmethod
    def lattice(cls, lo: int, hi: int) -> "SiteWindow":
        """Contiguous window lo..hi inclusive."""
        return cls(tuple(range(lo, hi + 1)))

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def is_contiguous(self) -> bool:
        s = self.sites
        return all(s[i + 1] == s[i] + 1 for i in range(len(s) - 1))

    def index(self, site: int) -> int:
        """Position of a site label inside the window."""
        try:
            return self._index[site]
        except KeyError:
            raise ValueError(f"site {site} outside window") from None

    def __contains__(self, site: int) -> bool:
        return site in self._index

    def labels(self) -> np.ndarray:
        return np.asarray(self.sites, dtype=np.int64)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RateKernel:
    """Symmetric jump rates on a window, stored per unordered pair.

    ``pair_i``/``pair_j`` hold window positions with i < j; ``pair_rates`` the
    corresponding rates (events per unit time).
    """

    window: SiteWindow
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_rates: np.ndarray

    def __post_init__(self):
        if not (len(self.pair_i) == len(self.pair_j) == len(self.pair_rates)):
            raise ValueError("pair arrays must have equal length")
        if np.any(self.pair_rates < 0):
            raise ValueError("rates must be nonnegative")
        if np.any(self.pair_i >= self.pair_j):
            raise ValueError("pairs must be stored with i < j")
        total = float(np.sum(self.pair_rates))
        if not math.isfinite(total):
            raise ValueError("total rate must be finite")
        for a in (self.pair_i, self.pair_j, self.pair_rates):
            _freeze(a)
        object.__setattr__(self, "total_rate", total)
        lut = {}
        sites = self.window.sites
        for i, j, r in zip(self.pair_i, self.pair_j, self.pair_rates):
            lut[(sites[int(i)], sites[int(j)])] = float(r)
        object.__setattr__(self, "_lut", lut)

    @classmethod
    def from_pair_rates(cls, window: SiteWindow, rates: dict) -> "RateKernel":
        """Build from a {(x, y): rate} mapping of site labels, any order."""
        canon = {}
        for (x, y), r in rates.items():
            if x == y:
                raise ValueError("self-loops are not allowed (p(x,x)=0)")
            i, j = sorted((window.index(x), window.index(y)))
            key = (i, j)
            if key in canon and canon[key] != float(r):
                raise ValueError(f"conflicting rates for pair ({x},{y})")
            canon[key] = float(r)
        keys = sorted(canon)
        pi = np.array([k[0] for k in keys], dtype=np.int64)
        pj = np.array([k[1] for k in keys], dtype=np.int64)
        pr = np.array([canon[k] for k in keys], dtype=np.float64)
        return cls(window, pi, pj, pr)

    def rate(self, x: int, y: int) -> float:
        """p(x, y) for site labels; 0 where no pair is stored."""
        if x == y:
            return 0.0
        i, j = sorted((self.window.index(x), self.window.index(y)))
        s = self.window.sites
        return self._lut.get((s[i], s[j]), 0.0)

    @property
    def rates(self) -> dict:
        """Unordered-pair view {(x, y): rate} with x < y in window order."""
        return dict(self._lut)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_rates)

    def exit_rates(self) -> np.ndarray:
        """Total jump rate out of each site, aligned to window order."""
        out = np.zeros(self.window.size)
        np.add.at(out, self.pair_i, self.pair_rates)
        np.add.at(out, self.pair_j, self.pair_rates)
        return out


@dataclass(frozen=True, eq=False)
class Partition:
    """Two-sided split of a window; the sign function is +1 on B, -1 on A."""

    window: SiteWindow
    in_b: np.ndarray  # bool, aligned to window order

    def __post_init__(self):
        in_b = np.asarray(self.in_b, dtype=bool)
        if in_b.shape != (self.window.size,):
            raise ValueError("partition mask must match window size")
        if in_b.all() or not in_b.any():
            raise ValueError("both sides of the partition must be nonempty")
        object.__setattr__(self, "in_b", _freeze(in_b))
        object.__setattr__(self, "signs", _freeze(np.where(in_b, 1, -1).astype(np.int8)))

    @classmethod
    def split(cls, window: SiteWindow, split_at: int = 0) -> "Partition":
        """A = {x <= split_at}, B = {x > split_at}."""
        return cls(window, window.labels() > split_at)

    @classmethod
    def from_a_sites(cls, window: SiteWindow, a_sites) -> "Partition":
        a = set(a_sites)
        return cls(window, np.array([s not in a for s in window.sites]))

    def side(self, x: int) -> str:
        return "B" if self.in_b[self.window.index(x)] else "A"

    @property
    def a_sites(self) -> tuple[int, ...]:
        return tuple(s for s, b in zip(self.window.sites, self.in_b) if not b)

    @property
    def b_sites(self) -> tuple[int, ...]:
        return tuple(s for s, b in zip(self.window.sites, self.in_b) if b)


@dataclass(frozen=True, eq=False)
class Configuration:
    """Occupation vector over a window; entries are 0 or 1."""

    window: SiteWindow
    occupation: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupation, dtype=np.uint8)
        if occ.shape != (self.window.size,):
            raise ValueError("occupation length must equal window size")
        if np.any(occ > 1):
            raise ValueError("occupation entries must be 0 or 1")
        object.__setattr__(self, "occupation", _freeze(occ))

    @property
    def n_particles(self) -> int:
        return int(self.occupation.sum())


def make_nearest_neighbor(window: SiteWindow, rate: float) -> RateKernel:
    """Adjacent-site kernel with a common rate on every bond."""
    if not window.is_contiguous:
        raise ValueError("kernel requires lattice window")
    if rate <= 0:
        raise ValueError("rate must be positive")
    n = window.size
    pi = np.arange(n - 1, dtype=np.int64)
    pj = pi + 1
    pr = np.full(n - 1, float(rate))
    return RateKernel(window, pi, pj, pr)


def make_heavy_tail(window: SiteWindow, alpha: float, cutoff: int | None = None) -> RateKernel:
    """Power-law kernel p(x,y) = c|x-y|^(-alpha-1) up to a range cutoff.

    The constant c makes the one-sided jump rate sum to 1/2, so an interior
    site of a large window jumps at unit total rate.  Defaults the cutoff to
    the window size.
    """
    if alpha <= 1:
        raise ValueError("tail index must exceed 1 (mean crossing count would diverge)")
    if alpha > 2:
        raise ValueError("tail index must lie in (1, 2]")
    if cutoff is None:
        cutoff = window.size
    cutoff = int(cutoff)
    if cutoff < 1:
        raise ValueError("cutoff must be a positive integer")
    spans = np.arange(1, cutoff + 1, dtype=np.float64)
    c = 0.5 / np.sum(spans ** (-alpha - 1.0))
    labels = window.labels()
    pi_list, pj_list, pr_list = [], [], []
    n = window.size
    for i in range(n):
        for j in range(i + 1, n):
            d = abs(int(labels[j]) - int(labels[i]))
            if 1 <= d <= cutoff:
                pi_list.append(i)
                pj_list.append(j)
                pr_list.append(c * d ** (-alpha - 1.0))
    return RateKernel(
        window,
        np.array(pi_list, dtype=np.int64),
        np.array(pj_list, dtype=np.int64),
        np.array(pr_list, dtype=np.float64),
    )


def make_random_environment(window: SiteWindow, env_seed: int, epsilon: float) -> RateKernel:
    """Bond-disorder kernel: each adjacent bond gets an i.i.d. Uniform(eps, 1] rate.

    The same ``env_seed`` always reproduces the same environment.  Keeping the
    rates off zero bounds the expected crossing time of every bond.
    """
    if not window.is_contiguous:
        raise ValueError("kernel requires lattice window")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    n = window.size
    rng = np.random.default_rng(int(env_seed))
    # 1 - U[0, 1-eps) lands in (eps, 1]
    omij = 1.0 - rng.uniform(0.0, 1.0 - epsilon, size=n - 1)
    pi = np.arange(n - 1, dtype=np.int64)
    return RateKernel(window, pi, pi + 1, omij)


def step_configuration(window: SiteWindow, partition: Partition) -> Configuration:
    """Fully occupied on the A side, empty on the B side."""
    return Configuration(window, (~partition.in_b).astype(np.uint8))


def product_configuration(window: SiteWindow, rho: float, seed: int) -> Configuration:
    """Independent Bernoulli(rho) occupations, reproducible from the seed."""
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    rng = np.random.default_rng(int(seed))
    return Configuration(window, (rng.random(window.size) < rho).astype(np.uint8))


def kernel_to_json(kernel: RateKernel) -> str:
    """Serialize as {window, pairs: [[x, y, rate]]}."""
    sites = kernel.window.sites
    pairs = [
        [sites[int(i)], sites[int(j)], float(r)]
        for i, j, r in zip(kernel.pair_i, kernel.pair_j, kernel.pair_rates)
    ]
    return json.dumps({"window": list(sites), "pairs": pairs})


def kernel_from_json(text: str) -> RateKernel:
    doc = json.loads(text)
    window = SiteWindow(tuple(doc["window"]))
    return RateKernel.from_pair_rates(window, {(x, y): r for x, y, r in doc["pairs"]})


# Preset registry used by the CLI; values are (builder, parameter doc).
PRESETS = {
    "nearest_neighbor": (make_nearest_neighbor, "rate: common bond rate (> 0)"),
    "heavy_tail": (make_heavy_tail, "alpha: tail index in (1,2]; cutoff: max jump range (default window size)"),
    "random_environment": (make_random_environment, "env_seed: environment seed; epsilon: lower rate bound in (0,1)"),
}
