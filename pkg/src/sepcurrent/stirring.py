"""Event-driven Monte Carlo of the stirring construction.

A single exponential clock at the kernel's total rate drives events; each
event picks an unordered pair from an alias table weighted by the pair rates
(an equivalent superposition of the per-pair clocks) and swaps the labels at
the two sites.  Reading the initial occupations through the final label
permutation realizes the exclusion dynamics, and the current statistic counts
labels carried across the partition.

Replicas use independent counter-based random streams keyed by
(seed_root, replica_index), so batches are reproducible bit-for-bit in any
execution order; see ``_loops`` for the backend selection.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from . import _loops
from .kernels import Configuration, Partition, RateKernel

__all__ = [
    "StirringTrajectory",
    "CurrentSample",
    "ReplicaSummary",
    "simulate",
    "current_of",
    "run_replicas",
    "summary_to_json",
    "samples_to_csv",
    "DEFAULT_EVENT_BUDGET",
]

DEFAULT_EVENT_BUDGET = 100_000_000


@dataclass(frozen=True, eq=False)
class StirringTrajectory:
    """One realization of the stirring flow up to a horizon.

    ``final_labels[i]`` is the (window position of the) label sitting at
    position i; ``final_positions[i]`` is where label i ended up.  The two
    arrays are inverse permutations.
    """

    window: object
    horizon: float
    times: np.ndarray        # strictly increasing event times
    pairs: np.ndarray        # (n_events, 2) window positions swapped
    final_labels: np.ndarray
    final_positions: np.ndarray

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    def events(self) -> list:
        """Time-ordered list of (time, (site_x, site_y)) with site labels."""
        sites = self.window.sites
        return [(float(t), (sites[int(a)], sites[int(b)]))
                for t, (a, b) in zip(self.times, self.pairs)]


@dataclass(frozen=True)
class CurrentSample:
    """Current counts of one replica: w = w_plus - w_minus."""

    w_plus: int
    w_minus: int

    @property
    def w(self) -> int:
        return self.w_plus - self.w_minus


@dataclass(frozen=True, eq=False)
class ReplicaSummary:
    """Batch of current samples with merged summary statistics."""

    n_replicas: int
    samples: np.ndarray   # int64 current values, indexed by replica
    mean: float
    variance: float       # unbiased (ddof=1); 0.0 for a single replica
    hist_offset: int
    hist_counts: np.ndarray
    seed_root: int

    def histogram(self) -> dict[int, int]:
        return {int(self.hist_offset + k): int(c)
                for k, c in enumerate(self.hist_counts) if c > 0}


def _check_budget(kernel: RateKernel, horizon: float, event_budget: int):
    expected = kernel.total_rate * horizon
    if expected > event_budget:
        raise ValueError(
            f"expected event count {expected:.3g} exceeds event budget {event_budget:.3g}")


def simulate(kernel: RateKernel, horizon: float, seed: int,
             event_budget: int = DEFAULT_EVENT_BUDGET) -> StirringTrajectory:
    """Draw one stirring trajectory and its final label permutation."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    _check_budget(kernel, horizon, event_budget)
    n = kernel.window.size
    if kernel.total_rate > 0 and horizon > 0:
        accept, alias = _loops.build_alias(kernel.pair_rates)
        times, slots = _loops.trajectory_events(
            kernel.total_rate, horizon, seed, 0, accept, alias, event_budget)
    else:
        times = np.empty(0)
        slots = np.empty(0, dtype=np.int64)
    labels, positions = _loops.apply_swaps(slots, kernel.pair_i, kernel.pair_j, n)
    pairs = np.column_stack([kernel.pair_i[slots], kernel.pair_j[slots]]) if slots.size \
        else np.empty((0, 2), dtype=np.int64)
    return StirringTrajectory(kernel.window, float(horizon), times, pairs, labels, positions)


def current_of(trajectory: StirringTrajectory, eta: Configuration,
               partition: Partition) -> CurrentSample:
    """Current carried by a trajectory, from the label permutation.

    Also evaluates the occupation-difference form of the same statistic and
    insists on exact agreement; the two only coincide through the inverse
    permutation invariant, so this is a cheap structural check.
    """
    if eta.window.sites != trajectory.window.sites:
        raise ValueError("trajectory and configuration must share a window")
    occ = eta.occupation.astype(bool)
    in_b = partition.in_b
    dest_b = in_b[trajectory.final_positions]
    w_plus = int(np.sum(occ & ~in_b & dest_b))
    w_minus = int(np.sum(occ & in_b & ~dest_b))
    w_occ = int(occ[trajectory.final_labels][in_b].sum() - occ[in_b].sum())
    if w_plus - w_minus != w_occ:
        raise AssertionError("label and occupation currents disagree")
    return CurrentSample(w_plus, w_minus)


def run_replicas(kernel: RateKernel, eta: Configuration, partition: Partition,
                 horizon: float, n_replicas: int, seed_root: int,
                 event_budget: int = DEFAULT_EVENT_BUDGET) -> ReplicaSummary:
    """Independent replicas of the current sample; reproducible from seed_root."""
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    _check_budget(kernel, horizon, event_budget)
    if kernel.total_rate > 0 and horizon > 0:
        accept, alias = _loops.build_alias(kernel.pair_rates)
    else:
        accept = np.ones(1)
        alias = np.zeros(1, dtype=np.int64)
    w, _, _ = _loops.replica_currents(
        kernel.pair_i, kernel.pair_j, accept, alias,
        kernel.total_rate, horizon, eta.occupation, partition.in_b,
        n_replicas, seed_root, event_budget)
    mean = float(w.mean())
    var = float(w.var(ddof=1)) if n_replicas > 1 else 0.0
    lo = int(w.min())
    counts = np.bincount(w - lo)
    return ReplicaSummary(int(n_replicas), w, mean, var, lo, counts, int(seed_root))


def summary_to_json(summary: ReplicaSummary) -> str:
    return json.dumps({
        "schema_version": 1,
        "n": summary.n_replicas,
        "mean": summary.mean,
        "var": summary.variance,
        "seed_root": summary.seed_root,
        "histogram": {str(k): v for k, v in summary.histogram().items()},
    })


def samples_to_csv(summary: ReplicaSummary) -> str:
    buf = io.StringIO()
    buf.write("# schema_version=1\n")
    buf.write("replica_index,w\n")
    for i, v in enumerate(summary.samples):
        buf.write(f"{i},{int(v)}\n")
    return buf.getvalue()
