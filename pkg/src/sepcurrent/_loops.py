"""Hot inner loops for the stirring simulation, with two interchangeable backends.

The compiled (numba) backend is used when available; set

    SEPCURRENT_BACKEND=numpy   force the pure-numpy fallback
    SEPCURRENT_BACKEND=numba   require the compiled path (error if missing)

Both backends consume the same counter-based random stream (splitmix64 keyed
by (seed_root, replica)): draw k of a replica is a pure function of the
counter k, so the backends produce bit-identical event sequences and samples,
and the parallel compiled path is deterministic regardless of thread count.

Per event the stream is used as: one exponential waiting-time draw, one alias
slot draw, one alias acceptance draw.  The waiting-time draw that overshoots
the horizon ends the replica.  The fallback generates uniform blocks with
vectorized splitmix64 but transforms waiting times with scalar libm log1p,
matching the compiled path's rounding exactly.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "build_alias",
    "replica_currents",
    "trajectory_events",
    "apply_swaps",
]

_MASK = (1 << 64) - 1
_PHI_INT = 0x9E3779B97F4A7C15
_PHI = np.uint64(_PHI_INT)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U11 = np.uint64(11)
_U27 = np.uint64(27)
_U30 = np.uint64(30)
_U31 = np.uint64(31)
_TO_UNIT = 2.0 ** -53
_DRAW_CHUNK = 4096  # events per vectorized draw block in the fallback

_env = os.environ.get("SEPCURRENT_BACKEND", "auto").strip().lower() or "auto"
if _env not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"SEPCURRENT_BACKEND must be 'numba' or 'numpy', got {_env!r}")

HAS_NUMBA = False
if _env != "numpy":
    try:
        # the default layer probe warns on this image's TBB; workqueue is
        # always available and fine for coarse per-replica parallelism
        os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
        from numba import njit, prange

        HAS_NUMBA = True
    except ImportError:
        if _env == "numba":
            raise RuntimeError("SEPCURRENT_BACKEND=numba but numba is not importable")

BACKEND = "numba" if HAS_NUMBA else "numpy"


def _mix_int(z: int) -> int:
    """splitmix64 finalizer on python ints (reference implementation)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def stream_origin(seed_root: int, replica: int) -> int:
    """State base for a replica's stream; draw k is mix(origin + k*PHI)."""
    return _mix_int((int(seed_root) & _MASK) ^ _mix_int((int(replica) * _PHI_INT + 1) & _MASK))


def build_alias(weights: np.ndarray):
    """Vose alias table for O(1) categorical draws.

    Returns (accept, alias): draw slot floor(u1*K), keep it if u2 < accept[slot],
    otherwise take alias[slot].
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0 or np.any(w < 0):
        raise ValueError("alias weights must be nonempty and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("alias weights must have positive sum")
    k = w.size
    scaled = (w * (k / total)).tolist()
    accept = np.ones(k)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        accept[s] = scaled[s]
        alias[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    return accept, alias


# ---------------------------------------------------------------------------
# numpy backend

def _uniform_block(origin: int, first_draw: int, count: int) -> np.ndarray:
    ks = np.arange(first_draw, first_draw + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(origin) + ks * _PHI
        z = (z ^ (z >> _U30)) * _M1
        z = (z ^ (z >> _U27)) * _M2
        z = z ^ (z >> _U31)
    return (z >> _U11) * _TO_UNIT


def _walk_events_np(origin, total_rate, horizon, accept, alias, max_events, on_event):
    """Drive on_event(time, slot) over one replica's events; returns the count."""
    k_slots = len(accept)
    log1p = math.log1p
    t = 0.0
    base = 0
    while True:
        u = _uniform_block(origin, 3 * base + 1, 3 * _DRAW_CHUNK).tolist()
        for e in range(_DRAW_CHUNK):
            t -= log1p(-u[3 * e]) / total_rate
            if t > horizon:
                return base + e
            s = int(u[3 * e + 1] * k_slots)
            if s >= k_slots:
                s = k_slots - 1
            if u[3 * e + 2] >= accept[s]:
                s = alias[s]
            on_event(t, s)
            if base + e >= max_events:
                raise RuntimeError(f"event budget exceeded ({max_events})")
        base += _DRAW_CHUNK


def _replica_currents_np(pair_a, pair_b, accept, alias, total_rate, horizon,
                         occupied, in_b, n_replicas, seed_root, max_events):
    n = occupied.size
    w = np.zeros(n_replicas, dtype=np.int64)
    wp = np.zeros(n_replicas, dtype=np.int64)
    wm = np.zeros(n_replicas, dtype=np.int64)
    pa = pair_a.tolist()
    pb = pair_b.tolist()
    acc = accept.tolist()
    ali = alias.tolist()
    occ = occupied.tolist()
    bmask = in_b.tolist()
    for r in range(n_replicas):
        labels = list(range(n))
        pos = list(range(n))

        def swap(_t, s):
            a = pa[s]
            b = pb[s]
            la = labels[a]
            lb = labels[b]
            labels[a] = lb
            labels[b] = la
            pos[la] = b
            pos[lb] = a

        if total_rate > 0.0:
            origin = stream_origin(seed_root, r)
            _walk_events_np(origin, total_rate, horizon, acc, ali, max_events, swap)
        w_plus = 0
        w_minus = 0
        w_occ = 0
        for i in range(n):
            if occ[i]:
                j = pos[i]
                if bmask[j] and not bmask[i]:
                    w_plus += 1
                elif bmask[i] and not bmask[j]:
                    w_minus += 1
            if bmask[i]:
                w_occ += occ[labels[i]] - occ[i]
        if w_plus - w_minus != w_occ:
            raise AssertionError("label and occupation currents disagree")
        w[r] = w_plus - w_minus
        wp[r] = w_plus
        wm[r] = w_minus
    return w, wp, wm


def _trajectory_events_np(total_rate, horizon, seed_root, replica, accept, alias, max_events):
    times: list[float] = []
    slots: list[int] = []
    origin = stream_origin(seed_root, replica)

    def record(t, s):
        times.append(t)
        slots.append(s)

    _walk_events_np(origin, total_rate, horizon, accept.tolist(), alias.tolist(),
                    max_events, record)
    return np.array(times, dtype=np.float64), np.array(slots, dtype=np.int64)


def _apply_swaps_np(slots, pair_a, pair_b, n_sites):
    labels = list(range(n_sites))
    pos = list(range(n_sites))
    pa = pair_a.tolist()
    pb = pair_b.tolist()
    for s in slots.tolist():
        a = pa[s]
        b = pb[s]
        la = labels[a]
        lb = labels[b]
        labels[a] = lb
        labels[b] = la
        pos[la] = b
        pos[lb] = a
    return np.array(labels, dtype=np.int64), np.array(pos, dtype=np.int64)


# ---------------------------------------------------------------------------
# numba backend

if HAS_NUMBA:

    @njit(inline="always")
    def _mix_nb(z):
        z = (z ^ (z >> _U30)) * _M1
        z = (z ^ (z >> _U27)) * _M2
        return z ^ (z >> _U31)

    @njit(inline="always")
    def _draw_nb(origin, k):
        return (_mix_nb(origin + k * _PHI) >> _U11) * _TO_UNIT

    @njit(inline="always")
    def _origin_nb(seed_root, replica):
        return _mix_nb(seed_root ^ _mix_nb(replica * _PHI + np.uint64(1)))

    @njit(cache=True, parallel=True)
    def _replica_currents_nb(pair_a, pair_b, accept, alias, total_rate, horizon,
                             occupied, in_b, n_replicas, seed_root, max_events):
        n = occupied.size
        k_slots = accept.size
        w = np.zeros(n_replicas, dtype=np.int64)
        wp = np.zeros(n_replicas, dtype=np.int64)
        wm = np.zeros(n_replicas, dtype=np.int64)
        ok = np.ones(n_replicas, dtype=np.uint8)
        one = np.uint64(1)
        for r in prange(n_replicas):
            labels = np.empty(n, dtype=np.int64)
            pos = np.empty(n, dtype=np.int64)
            for i in range(n):
                labels[i] = i
                pos[i] = i
            if total_rate > 0.0:
                origin = _origin_nb(seed_root, np.uint64(r))
                k = np.uint64(0)
                t = 0.0
                n_events = 0
                while True:
                    k += one
                    t -= np.log1p(-_draw_nb(origin, k)) / total_rate
                    if t > horizon:
                        break
                    k += one
                    s = int(_draw_nb(origin, k) * k_slots)
                    if s >= k_slots:
                        s = k_slots - 1
                    k += one
                    if _draw_nb(origin, k) >= accept[s]:
                        s = alias[s]
                    a = pair_a[s]
                    b = pair_b[s]
                    la = labels[a]
                    lb = labels[b]
                    labels[a] = lb
                    labels[b] = la
                    pos[la] = b
                    pos[lb] = a
                    if n_events >= max_events:
                        ok[r] = 2
                        break
                    n_events += 1
            w_plus = 0
            w_minus = 0
            w_occ = 0
            for i in range(n):
                if occupied[i]:
                    j = pos[i]
                    if in_b[j] and not in_b[i]:
                        w_plus += 1
                    elif in_b[i] and not in_b[j]:
                        w_minus += 1
                if in_b[i]:
                    w_occ += int(occupied[labels[i]]) - int(occupied[i])
            if w_plus - w_minus != w_occ:
                ok[r] = 0
            w[r] = w_plus - w_minus
            wp[r] = w_plus
            wm[r] = w_minus
        return w, wp, wm, ok

    @njit(cache=True)
    def _trajectory_events_nb(total_rate, horizon, origin, accept, alias, max_events):
        k_slots = accept.size
        one = np.uint64(1)
        # count pass: the break decision only needs the waiting-time draws
        k = np.uint64(0)
        t = 0.0
        n_events = 0
        while True:
            k += one
            t -= np.log1p(-_draw_nb(origin, k)) / total_rate
            if t > horizon:
                break
            if n_events >= max_events:
                return np.empty(0), np.empty(0, dtype=np.int64), False
            n_events += 1
            k += one
            k += one
        times = np.empty(n_events)
        slots = np.empty(n_events, dtype=np.int64)
        k = np.uint64(0)
        t = 0.0
        for e in range(n_events):
            k += one
            t -= np.log1p(-_draw_nb(origin, k)) / total_rate
            times[e] = t
            k += one
            s = int(_draw_nb(origin, k) * k_slots)
            if s >= k_slots:
                s = k_slots - 1
            k += one
            if _draw_nb(origin, k) >= accept[s]:
                s = alias[s]
            slots[e] = s
        return times, slots, True

    @njit(cache=True)
    def _apply_swaps_nb(slots, pair_a, pair_b, n_sites):
        labels = np.empty(n_sites, dtype=np.int64)
        pos = np.empty(n_sites, dtype=np.int64)
        for i in range(n_sites):
            labels[i] = i
            pos[i] = i
        for e in range(slots.size):
            a = pair_a[slots[e]]
            b = pair_b[slots[e]]
            la = labels[a]
            lb = labels[b]
            labels[a] = lb
            labels[b] = la
            pos[la] = b
            pos[lb] = a
        return labels, pos


# ---------------------------------------------------------------------------
# dispatch

def replica_currents(pair_a, pair_b, accept, alias, total_rate, horizon,
                     occupied, in_b, n_replicas, seed_root, max_events):
    """Net current (and its two side counts) for a batch of replicas.

    Returns (w, w_plus, w_minus) int64 arrays of length n_replicas.  The two
    algebraically equal current expressions (label transport vs occupation
    difference) are both evaluated per replica and must agree exactly.
    """
    args = (
        np.ascontiguousarray(pair_a, dtype=np.int64),
        np.ascontiguousarray(pair_b, dtype=np.int64),
        np.ascontiguousarray(accept, dtype=np.float64),
        np.ascontiguousarray(alias, dtype=np.int64),
        float(total_rate), float(horizon),
        np.ascontiguousarray(occupied, dtype=np.uint8),
        np.ascontiguousarray(in_b, dtype=np.uint8),
    )
    if BACKEND == "numba":
        w, wp, wm, ok = _replica_currents_nb(
            *args, int(n_replicas), np.uint64(int(seed_root) & _MASK), int(max_events))
        if np.any(ok == 2):
            raise RuntimeError(f"event budget exceeded ({max_events} per replica)")
        if np.any(ok == 0):
            raise AssertionError("label and occupation currents disagree")
        return w, wp, wm
    return _replica_currents_np(*args, int(n_replicas), int(seed_root), int(max_events))


def trajectory_events(total_rate, horizon, seed_root, replica, accept, alias, max_events):
    """(times, pair slots) of one replica's full event sequence."""
    if total_rate <= 0.0 or horizon <= 0.0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    acc = np.ascontiguousarray(accept, dtype=np.float64)
    ali = np.ascontiguousarray(alias, dtype=np.int64)
    if BACKEND == "numba":
        origin = np.uint64(stream_origin(seed_root, replica))
        times, slots, fit = _trajectory_events_nb(
            float(total_rate), float(horizon), origin, acc, ali, int(max_events))
        if not fit:
            raise RuntimeError(f"event budget exceeded ({max_events})")
        return times, slots
    return _trajectory_events_np(float(total_rate), float(horizon), int(seed_root),
                                 int(replica), acc, ali, int(max_events))


def apply_swaps(slots, pair_a, pair_b, n_sites):
    """(labels, positions) permutations after a swap sequence."""
    pa = np.ascontiguousarray(pair_a, dtype=np.int64)
    pb = np.ascontiguousarray(pair_b, dtype=np.int64)
    sl = np.ascontiguousarray(slots, dtype=np.int64)
    if BACKEND == "numba":
        return _apply_swaps_nb(sl, pa, pb, int(n_sites))
    return _apply_swaps_np(sl, pa, pb, int(n_sites))
