"""Exact moment and distribution computations for the exclusion current.

Three levels of exactness, all deterministic:

* one-particle duality gives occupation means (module ``chain``);
* two-particle semigroups (independent and exclusion variants) give pair
  moments, hence covariances and the exact current variance;
* on tiny windows the full 2^n-state law is evolved directly, which is the
  brute-force oracle everything else is tested against.

The exclusion pair chain also swaps the two walkers when their own bond
rings, matching the label dynamics of the stirring construction; symmetric
observables cannot see the swap, so pair moments are unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .chain import occupation_profile, one_particle_generator
from .kernels import Configuration, Partition, RateKernel
from .uniformization import expm_action, expm_table

__all__ = [
    "PairTable",
    "FullLaw",
    "SumLaw",
    "pair_semigroup",
    "pair_moment_profile",
    "cov_exact",
    "variance_identity",
    "variance_current_exact",
    "lower_bound_integrand",
    "lower_bound_check",
    "full_law",
    "current_law",
    "andjel_check",
    "adaptive_simpson",
]

N_MAX_DEFAULT = 12
_PAIR_TABLE_CAP = 70  # dense pair tables get big past this window size


# ---------------------------------------------------------------------------
# pair chains

def _pair_index_maps(n: int, kind: str):
    """State indexing for ordered pairs; exclusion drops the diagonal."""
    if kind == "independent":
        idx = np.arange(n * n).reshape(n, n)
        pairs = np.stack(np.divmod(np.arange(n * n), n), axis=1)
        return idx, pairs
    if kind == "exclusion":
        idx = -np.ones((n, n), dtype=np.int64)
        pairs = []
        k = 0
        for i in range(n):
            for j in range(n):
                if i != j:
                    idx[i, j] = k
                    pairs.append((i, j))
                    k += 1
        return idx, np.array(pairs, dtype=np.int64)
    raise ValueError("kind must be 'independent' or 'exclusion'")


def pair_generator(kernel: RateKernel, kind: str) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sparse generator of the two-walker chain on ordered pair states.

    independent: either walker jumps with the one-particle rates, ignoring
    the other.  exclusion: jumps onto the partner's site are suppressed
    (removed, not redirected), and the bond joining the two walkers swaps
    them at its rate.

    Assembled on the n^2 product space with Kronecker sums, then restricted
    to the off-diagonal states for the exclusion kind.
    """
    n = kernel.window.size
    rows = np.concatenate([kernel.pair_i, kernel.pair_j])
    cols = np.concatenate([kernel.pair_j, kernel.pair_i])
    vals = np.concatenate([kernel.pair_rates, kernel.pair_rates])
    q_off = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    eye = sp.identity(n, format="csr")
    moves = (sp.kron(q_off, eye) + sp.kron(eye, q_off)).tocoo()

    _, pairs = _pair_index_maps(n, kind)
    if kind == "independent":
        r, c, d = moves.row, moves.col, moves.data
        nstates = n * n
    elif kind == "exclusion":
        is_diag = lambda s: (s // n) == (s % n)
        keep_entry = ~is_diag(moves.row) & ~is_diag(moves.col)
        r, c, d = moves.row[keep_entry], moves.col[keep_entry], moves.data[keep_entry]
        swap_a = kernel.pair_i * n + kernel.pair_j
        swap_b = kernel.pair_j * n + kernel.pair_i
        r = np.concatenate([r, swap_a, swap_b])
        c = np.concatenate([c, swap_b, swap_a])
        d = np.concatenate([d, kernel.pair_rates, kernel.pair_rates])
        # compress away the diagonal states
        old_to_new = -np.ones(n * n, dtype=np.int64)
        kept = pairs[:, 0] * n + pairs[:, 1]
        old_to_new[kept] = np.arange(kept.size)
        r = old_to_new[r]
        c = old_to_new[c]
        nstates = kept.size
    else:
        raise ValueError("kind must be 'independent' or 'exclusion'")
    exit_rates = np.zeros(nstates)
    np.add.at(exit_rates, r, d)
    r = np.concatenate([r, np.arange(nstates)])
    c = np.concatenate([c, np.arange(nstates)])
    d = np.concatenate([d, -exit_rates])
    G = sp.csr_matrix((d, (r, c)), shape=(nstates, nstates))
    return G, pairs


@dataclass(frozen=True, eq=False)
class PairTable:
    """Transition probabilities of the two-walker chain at a fixed time."""

    window: object
    time: float
    kind: str
    probs: np.ndarray   # dense, indexed by pair-state
    pairs: np.ndarray   # state -> (i, j) window positions
    accuracy: float

    def state(self, x: int, y: int) -> int:
        i, j = self.window.index(x), self.window.index(y)
        if self.kind == "exclusion" and i == j:
            raise ValueError("exclusion pair states need x != y")
        mask = (self.pairs[:, 0] == i) & (self.pairs[:, 1] == j)
        k = np.flatnonzero(mask)
        if k.size != 1:
            raise ValueError(f"no pair state for ({x},{y})")
        return int(k[0])

    def prob(self, from_xy, to_uv) -> float:
        return float(self.probs[self.state(*from_xy), self.state(*to_uv)])


def pair_semigroup(kernel: RateKernel, t: float, kind: str, tol: float = 1e-10) -> PairTable:
    """Dense two-walker transition table; meant for modest windows."""
    if kernel.window.size < 2:
        raise ValueError("pair chain needs at least 2 sites")
    if kernel.window.size > _PAIR_TABLE_CAP:
        raise ValueError(
            f"pair table too large for window size {kernel.window.size}; "
            "use pair_moment_profile for vector workloads"
        )
    G, pairs = pair_generator(kernel, kind)
    probs, err = expm_table(G, t, tol)
    return PairTable(kernel.window, float(t), kind, probs, pairs, err)


def pair_moment_profile(kernel: RateKernel, values: np.ndarray, t: float, kind: str,
                        tol: float = 1e-10) -> np.ndarray:
    """Evolve a pair observable through the two-walker chain (vector path).

    ``values`` is an (n, n) array f(i, j); returns the (n, n) array of
    E_{(i,j)} f(pair at time t), with the exclusion diagonal left at zero.
    """
    n = kernel.window.size
    G, pairs = pair_generator(kernel, kind)
    v0 = np.asarray(values, dtype=np.float64)[pairs[:, 0], pairs[:, 1]]
    vt, _ = expm_action(G, v0, t, tol)
    out = np.zeros((n, n))
    out[pairs[:, 0], pairs[:, 1]] = vt
    return out


# ---------------------------------------------------------------------------
# covariances and the variance identity

def cov_exact(kernel: RateKernel, eta: Configuration, t: float, x: int, y: int,
              tol: float = 1e-10) -> float:
    """Exact Cov(occupation at x, occupation at y) at time t, x != y.

    Pair duality: the product moment is the exclusion pair chain started from
    (x, y) and run into the initial occupations.
    """
    if x == y:
        raise ValueError("use variance path")
    occ = eta.occupation.astype(np.float64)
    prod0 = np.outer(occ, occ)
    prod_t = pair_moment_profile(kernel, prod0, t, "exclusion", tol)
    m = occupation_profile(kernel, eta, t, tol)
    i, j = kernel.window.index(x), kernel.window.index(y)
    return float(prod_t[i, j] - m[i] * m[j])


def _gradient_energy(kernel: RateKernel, m: np.ndarray) -> float:
    """Sum over ordered pairs of rate * (mean difference)^2."""
    d = m[kernel.pair_j] - m[kernel.pair_i]
    return 2.0 * float(np.sum(kernel.pair_rates * d * d))


def adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 40):
    """Adaptive Simpson quadrature returning (integral, error_estimate).

    Standard interval-halving with the 1/15 Richardson error estimate.
    Raises if the tolerance is not met before hitting the depth limit.
    """
    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    achieved = [0.0]

    def recurse(lo, hi, flo, fmid, fhi, whole, tol_here, depth):
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm = f(lm)
        frm = f(rm)
        left = simpson(lo, mid, flo, flm, fmid)
        right = simpson(mid, hi, fmid, frm, fhi)
        err = (left + right - whole) / 15.0
        if abs(err) <= tol_here or depth >= max_depth:
            if depth >= max_depth and abs(err) > tol_here:
                achieved[0] += abs(err)
            return left + right + err
        return (recurse(lo, mid, flo, flm, fmid, left, tol_here / 2.0, depth + 1)
                + recurse(mid, hi, fmid, frm, fhi, right, tol_here / 2.0, depth + 1))

    if b <= a:
        return 0.0, 0.0
    # seed panels crowd toward a, where duality gradients are steepest
    knots = [a, a + (b - a) / 64.0, a + (b - a) / 8.0, a + (b - a) / 2.0, b]
    total = 0.0
    for lo, hi in zip(knots, knots[1:]):
        flo, fmid, fhi = f(lo), f(0.5 * (lo + hi)), f(hi)
        whole = simpson(lo, hi, flo, fmid, fhi)
        total += recurse(lo, hi, flo, fmid, fhi, whole, tol / 4.0, 0)
    if achieved[0] > tol:
        raise ValueError(
            f"quadrature failed to reach tol={tol:g}; achieved about {achieved[0]:.3g}"
        )
    return total, achieved[0]


def variance_identity(kernel: RateKernel, eta: Configuration, t: float,
                      quad_tol: float = 1e-8, tol: float = 1e-10) -> tuple[float, float]:
    """Both sides of the occupation-variance identity.

    lhs: sum over sites of Var(occupation at t), each term m(1-m) by duality.
    rhs: time integral of the pairwise gradient energy of the mean profile.
    The two are equal analytically; comparing them exercises independent code
    paths (semigroup action vs quadrature).
    """
    if eta.n_particles == 0:
        return 0.0, 0.0
    Q = one_particle_generator(kernel)
    occ0 = eta.occupation.astype(np.float64)

    m_t, _ = expm_action(Q, occ0, t, tol)
    lhs = float(np.sum(m_t * (1.0 - m_t)))

    cache: dict[float, float] = {}

    def integrand(s: float) -> float:
        if s not in cache:
            m_s, _ = expm_action(Q, occ0, s, tol)
            cache[s] = _gradient_energy(kernel, m_s)
        return cache[s]

    rhs, _ = adaptive_simpson(integrand, 0.0, float(t), quad_tol)
    return lhs, rhs


def variance_current_exact(kernel: RateKernel, eta: Configuration, partition: Partition,
                           t: float, tol: float = 1e-10) -> float:
    """Exact Var(current) from one- and two-particle duality.

    Uses the symmetrized split 4 Var(W) = sum of occupation variances plus
    the sign-weighted off-diagonal covariance sum, with the pair moments from
    the exclusion pair chain.
    """
    occ = eta.occupation.astype(np.float64)
    m = occupation_profile(kernel, eta, t, tol)
    h = partition.signs.astype(np.float64)
    var_sum = float(np.sum(m * (1.0 - m)))
    prod_t = pair_moment_profile(kernel, np.outer(occ, occ), t, "exclusion", tol)
    hh = np.outer(h, h)
    s1 = float(np.sum(hh * prod_t)) - float(np.sum(np.diag(hh) * np.diag(prod_t)))
    hm = float(h @ m)
    s2 = hm * hm - float(np.sum(m * m))
    return 0.25 * (var_sum + s1 - s2)


def lower_bound_integrand(kernel: RateKernel, eta: Configuration, partition: Partition,
                          s: float, t: float, tol: float = 1e-10) -> float:
    """Integrand whose 0..t integral bounds 4*Var(current) from below.

    Gradient energy of the mean profile at time s, weighted per pair by how
    de-correlated two independent walkers' sides are after the remaining
    t - s: the weight is 1 - (1-2a_x)(1-2a_y) with a_z the walker's chance
    of sitting in A.
    """
    if not 0.0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    Q = one_particle_generator(kernel)
    occ0 = eta.occupation.astype(np.float64)
    m_s, _ = expm_action(Q, occ0, s, tol)
    in_a = (~partition.in_b).astype(np.float64)
    a_prob, _ = expm_action(Q, in_a, t - s, tol)
    u = 1.0 - 2.0 * a_prob
    q = 1.0 - u[kernel.pair_i] * u[kernel.pair_j]
    d = m_s[kernel.pair_j] - m_s[kernel.pair_i]
    return 2.0 * float(np.sum(kernel.pair_rates * d * d * q))


def lower_bound_check(kernel: RateKernel, eta: Configuration, partition: Partition,
                      t: float, quad_tol: float = 1e-6, tol: float = 1e-10):
    """(integral of the bound integrand, 4*Var(current)); first <= second."""
    integral, _ = adaptive_simpson(
        lambda s: lower_bound_integrand(kernel, eta, partition, s, t, tol),
        0.0, float(t), quad_tol,
    )
    four_var = 4.0 * variance_current_exact(kernel, eta, partition, t, tol)
    return integral, four_var


# ---------------------------------------------------------------------------
# full law on tiny windows

@dataclass(frozen=True, eq=False)
class FullLaw:
    """Distribution over all 2^n occupation states of a small window."""

    window: object
    time: float
    law: np.ndarray          # length 2^n, indexed by occupation bitmask
    initial: Configuration

    def occupation_marginals(self) -> np.ndarray:
        n = self.window.size
        states = np.arange(self.law.size)
        bits = (states[:, None] >> np.arange(n)) & 1
        return bits.T @ self.law

    def event_probability(self, mask_all_ones: int) -> float:
        states = np.arange(self.law.size)
        sel = (states & mask_all_ones) == mask_all_ones
        return float(self.law[sel].sum())


def sep_generator_full(kernel: RateKernel, n: int) -> sp.csr_matrix:
    """Exclusion generator on occupation bitmasks: discordant pairs swap."""
    states = np.arange(1 << n)
    rows, cols, vals = [], [], []
    for i, j, r in zip(kernel.pair_i, kernel.pair_j, kernel.pair_rates):
        if r == 0:
            continue
        mask = (1 << int(i)) | (1 << int(j))
        bi = (states >> int(i)) & 1
        bj = (states >> int(j)) & 1
        sel = states[bi != bj]
        rows.append(sel)
        cols.append(sel ^ mask)
        vals.append(np.full(sel.size, float(r)))
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows = np.array([], dtype=np.int64)
        cols = np.array([], dtype=np.int64)
        vals = np.array([], dtype=np.float64)
    exit_rates = np.zeros(1 << n)
    np.add.at(exit_rates, rows, vals)
    diag = np.arange(1 << n)
    rows = np.concatenate([rows, diag])
    cols = np.concatenate([cols, diag])
    vals = np.concatenate([vals, -exit_rates])
    return sp.csr_matrix((vals, (rows, cols)), shape=(1 << n, 1 << n))


def full_law(kernel: RateKernel, eta: Configuration, t: float,
             n_max: int = N_MAX_DEFAULT, tol: float = 1e-10) -> FullLaw:
    """Evolve the point mass at eta through the full exclusion generator."""
    n = kernel.window.size
    if n > n_max:
        raise ValueError(f"window size {n} exceeds n_max={n_max} for exact laws")
    state0 = 0
    for i, b in enumerate(eta.occupation):
        if b:
            state0 |= 1 << i
    v0 = np.zeros(1 << n)
    v0[state0] = 1.0
    G = sep_generator_full(kernel, n)
    law, _ = expm_action(G, v0, t, tol)
    law = np.where(law < 0, 0.0, law)  # clamp -1e-16 dust from truncation
    return FullLaw(kernel.window, float(t), law, eta)


@dataclass(frozen=True, eq=False)
class SumLaw:
    """PMF of an integer statistic; index k is the value support_offset + k."""

    support_offset: int
    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=np.float64)
        if np.any(pmf < -1e-10) or abs(pmf.sum() - 1.0) > 1e-8:
            raise ValueError("pmf entries must be >= 0 and sum to 1")
        object.__setattr__(self, "pmf", np.where(pmf < 0, 0.0, pmf))

    def support(self) -> np.ndarray:
        return self.support_offset + np.arange(self.pmf.size)

    def mean(self) -> float:
        return float(self.support() @ self.pmf)

    def variance(self) -> float:
        v = self.support().astype(np.float64)
        mu = self.mean()
        return float(((v - mu) ** 2) @ self.pmf)


def current_law(full: FullLaw, partition: Partition) -> SumLaw:
    """Push the full law through the net-current statistic."""
    n = full.window.size
    states = np.arange(full.law.size)
    bits = (states[:, None] >> np.arange(n)) & 1
    b_mask = partition.in_b
    w_states = bits[:, b_mask].sum(axis=1) - int(full.initial.occupation[b_mask].sum())
    lo, hi = int(w_states.min()), int(w_states.max())
    pmf = np.zeros(hi - lo + 1)
    np.add.at(pmf, w_states - lo, full.law)
    # states with the wrong particle count only carry truncation dust; trim it
    while pmf.size > 1 and pmf[0] <= 1e-16:
        pmf = pmf[1:]
        lo += 1
    while pmf.size > 1 and pmf[-1] <= 1e-16:
        pmf = pmf[:-1]
    return SumLaw(lo, pmf / pmf.sum())


def occupied_event_law(full: FullLaw, sites) -> float:
    mask = 0
    for s in sites:
        mask |= 1 << full.window.index(s)
    return full.event_probability(mask)


def sumlaw_to_json(law: SumLaw) -> str:
    import json

    return json.dumps({
        "schema_version": 1,
        "support_offset": law.support_offset,
        "pmf": [float(p) for p in law.pmf],
        "mean": law.mean(),
        "variance": law.variance(),
    })


def identity_report_json(t: float, lhs: float, rhs: float) -> str:
    import json

    return json.dumps({"schema_version": 1, "t": t, "lhs": lhs, "rhs": rhs,
                       "abs_err": abs(lhs - rhs)})


def andjel_check(full: FullLaw, set_a, set_b) -> tuple[float, float]:
    """Both sides of the fully-occupied correlation inequality (lhs <= rhs).

    lhs = P(all of A and B occupied); rhs = P(A occupied) * P(B occupied).
    """
    sa, sb = set(set_a), set(set_b)
    if not sa or not sb:
        raise ValueError("site sets must be nonempty")
    if sa & sb:
        raise ValueError("site sets must be disjoint")
    lhs = occupied_event_law(full, sa | sb)
    rhs = occupied_event_law(full, sa) * occupied_event_law(full, sb)
    return lhs, rhs
