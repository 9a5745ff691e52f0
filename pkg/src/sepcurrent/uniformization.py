"""Continuous-time Markov semigroups via uniformization.

exp(tQ) is evaluated as a Poisson-weighted power series of the uniformized
transition matrix P = I + Q/lam, truncated where the Poisson tail drops below
a requested tolerance.  That tail is an explicit bound on the per-row error
of the result, because every power of P is (sub)stochastic.

Long horizons are split into chunks with lam*t <= 120 each, so the leading
Poisson weight exp(-lam*t) never underflows; per-chunk tails add up to the
reported accuracy.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

__all__ = ["poisson_weights", "expm_action", "expm_table", "generator_matrix"]

_CHUNK_CAP = 120.0


def poisson_weights(a: float, tol: float) -> tuple[np.ndarray, float]:
    """Poisson(a) pmf terms w_0..w_K with tail 1 - sum(w) <= tol.

    Requires a <= the chunk cap so w_0 = exp(-a) stays representable.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if a < 0:
        raise ValueError("Poisson mean must be nonnegative")
    if a == 0.0:
        return np.array([1.0]), 0.0
    if a > _CHUNK_CAP + 1e-9:
        raise ValueError("Poisson mean exceeds chunk cap; split the horizon")
    terms = [math.exp(-a)]
    acc = terms[0]
    k = 0
    # hard stop far beyond the mean; tail <= tol is reached much earlier
    k_max = int(a + 40.0 * math.sqrt(a) + 60.0)
    while 1.0 - acc > tol and k < k_max:
        k += 1
        terms.append(terms[-1] * a / k)
        acc += terms[-1]
    return np.array(terms), max(0.0, 1.0 - acc)


def generator_matrix(pair_i, pair_j, pair_rates, n: int) -> sp.csr_matrix:
    """Sparse CTMC generator from unordered-pair rates (zero row sums)."""
    rows = np.concatenate([pair_i, pair_j])
    cols = np.concatenate([pair_j, pair_i])
    vals = np.concatenate([pair_rates, pair_rates])
    exit_rates = np.zeros(n)
    np.add.at(exit_rates, rows, vals)
    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    vals = np.concatenate([vals, -exit_rates])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _chunks(lam: float, t: float) -> list[float]:
    if lam * t <= _CHUNK_CAP:
        return [t]
    n = int(math.ceil(lam * t / _CHUNK_CAP))
    return [t / n] * n


def expm_action(Q: sp.spmatrix, v: np.ndarray, t: float, tol: float = 1e-10):
    """(exp(tQ) @ v, accuracy): action of the semigroup on a vector or matrix.

    The accuracy bound assumes ||v||_inf <= 1, which holds for the probability
    vectors and indicator profiles this package feeds in.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    v = np.asarray(v, dtype=np.float64)
    lam = float(-Q.diagonal().min())
    if t == 0.0 or lam == 0.0:
        return v.copy(), 0.0
    pieces = _chunks(lam, t)
    per_tol = tol / len(pieces)
    err = 0.0
    out = v
    for dt in pieces:
        w, tail = poisson_weights(lam * dt, per_tol)
        term = out
        acc = w[0] * term
        for k in range(1, len(w)):
            term = term + (Q @ term) / lam
            acc = acc + w[k] * term
        out = acc
        err += tail
    return out, err


def expm_table(Q, t: float, tol: float = 1e-10):
    """(exp(tQ) as a dense matrix, accuracy); per-row error <= accuracy."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    Qd = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=np.float64)
    n = Qd.shape[0]
    lam = float(-Qd.diagonal().min())
    if t == 0.0 or lam == 0.0:
        return np.eye(n), 0.0
    pieces = _chunks(lam, t)
    per_tol = tol / len(pieces)
    P = np.eye(n) + Qd / lam
    w, tail = poisson_weights(lam * pieces[0], per_tol)
    term = np.eye(n)
    chunk = w[0] * term
    for k in range(1, len(w)):
        term = term @ P
        chunk = chunk + w[k] * term
    out = chunk
    err = tail
    for _ in pieces[1:]:
        out = out @ chunk
        err += tail
    return out, err
