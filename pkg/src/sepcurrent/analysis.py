"""Statistical post-processing: normality distances and growth-rate fits.

Distribution distances are computed against the standard normal after
normalizing a statistic by its own mean and standard deviation.  The sup
(Kolmogorov-Smirnov) distance is the primary metric; the corridor (Levy)
metric is computed alongside and never exceeds it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exact import SumLaw
from .stirring import ReplicaSummary

__all__ = [
    "norm_cdf",
    "StepCDF",
    "ks_to_normal",
    "levy_to_normal",
    "ks_metric",
    "levy_metric",
    "tv_distance",
    "empirical_law",
    "NormalityReport",
    "normality_report",
    "GrowthFit",
    "growth_fit",
    "rate_regression",
]

# Hart-style rational approximation of the standard normal CDF
# (Abramowitz & Stegun 26.2.17); absolute error below 7.5e-8.  Implemented
# here rather than taken from a math library so reports are bit-stable
# across platforms.
_P = 0.2316419
_B = (0.319381530, -0.356563782, 1.781477937, -1.821255978, 1.330274429)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    t = 1.0 / (1.0 + _P * ax)
    poly = t * (_B[0] + t * (_B[1] + t * (_B[2] + t * (_B[3] + t * _B[4]))))
    upper = 1.0 - _INV_SQRT_2PI * np.exp(-0.5 * ax * ax) * poly
    out = np.where(x >= 0, upper, 1.0 - upper)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class StepCDF:
    """Right-continuous step distribution function."""

    xs: np.ndarray    # strictly increasing breakpoints
    cum: np.ndarray   # cdf value at and right of each breakpoint; last == 1

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        cum = np.asarray(self.cum, dtype=np.float64)
        if xs.size == 0 or xs.size != cum.size:
            raise ValueError("breakpoints and values must be nonempty, equal length")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(cum) < -1e-12) or abs(cum[-1] - 1.0) > 1e-8:
            raise ValueError("cdf values must be nondecreasing and reach 1")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "cum", np.minimum(cum, 1.0))

    @classmethod
    def from_atoms(cls, values, probs) -> "StepCDF":
        v = np.asarray(values, dtype=np.float64)
        p = np.asarray(probs, dtype=np.float64)
        keep = p > 0
        v, p = v[keep], p[keep]
        order = np.argsort(v)
        return cls(v[order], np.cumsum(p[order]))

    @classmethod
    def from_samples(cls, samples) -> "StepCDF":
        v, counts = np.unique(np.asarray(samples, dtype=np.float64), return_counts=True)
        return cls(v, np.cumsum(counts) / counts.sum())

    def eval(self, x) -> np.ndarray:
        """F(x), right-continuous."""
        idx = np.searchsorted(self.xs, x, side="right") - 1
        return np.where(idx >= 0, self.cum[np.maximum(idx, 0)], 0.0)

    def eval_left(self, x) -> np.ndarray:
        """F(x-), the left limit."""
        idx = np.searchsorted(self.xs, x, side="left") - 1
        return np.where(idx >= 0, self.cum[np.maximum(idx, 0)], 0.0)


def ks_to_normal(cdf: StepCDF) -> float:
    """sup |F - Phi|; the sup sits at a breakpoint, on one side of the jump."""
    phi = norm_cdf(cdf.xs)
    left = np.concatenate([[0.0], cdf.cum[:-1]])
    return float(np.max(np.maximum(np.abs(cdf.cum - phi), np.abs(left - phi))))


def levy_to_normal(cdf: StepCDF, accuracy: float = 1e-4) -> float:
    """Corridor metric against the standard normal, by bisection on epsilon.

    eps is feasible when Phi(x-eps)-eps <= F(x) <= Phi(x+eps)+eps everywhere;
    for a step F both sides only need checking at breakpoints.
    """
    xs = cdf.xs
    cum = cdf.cum
    left = np.concatenate([[0.0], cum[:-1]])

    def feasible(eps: float) -> bool:
        if np.any(cum > norm_cdf(xs + eps) + eps + 1e-15):
            return False
        return bool(np.all(norm_cdf(xs - eps) - eps <= left + 1e-15))

    lo, hi = 0.0, 1.0
    while hi - lo > accuracy:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def ks_metric(f: StepCDF, g: StepCDF) -> float:
    grid = np.union1d(f.xs, g.xs)
    right = np.max(np.abs(f.eval(grid) - g.eval(grid)))
    left = np.max(np.abs(f.eval_left(grid) - g.eval_left(grid)))
    return float(max(right, left))


def levy_metric(f: StepCDF, g: StepCDF, accuracy: float = 1e-4) -> float:
    """Corridor metric between two step distribution functions.

    Feasibility of eps is checked separately against each function's
    breakpoints, which covers all x because both are flat in between.
    """

    def one_sided(a: StepCDF, b: StepCDF, eps: float) -> bool:
        # b(x) <= a(x+eps)+eps and a(x-eps)-eps <= b(x) for all x
        if np.any(b.cum > a.eval(b.xs + eps) + eps + 1e-15):
            return False
        left = np.concatenate([[0.0], b.cum[:-1]])
        return bool(np.all(a.eval_left(b.xs - eps) - eps <= left + 1e-15))

    def feasible(eps: float) -> bool:
        return one_sided(f, g, eps) and one_sided(g, f, eps)

    lo, hi = 0.0, 1.0
    while hi - lo > accuracy:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def tv_distance(a: SumLaw, b: SumLaw) -> float:
    lo = min(a.support_offset, b.support_offset)
    hi = max(a.support_offset + a.pmf.size, b.support_offset + b.pmf.size)
    pa = np.zeros(hi - lo)
    pb = np.zeros(hi - lo)
    pa[a.support_offset - lo:a.support_offset - lo + a.pmf.size] = a.pmf
    pb[b.support_offset - lo:b.support_offset - lo + b.pmf.size] = b.pmf
    return 0.5 * float(np.abs(pa - pb).sum())


def empirical_law(summary: ReplicaSummary) -> SumLaw:
    """Empirical pmf of a replica batch as an integer law."""
    return SumLaw(summary.hist_offset, summary.hist_counts / summary.n_replicas)


@dataclass(frozen=True)
class NormalityReport:
    """Distances of a normalized statistic from the standard normal.

    ``n_samples`` is 0 for exact laws, where the distances are exact rather
    than empirical.  ``esseen_rate`` is attached when a Bernoulli
    decomposition of the law is available.
    """

    n_samples: int
    mean: float
    variance: float
    ks_distance: float
    levy_distance: float
    esseen_rate: float | None = None


def normality_report(obj, esseen_rate: float | None = None) -> NormalityReport:
    """Normality distances for a ReplicaSummary, an exact SumLaw, or raw samples."""
    if isinstance(obj, SumLaw):
        n_samples = 0
        mean = obj.mean()
        var = obj.variance()
        values = obj.support().astype(np.float64)
        probs = obj.pmf
    elif isinstance(obj, ReplicaSummary):
        if obj.n_replicas < 100:
            raise ValueError("need at least 100 replicas for a normality report")
        n_samples = obj.n_replicas
        mean = obj.mean
        var = obj.variance
        values = obj.hist_offset + np.arange(obj.hist_counts.size, dtype=np.float64)
        probs = obj.hist_counts / obj.n_replicas
    elif isinstance(obj, (np.ndarray, list, tuple)):
        samples = np.asarray(obj, dtype=np.float64)
        if samples.size < 100:
            raise ValueError("need at least 100 samples for a normality report")
        n_samples = samples.size
        mean = float(samples.mean())
        var = float(samples.var(ddof=1))
        values, counts = np.unique(samples, return_counts=True)
        probs = counts / samples.size
    else:
        raise TypeError("expected a ReplicaSummary, SumLaw, or sample array")
    if var <= 0:
        raise ValueError("zero variance; nothing to normalize")
    sd = math.sqrt(var)
    cdf = StepCDF.from_atoms((values - mean) / sd, probs)
    return NormalityReport(
        n_samples=n_samples,
        mean=float(mean),
        variance=float(var),
        ks_distance=ks_to_normal(cdf),
        levy_distance=levy_to_normal(cdf),
        esseen_rate=esseen_rate,
    )


@dataclass(frozen=True, eq=False)
class GrowthFit:
    """Least-squares slope of log(values) against log(t)."""

    t_grid: np.ndarray
    values: np.ndarray
    log_log_slope: float
    slope_stderr: float
    residual: float    # sum of squared log-residuals


def growth_fit(t_grid, values) -> GrowthFit:
    t = np.asarray(t_grid, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.size < 4:
        raise ValueError("growth fit needs at least 4 grid points")
    if np.any(np.diff(t) <= 0) or np.any(t <= 0):
        raise ValueError("time grid must be positive and strictly increasing")
    if np.any(v <= 0):
        raise ValueError("growth fit needs positive values")
    x = np.log(t)
    y = np.log(v)
    xc = x - x.mean()
    slope = float((xc @ y) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    res = y - (intercept + slope * x)
    ssr = float(res @ res)
    se = math.sqrt(ssr / (t.size - 2) / float(xc @ xc))
    return GrowthFit(t, v, slope, se, ssr)


def rate_regression(reports, variances) -> tuple[float, bool]:
    """Fit distance ~ C * variance^(-1/2) and test the decay envelope.

    ``reports`` is a list of (t, NormalityReport); distances are the Levy
    values.  ok means the fitted log-log slope of distance against variance
    is at most -1/2, within two standard errors: distances may decay faster,
    but not slower.
    """
    if len(reports) < 4:
        raise ValueError("rate regression needs at least 4 time points")
    v = np.asarray(variances, dtype=np.float64)
    if v.size != len(reports):
        raise ValueError("one variance per report required")
    if np.any(v <= 0) or np.any(np.diff(v) <= 0):
        raise ValueError("variances must be positive and strictly increasing")
    d = np.array([r.levy_distance for _, r in reports], dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    x = np.log(v)
    y = np.log(d)
    xc = x - x.mean()
    slope = float((xc @ y) / (xc @ xc))
    ssr = float(np.sum((y - y.mean() - slope * xc) ** 2))
    se = math.sqrt(ssr / (v.size - 2) / float(xc @ xc))
    fitted_c = float(np.exp(np.mean(y + 0.5 * x)))
    ok = slope <= -0.5 + 2.0 * se + 1e-9
    return fitted_c, ok
