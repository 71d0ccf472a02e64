"""Rigidity diagnostics: number variance, global-shift recovery, exterior count prediction."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from .core import Configuration, Window

MIN_SAMPLES = 30


def _configs(samples):
    configs = getattr(samples, "configs", samples)
    return list(configs)


def _centers(configs):
    out = []
    for c in configs:
        if c.window is None:
            raise ValueError("stationary samples must carry their window")
        out.append(c.window.center)
    return np.array(out)


def _count_matrix(configs, lengths):
    lengths = np.asarray(lengths, dtype=float)
    centers = _centers(configs)
    n = np.empty((len(configs), lengths.size))
    for i, (c, x0) in enumerate(zip(configs, centers)):
        if c.window.length < lengths.max() - 1e-9:
            raise ValueError("sample window shorter than the largest interval")
        cum = np.concatenate(([0], np.cumsum(c.multiplicities)))
        lo = np.searchsorted(c.positions, x0 - 0.5 * lengths, side="left")
        hi = np.searchsorted(c.positions, x0 + 0.5 * lengths, side="left")
        n[i] = cum[hi] - cum[lo]
    return lengths, n


@dataclass
class Curve:
    """(length, statistic, stderr) rows over a common sample batch."""

    lengths: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    samples: int
    statistic: str = "variance"

    def rows(self):
        return [(float(l), float(v), float(s), self.samples)
                for l, v, s in zip(self.lengths, self.values, self.stderr)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["length", self.statistic, "stderr", "samples"])
        for l, v, s, k in self.rows():
            w.writerow([format(l, ".17g"), format(v, ".17g"), format(s, ".17g"), k])
        return buf.getvalue()

    def slope(self, weighted: bool = False) -> tuple:
        """Least-squares slope and intercept of statistic against length.

        With ``weighted`` each point gets weight 1/length, which is the right
        weighted fit when the noise of the statistic scales like its length
        (sample variances of linearly growing counts).
        """
        w = 1.0 / self.lengths if weighted else None
        b, a = np.polyfit(self.lengths, self.values, 1, w=w)
        return float(b), float(a)

    def log_slope(self) -> float:
        """Least-squares exponent of a power-law fit."""
        ok = self.values > 0
        return float(np.polyfit(np.log(self.lengths[ok]), np.log(self.values[ok]), 1)[0])

    def trend(self, alpha: float = 0.05):
        return mann_kendall(self.values, alpha=alpha)


VarianceCurve = Curve


def variance_curve(samples, lengths) -> Curve:
    """Across-sample variance of the count in centered intervals, jackknife stderr."""
    configs = _configs(samples)
    k = len(configs)
    if k < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {k}")
    lengths, n = _count_matrix(configs, lengths)
    var = n.var(axis=0, ddof=1)
    # leave-one-out variances from running sums
    s1, s2 = n.sum(0), (n * n).sum(0)
    loo_mean = (s1[None, :] - n) / (k - 1)
    loo_var = ((s2[None, :] - n * n) - (k - 1) * loo_mean ** 2) / (k - 2)
    se = np.sqrt((k - 1) / k * np.sum((loo_var - loo_var.mean(0)) ** 2, axis=0))
    return Curve(lengths, var, se, k, "variance")


def discrepancy_stats(samples, lengths) -> Curve:
    """Mean |xi(I) - |I|| over centered intervals I, with its standard error."""
    configs = _configs(samples)
    k = len(configs)
    if k < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {k}")
    lengths, n = _count_matrix(configs, lengths)
    d = np.abs(n - lengths[None, :])
    return Curve(lengths, d.mean(0), d.std(0, ddof=1) / math.sqrt(k), k, "discrepancy")


# ---------------------------------------------------------------------------
# trend test

@dataclass(frozen=True)
class TrendTest:
    statistic: float
    z: float
    pvalue: float
    alternative: str
    exact: bool

    def rejects(self, alpha: float = 0.05) -> bool:
        return self.pvalue < alpha

    @property
    def direction(self) -> str:
        return "increasing" if self.statistic > 0 else "decreasing" if self.statistic < 0 else "none"


@lru_cache(maxsize=None)
def _mk_null(n: int):
    # exact null distribution of S over all n! orderings (no ties)
    vals = []
    for perm in itertools.permutations(range(n)):
        s = 0
        for i in range(n):
            for j in range(i + 1, n):
                s += (perm[j] > perm[i]) - (perm[j] < perm[i])
        vals.append(s)
    return np.array(vals)


def mann_kendall(values, alternative: str = "two-sided", alpha: float = 0.05) -> TrendTest:
    """Mann-Kendall monotone trend test.

    Exact permutation p-values for n <= 8 without ties, otherwise the normal
    approximation with tie-corrected variance and continuity correction.
    ``alternative`` is ``"two-sided"``, ``"increasing"`` or ``"decreasing"``.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError("trend test needs at least 3 values")
    if alternative not in ("two-sided", "increasing", "decreasing"):
        raise ValueError(f"unknown alternative {alternative!r}")
    iu, ju = np.triu_indices(n, 1)
    s = float(np.sum(np.sign(x[ju] - x[iu])))
    _, ties = np.unique(x, return_counts=True)
    var = (n * (n - 1) * (2 * n + 5) - np.sum(ties * (ties - 1) * (2 * ties + 5))) / 18.0
    z = 0.0 if s == 0 or var == 0 else (s - math.copysign(1.0, s)) / math.sqrt(var)
    if n <= 8 and np.all(ties == 1):
        null = _mk_null(n)
        up, down = float(np.mean(null >= s)), float(np.mean(null <= s))
        p = {"increasing": up, "decreasing": down, "two-sided": min(1.0, 2 * min(up, down))}[alternative]
        return TrendTest(s, z, p, alternative, True)
    if alternative == "increasing":
        p = float(stats.norm.sf(z))
    elif alternative == "decreasing":
        p = float(stats.norm.cdf(z))
    else:
        p = float(2 * stats.norm.sf(abs(z)))
    return TrendTest(s, z, p, alternative, False)


# ---------------------------------------------------------------------------
# global shift

@dataclass
class ShiftReport:
    phi: float
    u: float
    depth: int
    consistency_gap: float
    stderr: float

    def __post_init__(self):
        if not 0.0 <= self.u < 1.0:
            raise ValueError("fractional shift must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


def _frac(v: float) -> float:
    u = v - math.floor(v)
    return 0.0 if u >= 1.0 else u


def circular_distance(a, b):
    """Distance between points of R/Z."""
    d = np.mod(np.asarray(a) - np.asarray(b), 1.0)
    return np.minimum(d, 1.0 - d)


class ExteriorView:
    """Read access to a configuration restricted to queries outside a domain.

    Only the ``k`` atoms nearest to, and strictly outside of, a point can be
    requested.  Estimators that go through this view cannot depend on the
    atoms inside the domain.
    """

    def __init__(self, config: Configuration):
        self._x = config.positions
        self._m = config.multiplicities

    def right_of(self, b: float, k: int) -> np.ndarray:
        """First ``k`` atoms (expanded) strictly right of ``b``, ascending."""
        i = np.searchsorted(self._x, b, side="right")
        x = np.repeat(self._x[i:i + k], self._m[i:i + k])
        return x[:k]

    def left_of(self, a: float, k: int) -> np.ndarray:
        """First ``k`` atoms (expanded) strictly left of ``a``, descending."""
        i = np.searchsorted(self._x, a, side="left")
        lo = max(0, i - k)
        x = np.repeat(self._x[lo:i], self._m[lo:i])[::-1]
        return x[:k]

    def available(self, a: float, b: float) -> tuple:
        """Counts of expanded atoms strictly left of ``a`` and strictly right of ``b``."""
        i = np.searchsorted(self._x, a, side="left")
        j = np.searchsorted(self._x, b, side="right")
        return int(self._m[:i].sum()), int(self._m[j:].sum())


def _right_average(x):
    return float(np.mean(x - np.arange(x.size)))


def _left_average(y):
    return float(np.mean(y + np.arange(y.size)))


def shift_estimator(config: Configuration, origin: float, depth: int) -> ShiftReport:
    """Ergodic-average estimate of the global shift from the atoms right of ``origin``.

    ``phi = (1/m) sum_{j<m} (X_j - j)`` over the first m atoms strictly right
    of the origin; ``u`` is its fractional part.  The consistency gap is the
    difference with the same average taken on the left side (shifted by one
    index), NaN if fewer than m atoms lie left of the origin.
    """
    m = int(depth)
    if m < 1:
        raise ValueError("depth must be positive")
    view = ExteriorView(config)
    x = view.right_of(origin, m)
    if x.size < m:
        raise ValueError(f"only {x.size} atoms right of the origin, need {m}")
    d = x - np.arange(m)
    phi = float(d.mean())
    y = view.left_of(origin, m)
    gap = phi - (_left_average(y) + 1.0) if y.size == m else math.nan
    se = float(d.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return ShiftReport(phi, _frac(phi), m, gap, se)


def shift_covariance_residual(config: Configuration, origin: float, depth: int, v: float) -> tuple:
    """Circular gap between frac(phi(theta_v xi)) and frac(phi(xi) + v), with its a priori bound.

    Translating by v changes which atoms are the first m right of the origin
    by at most ceil(|v|) + 1 atoms at each end of the averaging block, each
    changing the sum by at most D + 1 where D bounds |X_j - j - phi| on the
    block plus its neighbours; the bound is that count times (D + 1) / m.
    """
    from .core import translate

    m = int(depth)
    a = shift_estimator(config, origin, m)
    b = shift_estimator(translate(config, v), origin, m)
    gap = float(circular_distance(b.u, a.u + v))
    k = int(math.ceil(abs(v))) + 1
    view = ExteriorView(config)
    x = view.right_of(origin - abs(v) - 1.0, m + 2 * k + 2)
    d = np.abs(x - np.arange(x.size) - np.mean(x - np.arange(x.size)))
    bound = 2.0 * k * (float(d.max()) + 1.0) / m
    return gap, bound


@dataclass
class UniformityReport:
    fourier_abs: np.ndarray
    fourier_pvalues: np.ndarray
    fourier_statistic: float
    fourier_pvalue: float
    threshold: float
    ks_statistic: float
    ks_pvalue: float
    size: int

    def passes(self, alpha: float = 0.01) -> bool:
        return self.fourier_pvalue > alpha and self.ks_pvalue > alpha

    def to_dict(self):
        d = asdict(self)
        d["fourier_abs"] = self.fourier_abs.tolist()
        d["fourier_pvalues"] = self.fourier_pvalues.tolist()
        return d


def uniformity_test(values, kmax: int = 5, alpha: float = 0.01) -> UniformityReport:
    """Test values in [0, 1) for uniformity through Fourier coefficients and KS.

    Under uniformity ``2 K |F_k|^2`` are asymptotically independent chi^2_2
    variables, so each coefficient has p-value exp(-K |F_k|^2) and their sum
    over k = 1..kmax is chi^2 with 2 kmax degrees of freedom.  ``threshold``
    is the per-coefficient level sqrt(-log(alpha) / K).
    """
    u = np.asarray(values, dtype=float)
    k = u.size
    if k < 50:
        raise ValueError(f"need at least 50 values, got {k}")
    if np.any((u < 0) | (u >= 1)):
        raise ValueError("values must lie in [0, 1)")
    ks = np.arange(1, kmax + 1)
    coef = np.exp(2j * np.pi * ks[:, None] * u[None, :]).mean(1)
    f = np.abs(coef)
    stat = float(2 * k * np.sum(f * f))
    ks_res = stats.kstest(u, "uniform")
    return UniformityReport(f, np.exp(-k * f * f), stat, float(stats.chi2.sf(stat, 2 * kmax)),
                            math.sqrt(-math.log(alpha) / k), float(ks_res.statistic), float(ks_res.pvalue), k)


# ---------------------------------------------------------------------------
# exterior count prediction

@dataclass
class RigidityReport:
    domain: tuple
    predicted: int
    actual: int
    depth: int
    difference: float
    residual_right: float
    residual_left: float
    ambiguous: bool

    def __post_init__(self):
        if self.predicted < 0 or int(self.predicted) != self.predicted:
            raise ValueError("predicted count must be a nonnegative integer")

    @property
    def correct(self) -> bool:
        return self.predicted == self.actual

    def to_dict(self):
        return asdict(self)


def predict_from_exterior(right: np.ndarray, left: np.ndarray):
    """Predicted count and diagnostics from the exterior atoms only.

    ``right`` ascending atoms right of the domain, ``left`` descending atoms
    left of it, both of the same length m.
    """
    m = right.size
    sr, sl = _right_average(right), _left_average(left)
    h = max(1, m // 2)
    res_r = sr - _right_average(right[:h])
    res_l = sl - _left_average(left[:h])
    diff = sr - sl
    pred = max(int(round(diff)) - 1, 0)
    dist = abs(diff - round(diff))
    ambiguous = dist + abs(res_r) + abs(res_l) >= 0.5
    return pred, diff, res_r, res_l, ambiguous


def exterior_count_predictor(config, domain: Window, depth: int | None = None) -> RigidityReport:
    """Predict the number of atoms in the closed domain [a, b] from the outside.

    ``S_R = (1/m) sum_{j<m} (X_j - j)`` over the atoms right of b and
    ``S_L = (1/m) sum_{j<m} (Y_{-j} + j)`` over the atoms left of a; the
    prediction is round(S_R - S_L) - 1.  Only an :class:`ExteriorView` is
    consulted for the prediction; the actual count is read afterwards for
    the report.  ``depth=None`` uses a quarter of the atoms available on the
    poorer side.
    """
    view = config if isinstance(config, ExteriorView) else ExteriorView(config)
    a, b = domain.left, domain.right
    n_left, n_right = view.available(a, b)
    m = int(depth) if depth is not None else min(n_left, n_right) // 4
    if m < 1 or n_left < m or n_right < m:
        raise ValueError(f"need {max(m, 1)} atoms on each side, have {n_left} left and {n_right} right")
    right = view.right_of(b, m)
    left = view.left_of(a, m)
    pred, diff, rr, rl, amb = predict_from_exterior(right, left)
    actual = -1 if isinstance(config, ExteriorView) else closed_count(config, a, b)
    return RigidityReport((a, b), pred, actual, m, diff, rr, rl, bool(amb))


def closed_count(config: Configuration, a: float, b: float) -> int:
    lo = np.searchsorted(config.positions, a, side="left")
    hi = np.searchsorted(config.positions, b, side="right")
    return int(config.multiplicities[lo:hi].sum())
