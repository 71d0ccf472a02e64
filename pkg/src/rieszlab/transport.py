"""One-dimensional optimal transport by monotone (quantile) matching."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .core import Configuration, RandomStream, Window, restrict


@dataclass(frozen=True)
class Matching:
    """Well-ordered coupling: ``sources[i]`` carries ``mass[i]`` to ``targets[i]``."""

    sources: np.ndarray
    targets: np.ndarray
    mass: np.ndarray
    p: float

    def __post_init__(self):
        if not (self.sources.shape == self.targets.shape == self.mass.shape):
            raise ValueError("sources, targets and mass differ in length")
        if np.any(np.diff(self.sources) < 0) or np.any(np.diff(self.targets) < 0):
            raise ValueError("matching is not well ordered")
        if np.any(self.mass <= 0):
            raise ValueError("masses must be positive")

    @property
    def cost(self) -> float:
        return float(np.dot(self.mass, np.abs(self.sources - self.targets) ** self.p))

    @property
    def displacements(self) -> np.ndarray:
        return self.targets - self.sources

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "target", "mass"])
        for row in zip(self.sources, self.targets, self.mass):
            w.writerow([format(float(v), ".17g") for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class TransportReport:
    total_cost: float
    cost_per_length: float
    window_length: float
    p: float

    def to_dict(self):
        return dict(total_cost=self.total_cost, cost_per_length=self.cost_per_length,
                    window_length=self.window_length, p=self.p)


def _check_p(p):
    if not p >= 1:
        raise ValueError(f"cost exponent must be >= 1, got {p}")
    return float(p)


def monotone_match_points(sources, targets, p: float = 2.0) -> Matching:
    """Pair the i-th smallest source with the i-th smallest target."""
    p = _check_p(p)
    src = np.sort(np.asarray(sources, dtype=float).ravel())
    tgt = np.sort(np.asarray(targets, dtype=float).ravel())
    if src.size != tgt.size:
        raise ValueError(f"cannot match {src.size} sources to {tgt.size} targets")
    return Matching(src, tgt, np.ones(src.size), p)


def block_cost(d, p: float):
    """int_0^1 |d - u|^p du, vectorized; ``d`` is atom minus block left edge."""
    d = np.asarray(d, dtype=float)
    return (_F(d, p) - _F(d - 1.0, p))


def _F(u, p):
    return np.sign(u) * np.abs(u) ** (p + 1) / (p + 1)


def monotone_cost_to_lebesgue(config: Configuration, window: Window, p: float = 2.0) -> TransportReport:
    """Cost of sending Leb on ``window`` to the atoms, unit block by unit block.

    The window is cut into unit blocks ``[l + j, l + j + 1)`` and block j goes
    to the j-th sorted atom (multiplicities expanded).
    """
    p = _check_p(p)
    x = config.expanded()
    if not math.isclose(x.size, window.length, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"mass {x.size} differs from window length {window.length}")
    d = x - (window.left + np.arange(x.size))
    total = float(np.sum(block_cost(d, p)))
    return TransportReport(total, total / window.length, window.length, p)


def optimal_block_cost(x: np.ndarray, p: float) -> float:
    """min over t of sum_k int_0^1 |x_k - t - k - u|^p du for sorted ``x``.

    The atoms are sent to a contiguous stretch of Lebesgue measure of the
    same mass, placed optimally.
    """
    if x.size == 0:
        return 0.0
    e = x - np.arange(x.size)
    if p == 2.0:
        d = e - (e.mean() - 0.5)
        return float(np.sum(d * d - d + 1.0 / 3.0))
    res = minimize_scalar(lambda t: float(np.sum(block_cost(e - t, p))),
                          bounds=(e.min() - 1.0, e.max()), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun)


def optimal_lattice_cost(x: np.ndarray, p: float) -> float:
    """min over t of sum_k |x_k - t - k|^p for sorted ``x``."""
    if x.size == 0:
        return 0.0
    e = x - np.arange(x.size)
    if p == 2.0:
        d = e - e.mean()
        return float(np.dot(d, d))
    if p == 1.0:
        return float(np.sum(np.abs(e - np.median(e))))
    if np.ptp(e) == 0:
        return 0.0
    res = minimize_scalar(lambda t: float(np.sum(np.abs(e - t) ** p)),
                          bounds=(e.min(), e.max()), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun)


def perturbation_extract(config: Configuration, reference_shift: float = 0.0):
    """Match atoms monotonically to consecutive sites ``j + reference_shift``.

    The block of sites is the one whose index offset is the rounded mean
    displacement, so a lattice perturbed by ``c`` gives all ``p_j = c`` for
    ``|c| < 1/2``.  Returns ``(j, p)`` integer and real arrays.
    """
    x = config.expanded()
    if x.size == 0:
        raise ValueError("cannot extract perturbations from an empty configuration")
    k = np.arange(x.size)
    j0 = int(np.round(np.mean(x - k - reference_shift)))
    j = j0 + k
    return j, x - (j + reference_shift)


@dataclass
class CostCurve:
    lengths: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    samples: int
    target: str
    p: float

    def rows(self):
        return [(float(l), float(m), float(s), self.samples) for l, m, s in zip(self.lengths, self.mean, self.stderr)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["length", "mean_cost", "stderr", "samples"])
        for l, m, s, k in self.rows():
            w.writerow([format(l, ".17g"), format(m, ".17g"), format(s, ".17g"), k])
        return buf.getvalue()


def window_cost(config: Configuration, center: float, length: float, target: str = "lebesgue",
                p: float = 2.0) -> float:
    """Monotone cost per unit length of the atoms in the centered window.

    All M atoms in the window are sent to a contiguous piece of the target
    holding mass M (Lebesgue stretch or M consecutive lattice points), with
    the free placement optimized.  The placement may cross the window edge,
    which is what the infinite-volume coupling is allowed to do.
    """
    w = Window.centered(center, length)
    x = restrict(config, w).expanded()
    if target == "lebesgue":
        return optimal_block_cost(x, p) / length
    if target == "lattice":
        return optimal_lattice_cost(x, p) / length
    raise ValueError(f"unknown target {target!r}")


def stationary_cost_estimator(sampler: Callable[[RandomStream], Configuration], target: str, p: float,
                              window_lengths, samples: int, stream: RandomStream) -> CostCurve:
    """Window-functional estimate of the stationary transport cost per unit length.

    ``sampler(substream)`` returns a configuration whose window contains the
    largest requested length around its center.  A flat curve indicates a
    finite cost; growth indicates divergence.
    """
    p = _check_p(p)
    lengths = np.asarray(window_lengths, dtype=float)
    if samples < 2:
        raise ValueError("need at least two samples for an error bar")
    vals = np.empty((samples, lengths.size))
    for i in range(samples):
        cfg = sampler(stream.substream(i))
        if cfg.window is None or cfg.window.length < lengths.max() - 1e-9:
            raise ValueError("sampler window is shorter than the largest requested length")
        c = cfg.window.center
        vals[i] = [window_cost(cfg, c, l, target, p) for l in lengths]
    return CostCurve(lengths, vals.mean(0), vals.std(0, ddof=1) / math.sqrt(samples), samples, target, p)


@dataclass(frozen=True)
class CostBound:
    value: float
    stderr: float
    samples: int


def tiled_cost_bound(finite_sampler: Callable[[RandomStream], Configuration], p: float, samples: int,
                     stream: RandomStream) -> CostBound:
    """Monte Carlo estimate of E[W_p^p(xi, Leb_tile)] / |tile|."""
    p = _check_p(p)
    vals = np.empty(samples)
    for i in range(samples):
        tile = finite_sampler(stream.substream(i))
        vals[i] = monotone_cost_to_lebesgue(tile, tile.window, p).cost_per_length
    se = vals.std(ddof=1) / math.sqrt(samples) if samples > 1 else math.inf
    return CostBound(float(vals.mean()), float(se), samples)
