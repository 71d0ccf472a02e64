"""Riesz Hamiltonians and kernel energies of neutral configurations.

Three independent evaluators of the finite-volume Riesz energy are
provided: the expanded pairwise sum with closed-form background terms, the
ordered-statistics (Baxter) form for s = -1, and the Fourier integral.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf, gamma

from ._oscillatory import cos_tail, sin_tail
from .core import Configuration, ModelParams, Window

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
BOX_TOL = 1e-12


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class QuadratureSettings:
    """Controls for the Fourier-side energy integrals.

    The integral over (0, split_point) is done after the substitution
    ``xi = t**substitution_order``; (split_point, cutoff) by composite
    Gauss-Legendre panels refined until two successive levels agree to
    ``tolerance``; the tail beyond ``cutoff`` is integrated exactly term by
    term.  ``substitution_order=None`` means ``2 / (2 + s)``.
    """

    split_point: float = 1.0
    substitution_order: float | None = None
    tolerance: float = 1e-8
    max_subdivisions: int = 1 << 16
    cutoff: float = 64.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.split_point < self.cutoff:
            raise ValueError("need 0 < split_point < cutoff")


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class Kernel:
    kind: str
    s: float | None = None

    def __post_init__(self):
        if self.kind not in ("riesz", "exponential", "gaussian"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "riesz" and not (self.s is not None and -2 < self.s < 0):
            raise ValueError("riesz kernel needs -2 < s < 0")

    @classmethod
    def riesz(cls, s):
        return cls("riesz", float(s))

    @classmethod
    def exponential(cls):
        return cls("exponential")

    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    def value_at(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        if self.kind == "riesz":
            return -(r ** (-self.s))
        if self.kind == "exponential":
            return np.exp(-r)
        return np.exp(-0.5 * r * r)

    def fourier_at(self, xi):
        xi = np.abs(np.asarray(xi, dtype=float))
        if self.kind == "riesz":
            with np.errstate(divide="ignore"):
                return riesz_fourier_constant(self.s) / xi ** (1.0 - self.s)
        if self.kind == "exponential":
            return 2.0 / (1.0 + xi * xi)
        return math.sqrt(2.0 * math.pi) * np.exp(-0.5 * xi * xi)

    def background(self, x, window: Window):
        """int_window g(x - y) dy, closed form."""
        x = np.asarray(x, dtype=float)
        a = x - window.left   # distance to left edge (signed)
        b = window.right - x  # distance to right edge (signed)
        if self.kind == "riesz":
            p = -self.s
            return -(_signed_pow_antideriv(a, p) + _signed_pow_antideriv(b, p))
        if self.kind == "exponential":
            return _exp_antideriv(a) + _exp_antideriv(b)
        c = math.sqrt(0.5 * math.pi)
        return c * (erf(a / math.sqrt(2.0)) + erf(b / math.sqrt(2.0)))

    def self_energy(self, length: float) -> float:
        """int int_{[0,L]^2} g(x - y) dx dy."""
        L = float(length)
        if self.kind == "riesz":
            p = -self.s
            return -2.0 * L ** (p + 2) / ((p + 1) * (p + 2))
        if self.kind == "exponential":
            return 2.0 * (L - 1.0 + math.exp(-L))
        return 2.0 * (L * math.sqrt(0.5 * math.pi) * math.erf(L / math.sqrt(2.0)) - (1.0 - math.exp(-0.5 * L * L)))


def _signed_pow_antideriv(d, p):
    # int_0^d |u|^p du with sign of d
    return np.sign(d) * np.abs(d) ** (p + 1) / (p + 1)


def _exp_antideriv(d):
    # int_0^d e^{-|u|} du with sign of d
    return np.sign(d) * (1.0 - np.exp(-np.abs(d)))


def riesz_fourier_constant(s: float) -> float:
    """C_s with FT(-|x|^{-s}) = C_s / |xi|^{1-s} (finite part)."""
    if not -2 < s < 0:
        raise ValueError(f"C_s is defined for -2 < s < 0, got {s}")
    return gamma((1.0 - s) / 2.0) / -gamma(s / 2.0) * math.sqrt(math.pi) * 2.0 ** (1.0 - s)


# ---------------------------------------------------------------------------
# direct evaluators

def _atoms_in_box(config: Configuration, params: ModelParams):
    x, m = config.positions, config.multiplicities.astype(float)
    half = 0.5 * params.n
    if x.size and (x[0] < -half - BOX_TOL or x[-1] > half + BOX_TOL):
        raise ValueError(f"configuration leaves the box [-{half}, {half}]")
    if config.mass != params.n:
        warnings.warn(f"configuration mass {config.mass} differs from n={params.n}; "
                      "the system is not neutral", stacklevel=3)
    return x, m


def _pair_sum(x, m, g, chunk=2048) -> float:
    # sum over unordered pairs of distinct atoms, m_i m_j g(x_i - x_j)
    total = 0.0
    for start in range(0, x.size, chunk):
        xs, ms = x[start:start + chunk], m[start:start + chunk]
        d = xs[:, None] - x[None, :]
        w = ms[:, None] * m[None, :]
        cols = np.arange(x.size)[None, :]
        rows = np.arange(start, start + xs.size)[:, None]
        total += float(np.sum(np.where(cols > rows, w * g(d), 0.0)))
    return total


def hamiltonian_pairwise(config: Configuration, params: ModelParams) -> float:
    """Particle-particle + particle-background + background-background energy."""
    if params.n == 0:
        if config.mass:
            raise ValueError("nonempty configuration in an empty box")
        return 0.0
    x, m = _atoms_in_box(config, params)
    kernel = Kernel.riesz(params.s)
    box = params.box
    pair = _pair_sum(x, m, kernel.value_at)
    bg = float(np.dot(m, kernel.background(np.clip(x, box.left, box.right), box)))
    return pair - bg + 0.5 * kernel.self_energy(params.n)


def lattice_sites(n: int) -> np.ndarray:
    """y_j = j - (n + 1)/2, j = 1..n: unit-block midpoints of the box."""
    return np.arange(1, n + 1, dtype=float) - 0.5 * (n + 1)


def hamiltonian_baxter(config: Configuration, params: ModelParams) -> float:
    """Coulomb energy sum_j (x_(j) - y_j)^2 + n/12 from ordered positions."""
    if params.s != -1.0:
        raise ValueError("the ordered-statistics form is specific to s = -1")
    if config.mass != params.n:
        raise ValueError(f"configuration mass {config.mass} differs from n={params.n}")
    x = config.expanded()
    half = 0.5 * params.n
    if x.size and (x[0] < -half - BOX_TOL or x[-1] > half + BOX_TOL):
        raise ValueError(f"configuration leaves the box [-{half}, {half}]")
    d = x - lattice_sites(params.n)
    return float(np.dot(d, d)) + params.n / 12.0


def kernel_energy(config: Configuration, window: Window, kernel: Kernel) -> float:
    """(1/2) double integral of g against nu = config - Leb_window, diagonal included."""
    x, m = config.positions, config.multiplicities.astype(float)
    pair = _pair_sum(x, m, kernel.value_at)
    diag = 0.5 * float(np.dot(m, m)) * float(kernel.value_at(0.0))
    bg = float(np.dot(m, kernel.background(x, window)))
    return pair + diag - bg + 0.5 * kernel.self_energy(window.length)


# ---------------------------------------------------------------------------
# Fourier side

def _sinc_minus_one(u):
    # sin(u)/u - 1 without cancellation
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 0.5
    us = u[small] ** 2
    term = -us / 6.0
    acc = term.copy()
    for k in range(2, 10):
        term = -term * us / ((2 * k) * (2 * k + 1))
        acc += term
    out[small] = acc
    ub = u[~small]
    out[~small] = np.sin(ub) / ub - 1.0
    return out


class _Measure:
    """Signed measure config - Leb_window, recentred on the window center."""

    def __init__(self, config: Configuration, window: Window):
        self.x = config.positions - window.center
        self.m = config.multiplicities.astype(float)
        self.L = window.length
        self.excess = float(self.m.sum()) - self.L

    def abs_hat_sq(self, xi):
        xi = np.asarray(xi, dtype=float)
        phase = xi[:, None] * self.x[None, :]
        # e^{-i xi x} - 1, computed without cancellation
        re = -2.0 * np.sin(0.5 * phase) ** 2
        im = -np.sin(phase)
        bg = self.L * _sinc_minus_one(0.5 * self.L * xi)
        hat_re = re @ self.m + self.excess - bg
        hat_im = im @ self.m
        return hat_re * hat_re + hat_im * hat_im

    @property
    def max_frequency(self) -> float:
        xmax = float(np.max(np.abs(self.x))) if self.x.size else 0.0
        return max(xmax, 0.5 * self.L) + 1.0

    def tail(self, cutoff: float, r: float) -> float:
        """int_cutoff^inf |nu_hat(xi)|^2 xi^{-r} d xi, exact."""
        x, m, L = self.x, self.m, self.L
        total = float(np.dot(m, m)) * cutoff ** (1 - r) / (r - 1)
        if x.size > 1:
            iu, ju = np.triu_indices(x.size, 1)
            total += 2.0 * float(np.dot(m[iu] * m[ju], cos_tail(x[ju] - x[iu], cutoff, r)))
        if x.size:
            bp, bm = 0.5 * L + x, 0.5 * L - x
            total -= 2.0 * float(np.dot(m, sin_tail(bp, cutoff, r + 1) + sin_tail(bm, cutoff, r + 1)))
        total += 2.0 * cutoff ** (-1 - r) / (r + 1) - 2.0 * float(cos_tail(np.array([L]), cutoff, r + 2)[0])
        return total


def _composite(f, a, b, width, tol, max_panels):
    """Composite Gauss-Legendre on [a, b], refined by halving until stable."""
    panels = max(1, int(math.ceil((b - a) / width)))
    prev = None
    while True:
        if panels > max_panels:
            raise QuadratureError(f"no convergence on [{a}, {b}] within {max_panels} panels",
                                  np.inf if prev is None else abs(prev[1]))
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mids = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mids[:, None] + half[:, None] * _GL_X[None, :]).ravel()
        vals = f(nodes).reshape(panels, _GL_X.size)
        est = float(np.sum(half * (vals @ _GL_W)))
        if prev is not None:
            err = abs(est - prev[0])
            if err <= tol:
                return est
            prev = (est, err)
        else:
            prev = (est, np.inf)
        panels *= 2


def _riesz_parts(nu: _Measure, q: float, quad: QuadratureSettings):
    """(low, high) = integrals of |nu_hat|^2 |xi|^{-q} over |xi| <= split and |xi| > split."""
    split, cutoff = quad.split_point, max(quad.cutoff, 2.0 * quad.split_point)
    k = quad.substitution_order or 2.0 / (3.0 - q)
    width_t = min(1.0, math.pi / (nu.max_frequency * k * split)) * 4.0
    tol = 0.25 * quad.tolerance

    def low_integrand(t):
        xi = split * t ** k
        with np.errstate(divide="ignore", invalid="ignore"):
            jac = split * k * t ** (k - 1.0)
            val = nu.abs_hat_sq(xi) * xi ** (-q) * jac
        return np.where(t > 0, val, 0.0)

    low = _composite(low_integrand, 0.0, 1.0, width_t, tol, quad.max_subdivisions)
    width = 4.0 * math.pi / nu.max_frequency
    mid = _composite(lambda xi: nu.abs_hat_sq(xi) * xi ** (-q), split, cutoff, width, tol, quad.max_subdivisions)
    high = mid + nu.tail(cutoff, q)
    return 2.0 * low, 2.0 * high


def hamiltonian_fourier(config: Configuration, params: ModelParams,
                        quad: QuadratureSettings | None = None) -> float:
    """(C_s / 4 pi) int |nu_hat(xi)|^2 / |xi|^{1-s} d xi by quadrature."""
    quad = quad or QuadratureSettings()
    if params.n == 0:
        return 0.0
    _atoms_in_box(config, params)
    nu = _Measure(config, params.box)
    low, high = _riesz_parts(nu, 1.0 - params.s, quad)
    return riesz_fourier_constant(params.s) / (4.0 * math.pi) * (low + high)


def kernel_energy_fourier(config: Configuration, window: Window, kernel: Kernel,
                          quad: QuadratureSettings | None = None) -> float:
    """(1/4 pi) int g_hat |nu_hat|^2, the Fourier-side value of ``kernel_energy``."""
    quad = quad or QuadratureSettings()
    nu = _Measure(config, window)
    if kernel.kind == "riesz":
        low, high = _riesz_parts(nu, 1.0 - kernel.s, quad)
        return riesz_fourier_constant(kernel.s) / (4.0 * math.pi) * (low + high)
    width = 4.0 * math.pi / nu.max_frequency
    tol = 0.25 * quad.tolerance
    if kernel.kind == "gaussian":
        # e^{-xi^2/2} (2n)^2 is below 1e-30 past xi = 14 for any practical n
        top = 14.0 + math.sqrt(2.0 * max(0.0, math.log(max(1.0, 4.0 * nu.m.sum() ** 2))))
        val = _composite(lambda xi: kernel.fourier_at(xi) * nu.abs_hat_sq(xi), 0.0, top, width, tol,
                         quad.max_subdivisions)
        return 2.0 * val / (4.0 * math.pi)
    cutoff = max(quad.cutoff, 2.0)
    head = _composite(lambda xi: kernel.fourier_at(xi) * nu.abs_hat_sq(xi), 0.0, cutoff, width, tol,
                      quad.max_subdivisions)
    # 2/(1+xi^2) = sum_j 2 (-1)^j xi^{-2j-2} for xi > 1
    tail, j = 0.0, 0
    while cutoff ** (-2 * j) > 1e-18:
        tail += 2.0 * (-1) ** j * nu.tail(cutoff, 2.0 * j + 2.0)
        j += 1
    return 2.0 * (head + tail) / (4.0 * math.pi)


# ---------------------------------------------------------------------------
# energy report and inequality audit

@dataclass
class EnergyReport:
    evaluator: str
    value: float
    settings: dict
    elapsed: float

    def to_dict(self):
        return asdict(self)


def evaluate(config: Configuration, params: ModelParams, evaluator: str = "pairwise",
             quad: QuadratureSettings | None = None) -> EnergyReport:
    t0 = time.perf_counter()
    if evaluator == "pairwise":
        value, settings = hamiltonian_pairwise(config, params), {}
    elif evaluator == "baxter":
        value, settings = hamiltonian_baxter(config, params), {}
    elif evaluator == "fourier":
        quad = quad or QuadratureSettings()
        value, settings = hamiltonian_fourier(config, params, quad), asdict(quad)
    else:
        raise ValueError(f"unknown evaluator {evaluator!r}")
    settings = {"s": params.s, "n": params.n, **settings}
    return EnergyReport(evaluator, value, settings, time.perf_counter() - t0)


def cell_occupations(config: Configuration, n: int) -> np.ndarray:
    """N_j = number of points in the j-th unit cell of the box [-n/2, n/2]."""
    x = config.expanded()
    idx = np.clip(np.floor(x + 0.5 * n).astype(int), 0, n - 1)
    return np.bincount(idx, minlength=n)


def gauss_over_riesz_constant(s: float) -> float:
    """sup_xi sqrt(2 pi) e^{-xi^2/2} |xi|^{1-s} / C_s (attained at xi^2 = 1 - s)."""
    q = 1.0 - s
    return math.sqrt(2 * math.pi) * math.exp(-0.5 * q) * q ** (0.5 * q) / riesz_fourier_constant(s)


@dataclass
class AuditRow:
    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-9) + 1e-9

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs else math.inf

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass
class EnergyAudit:
    quantities: dict
    comparisons: list

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.comparisons)

    def rows(self):
        """(quantity, value) pairs, comparisons flattened as ratio/slack rows."""
        out = list(self.quantities.items())
        for c in self.comparisons:
            out += [(f"{c.name}.ratio", c.ratio), (f"{c.name}.slack", c.slack), (f"{c.name}.holds", float(c.holds))]
        return out


def energy_inequality_audit(config: Configuration, params: ModelParams,
                            quad: QuadratureSettings | None = None) -> EnergyAudit:
    """Evaluate every member of the W_2^2 <~ H^{(s)} chain and compare them.

    Each comparison carries explicit constants, so it must hold for every
    neutral configuration; the observed ratio and slack show how loose it is.
    """
    from .transport import monotone_cost_to_lebesgue

    if not -2 < params.s <= -1:
        raise ValueError("the audit chain needs -2 < s <= -1")
    quad = quad or QuadratureSettings()
    n, s = params.n, params.s
    box = params.box
    nu = _Measure(config, box)
    coul_low, coul_high = _riesz_parts(nu, 2.0, quad)
    s_low, s_high = _riesz_parts(nu, 1.0 - s, quad)
    c_s = riesz_fourier_constant(s)
    h_s = c_s / (4 * math.pi) * (s_low + s_high)
    h_exp = kernel_energy(config, box, Kernel.exponential())
    h_gauss = kernel_energy(config, box, Kernel.gaussian())
    exp_high = 4 * math.pi * h_exp - _exp_low(nu, quad)
    cells = cell_occupations(config, n)
    sum_n2 = float(np.dot(cells, cells))
    w2_leb = monotone_cost_to_lebesgue(config, box, 2.0).total_cost
    d = config.expanded() - lattice_sites(n)
    w2_lat = float(np.dot(d, d))
    h_coul = hamiltonian_baxter(config, ModelParams(-1.0, params.beta, n))
    coth_half = (1 + math.exp(-1)) / (1 - math.exp(-1))
    bg_exp = 0.5 * Kernel.exponential().self_energy(n)
    k_gs = gauss_over_riesz_constant(s)
    q = dict(
        w2_lebesgue=w2_leb, w2_lattice=w2_lat, h_coulomb=h_coul,
        fourier_coulomb_low=coul_low, fourier_coulomb_high=coul_high,
        fourier_s_low=s_low, fourier_exp_high=exp_high,
        h_s=h_s, h_exp=h_exp, h_gauss=h_gauss, sum_cell_sq=sum_n2,
    )
    comps = [
        AuditRow("w2_lebesgue<=w2_lattice+n/12", w2_leb, w2_lat + n / 12),
        AuditRow("w2_lattice<=h_coulomb", w2_lat, h_coul),
        AuditRow("h_coulomb<=fourier_coulomb/2pi", h_coul, (coul_low + coul_high) / (2 * math.pi)),
        AuditRow("fourier_coulomb_low<=fourier_s_low", coul_low, s_low),
        AuditRow("fourier_coulomb_high<=fourier_exp_high", coul_high, exp_high),
        AuditRow("h_coulomb<=(2/C_s)h_s+2h_exp", h_coul, 2 / c_s * h_s + 2 * h_exp),
        AuditRow("h_exp<=(e*coth(1/2)/2)sum_cell_sq+bg", h_exp, 0.5 * math.e * coth_half * sum_n2 + bg_exp),
        AuditRow("(e^-1/2/2)sum_cell_sq-sqrt(2pi)n<=h_gauss",
                 0.5 * math.exp(-0.5) * sum_n2 - math.sqrt(2 * math.pi) * n, h_gauss),
        AuditRow("h_gauss<=K_s*h_s", h_gauss, k_gs * h_s),
    ]
    return EnergyAudit(q, comps)


def _exp_low(nu: _Measure, quad: QuadratureSettings) -> float:
    # int_{|xi|<=1} 2/(1+xi^2) |nu_hat|^2
    width = 4.0 * math.pi / nu.max_frequency
    return 2.0 * _composite(lambda xi: 2.0 / (1 + xi * xi) * nu.abs_hat_sq(xi), 0.0, 1.0, width,
                            0.25 * quad.tolerance, quad.max_subdivisions)
