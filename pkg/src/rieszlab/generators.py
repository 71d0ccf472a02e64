"""Reference point processes on finite windows and the stationarization of tiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Configuration, RandomStream, Window, restrict

PERTURBATION_KINDS = ("gaussian", "uniform", "laplace", "constant")


@dataclass(frozen=True)
class PerturbationLaw:
    """Law of the i.i.d. displacements ``p_j`` of a perturbed lattice.

    ``param`` is sigma (gaussian), half width (uniform), scale (laplace) or
    the constant value (constant).
    """

    kind: str
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation law {self.kind!r}")
        if self.kind != "constant" and not self.param > 0:
            raise ValueError(f"{self.kind} law needs a positive parameter")
        object.__setattr__(self, "param", float(self.param))

    @property
    def scale(self) -> float:
        return abs(self.param)

    @property
    def mean_abs(self) -> float:
        """E|p|."""
        if self.kind == "gaussian":
            return self.param * math.sqrt(2.0 / math.pi)
        if self.kind == "uniform":
            return self.param / 2.0
        if self.kind == "laplace":
            return self.param
        return abs(self.param)

    def sample(self, stream: RandomStream, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            return stream.normal(0.0, self.param, size)
        if self.kind == "uniform":
            return stream.uniform(-self.param, self.param, size)
        if self.kind == "laplace":
            return stream.laplace(0.0, self.param, size)
        return np.full(size, self.param)


@dataclass(frozen=True)
class MassLaw:
    """Distribution of the cluster mass N on {1, ..., n_max}."""

    probabilities: tuple = field(default=(1.0,))

    def __post_init__(self):
        a = np.asarray(self.probabilities, dtype=float)
        if a.ndim != 1 or a.size == 0 or np.any(a < 0) or not math.isclose(a.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("mass law must be a nonnegative vector summing to 1")
        object.__setattr__(self, "probabilities", tuple(float(v) for v in a / a.sum()))

    @classmethod
    def zipf(cls, exponent: float = 2.0, n_max: int = 100) -> "MassLaw":
        """a_n proportional to n^-exponent, truncated at n_max."""
        w = np.arange(1, n_max + 1, dtype=float) ** -exponent
        return cls(tuple(w / w.sum()))

    @classmethod
    def dirac(cls, n: int) -> "MassLaw":
        a = np.zeros(n)
        a[-1] = 1.0
        return cls(tuple(a))

    @property
    def n_max(self) -> int:
        return len(self.probabilities)

    def mean_half_mass(self) -> float:
        """Truncated sum of a_n * n / 2."""
        n = np.arange(1, self.n_max + 1)
        return float(np.dot(self.probabilities, n) / 2.0)

    def sample(self, stream: RandomStream) -> int:
        return int(stream.choice(self.n_max, p=self.probabilities)) + 1


def sample_poisson(window: Window, intensity: float, stream: RandomStream) -> Configuration:
    if intensity < 0:
        raise ValueError("intensity must be nonnegative")
    k = stream.poisson(intensity * window.length) if intensity > 0 else 0
    pos = stream.uniform(window.left, window.right, k)
    return Configuration(pos, window=window)


def _lattice_sites(window: Window, shift: float, margin: float = 0.0) -> np.ndarray:
    first = math.ceil(window.left - margin - shift)
    last = math.floor(window.right + margin - shift)
    return np.arange(first, last + 1, dtype=float) + shift


def sample_stationarized_lattice(window: Window, stream: RandomStream) -> Configuration:
    u = stream.uniform()
    sites = _lattice_sites(window, u)
    sites = sites[(sites >= window.left) & (sites < window.right)]
    return Configuration._trusted(sites, np.ones(sites.size, dtype=np.int64), window)


def default_margin(law: PerturbationLaw) -> float:
    return max(10.0, 10.0 * law.scale)


def perturbed_lattice_with_truth(window: Window, law: PerturbationLaw, stream: RandomStream,
                                 margin: float | None = None):
    """Perturbed lattice plus generator ground truth.

    Returns ``(config, shift, sites, perturbations)``: the global shift U and
    the unrestricted lattice sites ``j + U`` with their displacements.
    """
    if margin is None:
        margin = default_margin(law)
    u = stream.uniform()
    sites = _lattice_sites(window, u, margin)
    p = law.sample(stream, sites.size)
    pts = sites + p
    keep = (pts >= window.left) & (pts < window.right)
    return Configuration(pts[keep], window=window), u, sites, p


def sample_perturbed_lattice(window: Window, law: PerturbationLaw, stream: RandomStream,
                             margin: float | None = None) -> Configuration:
    return perturbed_lattice_with_truth(window, law, stream, margin)[0]


def sample_counterexample(window: Window, mass_law: MassLaw, stream: RandomStream) -> Configuration:
    """Clusters of N coincident points at spacing N, N drawn from ``mass_law``."""
    n = mass_law.sample(stream)
    u = stream.uniform(0.0, n)
    first = math.ceil((window.left - u) / n)
    last = math.floor((window.right - u) / n)
    pos = np.arange(first, last + 1, dtype=float) * n + u
    pos = pos[(pos >= window.left) & (pos < window.right)]
    return Configuration._trusted(pos, np.full(pos.size, n, dtype=np.int64), window)


def stationarize(tile_sampler: Callable[[RandomStream], Configuration], m: float, target_window: Window,
                 stream: RandomStream) -> Configuration:
    """Tile the line with i.i.d. copies of a finite configuration and shift uniformly.

    ``tile_sampler(stream)`` must return a configuration whose window has
    length ``m``; each copy is moved so that its window becomes
    ``[k m, (k+1) m)``.  Tiles covering ``target_window`` padded by one tile
    are drawn on substreams ``1, 2, ...``; substream 0 supplies the global
    shift U in [0, m).
    """
    if not m > 0:
        raise ValueError("tile length must be positive")
    u = stream.substream(0).uniform(0.0, m)
    k_first = math.floor((target_window.left - u) / m) - 1
    k_last = math.floor((target_window.right - u) / m) + 1
    chunks_pos, chunks_mult = [], []
    for idx, k in enumerate(range(k_first, k_last + 1)):
        tile = tile_sampler(stream.substream(idx + 1))
        if tile.window is None:
            raise ValueError("tile sampler must return configurations with a window")
        if not math.isclose(tile.window.length, m, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"tile window length {tile.window.length} differs from m={m}")
        chunks_pos.append(tile.positions - tile.window.left + k * m + u)
        chunks_mult.append(tile.multiplicities)
    pos = np.concatenate(chunks_pos) if chunks_pos else np.empty(0)
    mult = np.concatenate(chunks_mult) if chunks_mult else np.empty(0, dtype=np.int64)
    return restrict(Configuration(pos, mult), target_window)


def point_tile_sampler(m: float) -> Callable[[RandomStream], Configuration]:
    """A tile holding one atom at its center."""
    tile = Configuration([0.5 * m], window=Window(0.0, m))
    return lambda stream: tile


def uniform_point_tile_sampler(m: float = 1.0) -> Callable[[RandomStream], Configuration]:
    window = Window(0.0, m)
    return lambda stream: Configuration([stream.uniform(0.0, m)], window=window)


def midpoint_tile_sampler(m: int) -> Callable[[RandomStream], Configuration]:
    """``m`` atoms at the midpoints of the unit blocks of [0, m)."""
    tile = Configuration(np.arange(m) + 0.5, window=Window(0.0, float(m)))
    return lambda stream: tile


GENERATOR_NAMES = ("poisson", "lattice", "perturbed-lattice", "counterexample")


def parse_kv(items) -> dict:
    """Parse ``key=value`` strings into a dict of strings."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def mass_law_from_spec(spec: str, n_max: int) -> MassLaw:
    """``zipf2`` / ``zipf<exp>``, ``dirac<n>`` or a comma list of weights."""
    spec = spec.strip().lower()
    if spec.startswith("zipf"):
        exponent = float(spec[4:] or 2.0)
        return MassLaw.zipf(exponent, n_max)
    if spec.startswith("dirac"):
        return MassLaw.dirac(int(spec[5:]))
    w = np.array([float(v) for v in spec.split(",")])
    return MassLaw(tuple(w / w.sum()))


def make_generator(name: str, params: dict) -> Callable[[Window, RandomStream], Configuration]:
    """Resolve a CLI generator name and ``key=value`` parameters to a sampler."""
    params = dict(params)
    if name == "poisson":
        intensity = float(params.pop("intensity", 1.0))
        sampler = lambda w, st: sample_poisson(w, intensity, st)  # noqa: E731
    elif name == "lattice":
        sampler = sample_stationarized_lattice
    elif name == "perturbed-lattice":
        kind = params.pop("law", "gaussian")
        value = float(params.pop("param", params.pop("sigma", 0.25)))
        margin = params.pop("margin", None)
        law = PerturbationLaw(kind, value)
        margin = None if margin is None else float(margin)
        sampler = lambda w, st: sample_perturbed_lattice(w, law, st, margin)  # noqa: E731
    elif name == "counterexample":
        n_max = int(params.pop("nmax", 100))
        law = mass_law_from_spec(params.pop("a", "zipf2"), n_max)
        sampler = lambda w, st: sample_counterexample(w, law, st)  # noqa: E731
    else:
        raise ValueError(f"unknown process {name!r}; choose from {', '.join(GENERATOR_NAMES)}")
    if params:
        raise ValueError(f"unknown parameters for {name}: {', '.join(sorted(params))}")
    return sampler
