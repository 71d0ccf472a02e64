"""Configurations, windows, model parameters and the random-stream contract.

A configuration is a finite integer-valued measure on the line, stored as
sorted distinct positions with positive integer multiplicities.  Intervals
are half-open ``[left, right)`` throughout so that tilings partition the line.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Window:
    left: float
    right: float

    def __post_init__(self):
        left, right = float(self.left), float(self.right)
        if not (np.isfinite(left) and np.isfinite(right)) or not left < right:
            raise ValueError(f"invalid window [{self.left}, {self.right})")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def length(self) -> float:
        return self.right - self.left

    @property
    def center(self) -> float:
        return 0.5 * (self.left + self.right)

    @classmethod
    def box(cls, n: float) -> "Window":
        """The centered box [-n/2, n/2]."""
        return cls(-0.5 * n, 0.5 * n)

    @classmethod
    def centered(cls, center: float, length: float) -> "Window":
        return cls(center - 0.5 * length, center + 0.5 * length)

    @classmethod
    def parse(cls, text: str) -> "Window":
        """Parse a ``"left,right"`` string."""
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 2:
            raise ValueError(f"window must be 'left,right', got {text!r}")
        return cls(float(parts[0]), float(parts[1]))

    def shifted(self, u: float) -> "Window":
        return Window(self.left + u, self.right + u)

    def padded(self, margin: float) -> "Window":
        return Window(self.left - margin, self.right + margin)

    def as_list(self) -> list:
        return [self.left, self.right]


@dataclass(frozen=True)
class ModelParams:
    """Riesz gas parameters: homogeneity ``s``, inverse temperature, size ``n``.

    ``beta = 0`` is admitted (uniform binomial law, start of the
    thermodynamic-integration grid) and so is ``n = 0`` (empty system).
    """

    s: float
    beta: float
    n: int

    def __post_init__(self):
        s, beta = float(self.s), float(self.beta)
        if not -2.0 < s < 0.0:
            raise ValueError(f"s must lie in (-2, 0), got {s}")
        if not (np.isfinite(beta) and beta >= 0.0):
            raise ValueError(f"beta must be a nonnegative real, got {beta}")
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"n must be a nonnegative integer, got {self.n}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "n", int(self.n))

    @property
    def box(self) -> Window:
        return Window.box(self.n)

    @property
    def is_coulomb(self) -> bool:
        return self.s == -1.0


class Configuration:
    """Immutable sorted multiset of points.

    Parameters
    ----------
    positions : array-like
        Point positions, in any order; repeated or near-equal (within
        ``MERGE_TOL``) positions are merged into multiplicities.
    multiplicities : array-like, optional
        Positive integer weights for ``positions`` (default all ones).
    window : Window, optional
        The window the configuration was generated on.
    """

    __slots__ = ("positions", "multiplicities", "window")

    def __init__(self, positions=(), multiplicities=None, window: Window | None = None):
        pos = np.asarray(positions, dtype=float).ravel()
        if multiplicities is None:
            mult = np.ones(pos.size, dtype=np.int64)
        else:
            mult = np.asarray(multiplicities).ravel()
            if mult.size != pos.size:
                raise ValueError("positions and multiplicities differ in length")
            if mult.size and (np.any(mult != np.round(mult)) or np.any(mult < 1)):
                raise ValueError("multiplicities must be positive integers")
            mult = mult.astype(np.int64)
        if pos.size and not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        order = np.argsort(pos, kind="stable")
        pos, mult = pos[order], mult[order]
        if pos.size > 1:
            new_atom = np.empty(pos.size, dtype=bool)
            new_atom[0] = True
            new_atom[1:] = np.diff(pos) > MERGE_TOL
            if not new_atom.all():
                starts = np.flatnonzero(new_atom)
                pos = pos[starts]
                mult = np.add.reduceat(mult, starts)
        self._set(pos, mult, window)

    def _set(self, pos, mult, window):
        pos.setflags(write=False)
        mult.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "multiplicities", mult)
        object.__setattr__(self, "window", window)

    def __setattr__(self, name, value):
        raise AttributeError("Configuration is immutable")

    @classmethod
    def _trusted(cls, pos, mult, window=None) -> "Configuration":
        # pos sorted with gaps > MERGE_TOL, mult positive ints
        obj = cls.__new__(cls)
        obj._set(np.ascontiguousarray(pos, dtype=float), np.ascontiguousarray(mult, dtype=np.int64), window)
        return obj

    @classmethod
    def from_atoms(cls, atoms: Iterable[Sequence[float]], window: Window | None = None) -> "Configuration":
        atoms = [tuple(a) for a in atoms]
        if not atoms:
            return cls((), None, window)
        pos, mult = zip(*atoms)
        return cls(pos, mult, window)

    @property
    def atoms(self) -> list:
        return [(float(x), int(k)) for x, k in zip(self.positions, self.multiplicities)]

    @property
    def mass(self) -> int:
        return int(self.multiplicities.sum())

    def expanded(self) -> np.ndarray:
        """Sorted positions with each atom repeated by its multiplicity."""
        return np.repeat(self.positions, self.multiplicities)

    def with_window(self, window: Window | None) -> "Configuration":
        return Configuration._trusted(self.positions, self.multiplicities, window)

    def __len__(self):
        return self.positions.size

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return (
            self.window == other.window
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.multiplicities, other.multiplicities)
        )

    __hash__ = None

    def __repr__(self):
        head = ", ".join(f"({x:.6g},{k})" for x, k in self.atoms[:4])
        more = ", ..." if len(self) > 4 else ""
        return f"Configuration([{head}{more}], mass={self.mass}, window={self.window})"

    # serialization
    def to_dict(self) -> dict:
        return {
            "window": None if self.window is None else self.window.as_list(),
            "atoms": [[x, k] for x, k in self.atoms],
        }

    def to_json(self) -> str:
        # repr-based float output round-trips bit-exactly
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "Configuration":
        win = data.get("window")
        window = None if win is None else Window(*win)
        return cls.from_atoms(data.get("atoms", []), window)

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pos", "mult"])
        for x, k in self.atoms:
            writer.writerow([format(x, ".17g"), k])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, window: Window | None = None) -> "Configuration":
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0] and rows[0][0].strip() == "pos":
            rows = rows[1:]
        return cls.from_atoms(((float(r[0]), int(r[1])) for r in rows if r), window)


def count(config: Configuration, interval: Window) -> int:
    """Total multiplicity of atoms in ``[left, right)``."""
    lo = np.searchsorted(config.positions, interval.left, side="left")
    hi = np.searchsorted(config.positions, interval.right, side="left")
    return int(config.multiplicities[lo:hi].sum())


def counts(config: Configuration, lefts, rights) -> np.ndarray:
    """Vectorized ``count`` over many half-open intervals."""
    cum = np.concatenate(([0], np.cumsum(config.multiplicities)))
    lo = np.searchsorted(config.positions, lefts, side="left")
    hi = np.searchsorted(config.positions, rights, side="left")
    return cum[hi] - cum[lo]


def translate(config: Configuration, u: float) -> Configuration:
    window = None if config.window is None else config.window.shifted(u)
    return Configuration._trusted(config.positions + u, config.multiplicities, window)


def restrict(config: Configuration, interval: Window) -> Configuration:
    lo = np.searchsorted(config.positions, interval.left, side="left")
    hi = np.searchsorted(config.positions, interval.right, side="left")
    return Configuration._trusted(config.positions[lo:hi], config.multiplicities[lo:hi], interval)


class RandomStream:
    """Counter-based (Philox) random stream with indexable substreams.

    The draw sequence depends only on ``seed`` and the substream path, so
    per-tile or per-chain streams are reproducible regardless of scheduling.
    Generator methods (``uniform``, ``normal``, ``poisson`` ...) are
    forwarded to the underlying :class:`numpy.random.Generator`.
    """

    def __init__(self, seed: int, path: Sequence[int] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def substream(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, self.path + (int(index),))

    def __getattr__(self, name):
        return getattr(self.generator, name)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, path={self.path})"


def as_stream(stream_or_seed) -> RandomStream:
    if isinstance(stream_or_seed, RandomStream):
        return stream_or_seed
    return RandomStream(0 if stream_or_seed is None else stream_or_seed)
