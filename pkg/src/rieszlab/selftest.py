"""Desk-scale self checks: cross-evaluator agreement, oracles and statistical suites."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, stats

from . import energy, sampler, transport
from .core import Configuration, ModelParams, RandomStream, Window
from .generators import sample_stationarized_lattice
from .io import _plain
from .rigidity import shift_estimator, uniformity_test


@dataclass
class Check:
    name: str
    passed: bool
    observed: object
    expected: object
    elapsed: float = 0.0

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.observed = _plain(self.observed)

    def to_dict(self):
        return asdict(self)


def default_evaluators():
    return {
        "pairwise": energy.hamiltonian_pairwise,
        "baxter": energy.hamiltonian_baxter,
        "fourier": energy.hamiltonian_fourier,
    }


def _random_neutral(rng, n):
    return Configuration(rng.uniform(-0.5 * n, 0.5 * n, n))


def check_hand_values(ev) -> Check:
    one = Configuration([0.0])
    two = Configuration([-0.5, 0.5])
    p1, p2 = ModelParams(-1, 1, 1), ModelParams(-1, 1, 2)
    obs = [ev[k](c, p) for k in ("pairwise", "baxter", "fourier") for c, p in ((one, p1), (two, p2))]
    exp = [1 / 12, 1 / 6] * 3
    ok = all(abs(o - e) < 1e-12 for o, e in zip(obs[:4], exp[:4])) and all(abs(o - e) < 1e-6 for o, e in zip(obs[4:], exp[4:]))
    return Check("hand_values", ok, obs, exp)


def check_fourier_constant() -> Check:
    c = energy.riesz_fourier_constant(-1.0)
    return Check("riesz_constant_coulomb", abs(c - 2.0) < 1e-12, c, 2.0)


def check_energy_agreement(ev, count: int, n_max: int, seed: int = 1) -> Check:
    rng = np.random.default_rng(seed)
    worst_pair = worst_four = 0.0
    for _ in range(count):
        n = int(rng.integers(1, n_max + 1))
        cfg, p = _random_neutral(rng, n), ModelParams(-1, 1, n)
        b = ev["baxter"](cfg, p)
        worst_pair = max(worst_pair, abs(ev["pairwise"](cfg, p) - b) / b)
        worst_four = max(worst_four, abs(ev["fourier"](cfg, p) - b) / b)
    ok = worst_pair < 1e-10 and worst_four < 1e-6
    return Check("energy_agreement", ok, {"pairwise": worst_pair, "fourier": worst_four},
                 {"pairwise": "<1e-10", "fourier": "<1e-6"})


def brute_force_cost(a, b, p) -> float:
    """Minimum of sum |a_i - b_sigma(i)|^p over all permutations."""
    perms = np.array(list(itertools.permutations(range(len(b)))))
    return float(np.min(np.sum(np.abs(np.asarray(a)[None, :] - np.asarray(b)[perms]) ** p, axis=1)))


def check_matching(count: int, seed: int = 2) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 9))
        p = float(rng.choice([1.0, 2.0]))
        a, b = rng.normal(size=n), rng.normal(size=n)
        mono = transport.monotone_match_points(a, b, p).cost
        brute = brute_force_cost(a, b, p)
        worst = max(worst, mono - brute)
    return Check("monotone_matching", worst < 1e-12, worst, "<1e-12")


def check_exact_n1(seed: int = 3) -> Check:
    params = ModelParams(-1, 1, 1)
    batch, _ = sampler.exact_coulomb_batch(params, 2000, RandomStream(seed))
    x = np.array([c.positions[0] for c in batch.configs])
    sd = math.sqrt(0.5)
    law = stats.truncnorm(-0.5 / sd, 0.5 / sd, scale=sd)
    p = stats.kstest(x, law.cdf).pvalue
    return Check("exact_sampler_n1", p > 1e-3, p, ">1e-3")


def check_shift_uniformity(seed: int = 4) -> Check:
    st = RandomStream(seed)
    u = [shift_estimator(sample_stationarized_lattice(Window(0, 50), st.substream(i)), 0.0, 20).u
         for i in range(300)]
    rep = uniformity_test(u)
    return Check("shift_uniformity_lattice", rep.passes(0.001), [rep.fourier_pvalue, rep.ks_pvalue], ">1e-3")


def check_exact_vs_mcmc(samples: int, seed: int = 5) -> Check:
    params = ModelParams(-1, 1, 8)
    ex, _ = sampler.exact_coulomb_batch(params, samples, RandomStream(seed))
    mc, _ = sampler.mcmc_sample(params, 2 * samples, 500, 2, RandomStream(seed + 1))
    p = stats.ks_2samp(ex.energies, mc.energies).pvalue
    return Check("exact_vs_mcmc", p > 0.01, p, ">0.01")


def check_log_partition_n1(seed: int = 6) -> Check:
    params = ModelParams(-1, 1, 1)
    est = sampler.estimate_log_partition(params, samples_per_point=2000, stream=RandomStream(seed))
    oracle = -1 / 12 + math.log(integrate.quad(lambda x: math.exp(-x * x), -0.5, 0.5)[0])
    ok = abs(est.value - oracle) <= 2 * est.error
    return Check("log_partition_n1", ok, [est.value, est.error], oracle)


def run_selftest(level: str = "fast", evaluators: dict | None = None) -> list:
    """Run the suites; ``evaluators`` replaces the energy functions (for mutation checks)."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    ev = {**default_evaluators(), **(evaluators or {})}
    jobs = [
        lambda: check_hand_values(ev),
        check_fourier_constant,
        lambda: check_energy_agreement(ev, 20 if level == "fast" else 100, 20 if level == "fast" else 50),
        lambda: check_matching(50 if level == "fast" else 200),
        check_exact_n1,
        check_shift_uniformity,
    ]
    if level == "full":
        jobs += [lambda: check_exact_vs_mcmc(10_000), check_log_partition_n1]
    out = []
    for job in jobs:
        t0 = time.perf_counter()
        try:
            chk = job()
        except Exception as exc:  # a crashing suite is a failed suite
            chk = Check(getattr(job, "__name__", "check"), False, repr(exc), "no error")
        chk.elapsed = time.perf_counter() - t0
        out.append(chk)
    return out
