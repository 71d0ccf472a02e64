import math

import numpy as np
import pytest
from scipy import stats

from rieszlab.core import Configuration, RandomStream, Window, count
from rieszlab.generators import (MassLaw, PerturbationLaw, make_generator, mass_law_from_spec, midpoint_tile_sampler,
                                 perturbed_lattice_with_truth, point_tile_sampler, sample_counterexample,
                                 sample_perturbed_lattice, sample_poisson, sample_stationarized_lattice, stationarize,
                                 uniform_point_tile_sampler)
from rieszlab.rigidity import uniformity_test
from rieszlab.transport import perturbation_extract


def test_poisson_mean_variance():
    st = RandomStream(11)
    n = np.array([sample_poisson(Window(0, 100), 1.0, st).mass for _ in range(1000)])
    se_mean = 10 / math.sqrt(1000)
    assert abs(n.mean() - 100) < 3 * se_mean
    assert abs(n.var(ddof=1) - 100) < 3 * 100 * math.sqrt(2 / 999)


def test_poisson_empty_and_independence():
    st = RandomStream(12)
    assert sample_poisson(Window(0, 10), 0.0, st).mass == 0
    pairs = np.array([[count(c, Window(0, 10)), count(c, Window(10, 20))]
                      for c in (sample_poisson(Window(0, 20), 1.0, st) for _ in range(1000))])
    assert abs(np.corrcoef(pairs.T)[0, 1]) < 0.1


def test_stationarized_lattice():
    st = RandomStream(13)
    c = sample_stationarized_lattice(Window(0, 10), st)
    assert c.mass == 10
    np.testing.assert_allclose(np.diff(c.positions), 1.0)
    fr = np.mod(c.positions, 1.0)
    np.testing.assert_allclose(fr, fr[0])
    u = [np.mod(sample_stationarized_lattice(Window(0, 10), st).positions[0], 1.0) for _ in range(1000)]
    assert stats.kstest(u, "uniform").pvalue > 0.01
    assert uniformity_test(u).passes(0.01)


def test_constant_zero_equals_lattice():
    w = Window(-3.5, 40.0)
    a = sample_perturbed_lattice(w, PerturbationLaw("constant", 0.0), RandomStream(5))
    b = sample_stationarized_lattice(w, RandomStream(5))
    np.testing.assert_array_equal(a.positions, b.positions)


def test_perturbed_lattice_count():
    st = RandomStream(14)
    law = PerturbationLaw("gaussian", 0.25)
    n = np.array([sample_perturbed_lattice(Window(0, 1000), law, st).mass for _ in range(300)])
    assert abs(n.mean() - 1000) <= 3 * n.std(ddof=1) / math.sqrt(n.size) + 1e-9


def test_folded_normal_mean_recovered():
    law = PerturbationLaw("gaussian", 0.25)
    cfg, u, sites, p = perturbed_lattice_with_truth(Window(0, 10_000), law, RandomStream(15))
    _, est = perturbation_extract(cfg, u)
    assert abs(np.mean(np.abs(est)) - law.mean_abs) / law.mean_abs < 0.05


def test_perturbation_law_moments_and_validation():
    assert PerturbationLaw("uniform", 0.4).mean_abs == pytest.approx(0.2)
    assert PerturbationLaw("laplace", 0.3).mean_abs == pytest.approx(0.3)
    with pytest.raises(ValueError):
        PerturbationLaw("gaussian", 0.0)
    with pytest.raises(ValueError):
        PerturbationLaw("cauchy", 1.0)


def test_margin_stability():
    law = PerturbationLaw("laplace", 0.5)
    w = Window(0, 30)
    a = [count(sample_perturbed_lattice(w, law, RandomStream(16, (i,))), Window(0, 2)) for i in range(800)]
    b = [count(sample_perturbed_lattice(w, law, RandomStream(17, (i,)), margin=40.0), Window(0, 2))
         for i in range(800)]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_counterexample():
    st = RandomStream(18)
    one = sample_counterexample(Window(0, 50), MassLaw.dirac(1), RandomStream(3))
    assert one.mass == 50 and np.allclose(np.diff(one.positions), 1.0)
    law = MassLaw.zipf(2.0, 100)
    for _ in range(20):
        c = sample_counterexample(Window(0, 10_000), law, st)
        assert abs(c.mass / 10_000 - 1) <= 0.02
        assert len(set(c.multiplicities.tolist())) == 1
        k = int(c.multiplicities[0])
        if len(c) > 1:
            np.testing.assert_allclose(np.diff(c.positions), k)


def test_mass_law():
    law = MassLaw.zipf(2.0, 3)
    w = np.array([1, 1 / 4, 1 / 9])
    np.testing.assert_allclose(law.probabilities, w / w.sum())
    assert law.mean_half_mass() == pytest.approx(np.dot(w / w.sum(), [1, 2, 3]) / 2)
    assert mass_law_from_spec("dirac3", 10).probabilities == (0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        MassLaw((0.5, 0.2))


def test_stationarize_point_tiles_form_scaled_lattice():
    c = stationarize(point_tile_sampler(3.0), 3.0, Window(0, 60), RandomStream(19))
    assert c.mass == 20
    np.testing.assert_allclose(np.diff(c.positions), 3.0)


def test_stationarize_one_point_per_tile_bounds():
    for i in range(200):
        L = 10 + 0.37 * i
        c = stationarize(uniform_point_tile_sampler(1.0), 1.0, Window(0, L), RandomStream(20, (i,)))
        assert math.floor(L) - 1 <= c.mass <= math.ceil(L) + 1


def test_stationarize_is_stationary():
    tile = midpoint_tile_sampler(4)
    a, b = [], []
    for i in range(500):
        c = stationarize(lambda st: Configuration(st.uniform(0, 4, 4), window=Window(0, 4)), 4.0,
                         Window(0, 40), RandomStream(21, (i,)))
        a.append(count(c, Window(1.0, 6.5)))
        b.append(count(c, Window(22.3, 27.8)))
    assert stats.ks_2samp(a, b).pvalue > 0.01
    assert tile(None).mass == 4


def test_stationarize_rejects_bad_tiles():
    with pytest.raises(ValueError):
        stationarize(point_tile_sampler(2.0), 3.0, Window(0, 10), RandomStream(1))
    with pytest.raises(ValueError):
        stationarize(lambda st: Configuration([0.0]), 1.0, Window(0, 10), RandomStream(1))


def test_reproducible_and_named_generators():
    for name, kv in (("poisson", {"intensity": "2"}), ("lattice", {}),
                     ("perturbed-lattice", {"law": "uniform", "param": "0.3"}),
                     ("counterexample", {"nmax": "10"})):
        gen = make_generator(name, kv)
        assert gen(Window(0, 30), RandomStream(9)) == gen(Window(0, 30), RandomStream(9))
    with pytest.raises(ValueError):
        make_generator("ginibre", {})
    with pytest.raises(ValueError):
        make_generator("poisson", {"bogus": "1"})
