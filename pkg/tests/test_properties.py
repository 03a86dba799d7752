"""Property-based checks of the algebraic invariants.

Each closed-form invariant gets at least 200 generated cases; Monte Carlo
invariants are covered by seeded runs in the per-module test files (a
property harness cannot re-randomize a statistical tolerance honestly).
"""
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from yulepaint import dynamics, measures, painting, redtree, rngtools
from yulepaint.measures import EmpiricalSample, ExpMixture

ALG = settings(max_examples=200, deadline=None)

atoms = st.floats(0.0, 0.999)
rates = st.floats(0.01, 50.0)
probs = st.floats(0.0, 0.9999)


@ALG
@given(p=atoms, rate=rates, u=st.floats(0.0, 0.999999))
def test_quantile_cdf_galois(p, rate, u):
    m = ExpMixture(p, rate)
    x = measures.quantile(m, u)
    assert measures.cdf(m, x) >= u - 1e-12
    assert measures.quantile(m, measures.cdf(m, min(x, 1e6))) <= x + 1e-9


@ALG
@given(p=atoms, rate=rates)
def test_convolution_mean_doubles(p, rate):
    m = ExpMixture(p, rate)
    g = measures.convolve_self(m)
    assert abs(g.mean() - 2.0 * m.mean()) <= 1e-12 * max(1.0, m.mean())


@ALG
@given(p=atoms, rate=rates, s=st.floats(0.0, 20.0))
def test_shift_mass_conserved(p, rate, s):
    g = measures.convolve_self(ExpMixture(p, rate))
    h = measures.shift(g, s)
    total = h.atom_weight + sum(w for w, _, _ in h.components)
    assert abs(total - 1.0) < 1e-10


@ALG
@given(p=atoms, rate=rates, s=st.floats(0.0, 5.0),
       x=st.floats(0.001, 10.0))
def test_shift_agrees_with_cdf_composition(p, rate, s, x):
    g = measures.convolve_self(ExpMixture(p, rate))
    h = measures.shift(g, s)
    assert measures.gamma_mixture_cdf(h, x) == pytest.approx(
        measures.shift_cdf(g, s, x), abs=1e-10)


@ALG
@given(p=probs, lam=st.floats(0.01, math.e - 0.01))
def test_phase_and_free_energy_consistent(p, lam):
    pt = dynamics.PhasePoint(p, lam)
    phase = dynamics.classify_phase(pt)
    F = dynamics.free_energy_quadrature(pt).value
    if phase is dynamics.Phase.PINNED:
        assert F > 0.0
    else:
        assert F == 0.0


@settings(max_examples=50, deadline=None)
@given(p=probs, lam=st.floats(0.05, 3.0), t=st.floats(0.5, 10.0))
def test_flow_preserves_h_and_phase(p, lam, t):
    pt = dynamics.PhasePoint(p, lam)
    phase0 = dynamics.classify_phase(pt)
    assume(phase0 in (dynamics.Phase.PINNED, dynamics.Phase.UNPINNED))
    traj = dynamics.integrate_dynamics(pt, t, grid=np.linspace(0.0, t, 33))
    assert float(np.max(np.abs(traj.h_error))) < 1e-10
    assert np.all(np.diff(traj.lam) <= 1e-12)
    for pk, lk in zip(traj.p[::8], traj.lam[::8]):
        if lk < 1e-12 or pk >= 1.0:
            continue
        assert dynamics.classify_phase(dynamics.PhasePoint(pk, lk)) is phase0


@ALG
@given(weights=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6),
       support=st.lists(st.integers(0, 12), min_size=1, max_size=6,
                        unique=True))
def test_discrete_iterate_preserves_mass_and_bounds_mean(weights, support):
    k = min(len(weights), len(support))
    w = np.array(weights[:k])
    pmf = painting.DiscretePmf.from_dict(
        {s: float(x / w.sum()) for s, x in zip(sorted(support[:k]), w)})
    nxt = painting.discrete_parking_iterate(pmf, 1)
    assert abs(nxt.probs.sum() - 1.0) < 1e-9
    # (x + y - 1)_+ <= x + y: the mean at most doubles
    assert nxt.mean() <= 2.0 * pmf.mean() + 1e-9
    assert nxt.mean() >= max(2.0 * pmf.mean() - 1.0, 0.0) - 1e-9


@ALG
@given(seed=st.integers(0, 2 ** 32 - 1),
       sizes=st.tuples(st.integers(1, 400), st.integers(1, 400),
                       st.integers(1, 400)))
def test_replica_summary_merge_associative(seed, sizes):
    rng = np.random.default_rng(seed)
    chunks = [rng.exponential(size=s) for s in sizes]
    summaries = [painting.ReplicaSummary.from_values(c) for c in chunks]
    left = summaries[0].merge(summaries[1]).merge(summaries[2])
    right = summaries[0].merge(summaries[1].merge(summaries[2]))
    assert left.count == right.count
    assert left.s1 == pytest.approx(right.s1, rel=1e-12)
    assert left.s4 == pytest.approx(right.s4, rel=1e-12)
    assert np.array_equal(left.bin_counts, right.bin_counts)


@ALG
@given(r=st.floats(0.0, 0.999), x=st.floats(0.0, 20.0))
def test_first_branch_survival_range_and_monotonicity(r, x):
    v = redtree.first_branching_survival(r, x)
    assert 0.0 <= v <= 1.0
    # survival decreases in the time fraction and in the starting mass
    assert redtree.first_branching_survival(min(r + 1e-3, 0.9995), x) <= v + 1e-12
    assert redtree.first_branching_survival(r, x + 1.0) <= v + 1e-12


@ALG
@given(c=st.floats(0.0, 50.0), x=st.floats(0.0, 10.0))
def test_limit_laplace_is_a_laplace_transform(c, x):
    v = redtree.limit_laplace(c, x)
    assert 0.0 <= v <= 1.0
    assert redtree.limit_laplace(c + 0.1, x) <= v + 1e-12


@ALG
@given(seed=st.integers(0, 2 ** 16), r=st.integers(0, 64))
def test_replica_streams_reproducible_and_distinct(seed, r):
    a = rngtools.replica_stream(seed, r).random(4)
    b = rngtools.replica_stream(seed, r).random(4)
    assert np.array_equal(a, b)
    c = rngtools.replica_stream(seed, r + 1).random(4)
    assert not np.array_equal(a, c)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 16), t=st.floats(0.1, 2.5))
def test_painting_conservation_property(seed, t):
    rng = rngtools.master_stream(seed)
    tree = painting.generate_yule(t, rng)
    painted = painting.paint_tree(tree, ExpMixture(0.3, 1.0), rng)
    leaf_sum = painted.values_at_birth[tree.is_leaf].sum()
    internal_len = float(np.sum((tree.death - tree.birth)[~tree.is_leaf]))
    assert painted.root_value <= leaf_sum + 1e-10
    assert painted.root_value >= max(leaf_sum - internal_len, 0.0) - 1e-10


@ALG
@given(data=st.lists(st.floats(0.0, 100.0), min_size=1, max_size=100))
def test_ks_distance_bounds(data):
    s = EmpiricalSample.from_values(np.array(data))
    d = measures.ks_distance(s, ExpMixture(0.2, 1.0))
    assert 0.0 <= d <= 1.0
