import math

import numpy as np
import pytest

from yulepaint import dynamics, measures, redtree, rngtools
from yulepaint.errors import DomainError
from yulepaint.redtree import (bessel_eta_ensemble, bessel_eta_sample,
                               first_branching_survival, laplace_phi,
                               leaf_statistics_ensemble, leaf_stats,
                               limit_first_split_sample, limit_laplace,
                               linearized_gammas, simulate_limit_tree,
                               simulate_red_tree, theta_solve)


def _check_mass_bookkeeping(tree):
    for i in range(tree.n_nodes):
        children = np.flatnonzero(tree.parent == i)
        if children.size == 0:
            continue
        assert children.size == 2
        md = tree.mass_at_birth[i] + (tree.death[i] - tree.birth[i])
        child_mass = tree.mass_at_birth[children].sum()
        assert child_mass == pytest.approx(md, rel=1e-12, abs=1e-12)


def test_red_tree_mass_bookkeeping(critical_traj_short):
    rng = rngtools.master_stream(11)
    for _ in range(10):
        tree = simulate_red_tree(1.0, 8.0, critical_traj_short, rng)
        _check_mass_bookkeeping(tree)
        assert tree.birth[0] == 0.0
        assert np.all(tree.death <= 8.0 + 1e-12)


def test_red_tree_vanishing_window_single_edge():
    # over a vanishing horizon the split probability is O(horizon): the
    # tree degenerates to a single edge with slope-1 mass growth
    traj = dynamics.integrate_dynamics(dynamics.PhasePoint(0.2, 0.8), 60.0)
    rng = rngtools.master_stream(12)
    tree = simulate_red_tree(1.0, 1e-6, traj, rng)
    assert tree.n_nodes == 1
    st = leaf_stats(tree)
    assert st.n_leaves == 1
    assert st.total_mass == pytest.approx(1.0 + 1e-6)


def test_uniform_split_symmetry(critical_traj_short):
    rng = rngtools.master_stream(13)
    fracs = []
    for _ in range(400):
        tree = simulate_red_tree(0.0, 6.0, critical_traj_short, rng)
        children = np.flatnonzero(tree.parent == 0)
        if children.size == 2:
            total = tree.mass_at_birth[children].sum()
            if total > 0:
                fracs.append(tree.mass_at_birth[children[0]] / total)
    fracs = np.sort(fracs)
    n = len(fracs)
    assert n > 100
    grid = np.arange(1, n + 1) / n
    ks = float(np.max(np.abs(grid - fracs)))
    assert ks < measures.ks_critical_value(n, level=0.01)


def test_first_branching_survival_closed_form():
    # independent expression: (1-r)^{-2} exp(-2(x+1) r/(1-r))
    for r in (0.0, 0.2, 0.5, 0.9):
        for x in (0.0, 1.0, 3.0):
            direct = (1.0 - r) ** -2 * math.exp(-2.0 * (x + 1.0) * r / (1.0 - r)) \
                if r < 1.0 else 0.0
            # survival as implemented must match to machine precision
            assert first_branching_survival(r, x) == pytest.approx(
                min(direct, 1.0), rel=1e-14)
    assert first_branching_survival(0.5, 0.0) == pytest.approx(
        4.0 * math.exp(-2.0), rel=1e-14)


def test_limit_first_split_sample_distribution():
    rng = rngtools.master_stream(14)
    r = limit_first_split_sample(0.0, 20000, rng)
    assert np.all((r > 0.0) & (r <= 1.0))
    target = 1.0 - 4.0 * math.exp(-2.0)
    frac = float(np.mean(r <= 0.5))
    se = math.sqrt(target * (1 - target) / r.size)
    assert abs(frac - target) < 3 * se


def test_limit_tree_structure():
    rng = rngtools.master_stream(15)
    tree = simulate_limit_tree(0.5, 0.05, rng)
    _check_mass_bookkeeping(tree)
    assert np.all(tree.death <= 0.95 + 1e-12)


def test_theta_monotone_in_data(critical_traj_short):
    a = theta_solve(critical_traj_short, 0.1, 0.05, 20.0)
    b = theta_solve(critical_traj_short, 0.2, 0.05, 20.0)
    c = theta_solve(critical_traj_short, 0.1, 0.10, 20.0)
    assert np.all(b.theta >= a.theta - 1e-12)
    assert np.all(c.theta >= a.theta - 1e-12)
    assert np.all(a.theta >= 0.0)
    with pytest.raises(DomainError):
        theta_solve(critical_traj_short, -0.1, 0.0, 5.0)


def test_laplace_phi_bounds(critical_traj_short):
    val = laplace_phi(critical_traj_short, 10.0, 0.0, 0.1, 0.05)
    assert 0.0 < val < 1.0
    # more mass means more leaves: transform decreases in x
    assert laplace_phi(critical_traj_short, 10.0, 2.0, 0.1, 0.05) < val


def test_gamma_constants(critical_traj_long):
    gam = linearized_gammas(critical_traj_long, 1e4)
    assert gam.gamma1 > 0 and gam.gamma2 > 0
    assert gam.plateau_error < 0.01
    # the two initial-data solutions share the leading growth constant
    assert gam.gamma1 == pytest.approx(gam.gamma2, rel=1e-6)


def test_limit_laplace_series_matches_closed_form():
    # continuity across the small-c switch
    for c in (9e-5, 1.1e-4):
        s = math.sqrt(3 * c)
        closed = 3 * c / math.sinh(s) ** 2
        assert limit_laplace(c, 0.0) == pytest.approx(closed, rel=1e-7)
    assert limit_laplace(0.0, 1.0) == 1.0
    assert limit_laplace(1.0, 0.0) == pytest.approx(
        3.0 / math.sinh(math.sqrt(3.0)) ** 2, rel=1e-14)


def test_bessel_bridge_endpoints():
    rng = rngtools.master_stream(16)
    bridge = bessel_eta_sample(0.7, 200, rng)
    assert bridge.r[0] == pytest.approx(0.0, abs=1e-12)
    assert bridge.r[-1] == pytest.approx(2.0 * math.sqrt(0.7), rel=1e-12)
    assert np.all(bridge.r >= 0.0)
    assert bridge.eta > 0.0


def test_bessel_eta_ensemble_moments():
    rng = rngtools.master_stream(17)
    eta = bessel_eta_ensemble(0.0, 400, 20000, rng)
    # E[eta] = 1 for the bridge functional from 0
    assert float(eta.mean()) == pytest.approx(1.0, abs=0.02)
    assert float(np.mean(np.exp(-eta))) == pytest.approx(
        3.0 / math.sinh(math.sqrt(3.0)) ** 2, abs=0.01)


def test_ensemble_mean_leaf_count(critical_traj_short):
    rng = rngtools.master_stream(18)
    n, m, fb = leaf_statistics_ensemble(0.0, 10.0, critical_traj_short, 400, rng)
    assert n.shape == (400,)
    assert np.all(n >= 1)
    assert np.all(m > 0)
    assert np.all((fb > 0) & (fb <= 10.0))
