"""The conditioned critical tree and its scaling-limit machinery.

A branch alive at time s with mass m splits at rate rho(t - s) * m, where
rho(s) = (1 - p(s)) lambda(s) comes from a Trajectory; mass grows at slope 1
along branches and is split uniformly at branching events.  After rescaling
time by t, the process converges to the limit tree with rate 2 m / (1-s)^2,
whose leaf count N and leaf mass M (over t^2) converge to (gamma1, gamma2)
times the squared-integral functional eta of a 4-dimensional Bessel bridge.

Simulation strategy: single trees use exact thinning with a per-branch
piecewise envelope; replica ensembles invert the integrated hazard against
tabulated integrals of rho, which vectorizes across every active branch of
every replica at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import Trajectory
from .errors import DomainError, NumericsError, ResourceError

NODE_BUDGET = 20_000_000


# ---------------------------------------------------------------------------
# tree containers


@dataclass(frozen=True, eq=False)
class RedTree:
    """Growth-fragmentation tree; arrays in creation order, Ulam-Harris labels."""

    height: float
    root_mass: float
    labels: tuple
    birth: np.ndarray
    death: np.ndarray          # split time, or height for leaves
    mass_at_birth: np.ndarray
    parent: np.ndarray
    is_leaf: np.ndarray

    @property
    def n_nodes(self):
        return self.birth.size

    def mass_at_death(self):
        return self.mass_at_birth + (self.death - self.birth)

    @property
    def first_branch_time(self) -> float:
        """Root split time, or the height if the root never split."""
        return float(self.death[0])


@dataclass(frozen=True)
class LeafStats:
    n_leaves: int
    total_mass: float


def leaf_stats(tree: RedTree) -> LeafStats:
    leaf = tree.is_leaf
    masses = tree.mass_at_birth[leaf] + (tree.height - tree.birth[leaf])
    return LeafStats(int(np.count_nonzero(leaf)), float(np.sum(masses)))


# ---------------------------------------------------------------------------
# rho access and tabulated hazard integrals


def rho_at(traj: Trajectory, s):
    """(1 - p(s)) * lambda(s), interpolated from the trajectory."""
    return traj.rho_at(s)


class _RhoTable:
    """Cumulative integrals of rho and u*rho on a fine uniform grid.

    For a branch born at s0 with mass m0 inside a tree of height t, the
    split hazard accumulated by time s is, with u = t - time,

        Lambda(s) = (m0 + u0) [C0(u0) - C0(u1)] - [C1(u0) - C1(u1)],

    u0 = t - s0, u1 = t - s.  The tables make Lambda and its inverse cheap
    and fully vectorized; the grid is fine enough that the piecewise-linear
    model of C0, C1 is exact to ~(du)^2 in hazard units.
    """

    def __init__(self, traj: Trajectory, t: float, n_grid: int = 200_001):
        if t > traj.t_max * (1 + 1e-12):
            raise DomainError("trajectory horizon shorter than tree height")
        self.t = float(t)
        self.u = np.linspace(0.0, t, n_grid)
        rho = np.asarray(traj.rho_at(self.u), dtype=float)
        if not np.all(np.isfinite(rho)):
            raise NumericsError("non-finite rho on the hazard grid")
        self.rho = rho
        du = self.u[1] - self.u[0]
        self.c0 = np.concatenate([[0.0], np.cumsum((rho[1:] + rho[:-1]) * 0.5 * du)])
        urho = self.u * rho
        self.c1 = np.concatenate([[0.0], np.cumsum((urho[1:] + urho[:-1]) * 0.5 * du)])
        self.du = du

    def interp(self, u):
        return np.interp(u, self.u, self.c0), np.interp(u, self.u, self.c1)

    def invert(self, a, u0, target):
        """Solve a*C0(u1) - C1(u1) = target for u1 in [0, u0], vectorized.

        ``a`` is the branch constant m0 + u0; the left side is increasing in
        u1, so bisection on grid indices plus a linear solve inside the
        final cell is exact for the tabulated piecewise-linear model.
        """
        lo = np.zeros(a.size, dtype=np.int64)
        hi = np.minimum(np.ceil(u0 / self.du).astype(np.int64), self.u.size - 1)
        for _ in range(int(math.ceil(math.log2(self.u.size))) + 1):
            mid = (lo + hi) // 2
            val = a * self.c0[mid] - self.c1[mid]
            below = val < target
            lo = np.where(below, np.maximum(mid, lo), lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1):
                break
        # linear interpolation inside cell [lo, lo+1]
        ua = self.u[lo]
        f_a = a * self.c0[lo] - self.c1[lo]
        slope = (a * (self.c0[lo + 1] - self.c0[lo])
                 - (self.c1[lo + 1] - self.c1[lo])) / self.du
        with np.errstate(divide="ignore", invalid="ignore"):
            u1 = ua + np.where(slope > 0.0, (target - f_a) / slope, 0.0)
        return np.minimum(u1, u0)


# ---------------------------------------------------------------------------
# single-tree simulation by thinning


def simulate_red_tree(x0: float, t: float, traj: Trajectory,
                      rng: np.random.Generator,
                      node_budget: int = NODE_BUDGET) -> RedTree:
    """One exact tree by thinning with piecewise-constant envelopes.

    The proposal rate on a branch is refreshed on subintervals of the
    branch's lifetime: within [a, b) it is max(rho over the window) times
    the branch mass at b, which keeps the acceptance ratio bounded away
    from zero even though rho varies by orders of magnitude over [0, t].
    """
    if x0 < 0.0:
        raise DomainError("initial mass must be >= 0")
    if t <= 0.0:
        raise DomainError("height must be > 0")
    if t > traj.t_max * (1 + 1e-12):
        raise DomainError("trajectory horizon shorter than tree height")

    # envelope partition of [0, t] and per-segment sup of rho(t - s)
    n_seg = max(16, int(2 * t))
    seg = np.linspace(0.0, t, n_seg + 1)
    fine = np.linspace(0.0, t, 20 * n_seg + 1)
    rho_fine = np.asarray(traj.rho_at(t - fine), dtype=float)
    if not np.all(np.isfinite(rho_fine)):
        raise DomainError("non-finite rho bound over the tree window")
    seg_sup = np.array([rho_fine[(fine >= a - 1e-12) & (fine <= b + 1e-12)].max()
                        for a, b in zip(seg[:-1], seg[1:])])

    labels = [()]
    birth = [0.0]
    mass0 = [float(x0)]
    parent = [-1]
    death = []
    is_leaf = []
    head = 0
    while head < len(labels):
        s0, m0 = birth[head], mass0[head]
        s = s0
        split_at = None
        k = min(np.searchsorted(seg, s, side="right") - 1, n_seg - 1)
        while k < n_seg:
            b_end = seg[k + 1]
            bound = seg_sup[k] * (m0 + (b_end - s0))
            if bound <= 0.0:
                s = b_end
                k += 1
                continue
            while True:
                s = s + rng.exponential(1.0 / bound)
                if s >= b_end:
                    s = b_end
                    break
                rate = float(traj.rho_at(t - s)) * (m0 + (s - s0))
                if rng.random() * bound <= rate:
                    split_at = s
                    break
            if split_at is not None or s >= t:
                break
            k += 1
        if split_at is None:
            death.append(t)
            is_leaf.append(True)
        else:
            death.append(split_at)
            is_leaf.append(False)
            m_split = m0 + (split_at - s0)
            v = rng.random()
            lab = labels[head]
            for frac, k_child in ((v, 1), (1.0 - v, 2)):
                labels.append(lab + (k_child,))
                birth.append(split_at)
                mass0.append(frac * m_split)
                parent.append(head)
            if len(labels) > node_budget:
                raise ResourceError(f"red tree exceeded node budget {node_budget}")
        head += 1
    return RedTree(float(t), float(x0), tuple(labels), np.array(birth),
                   np.array(death), np.array(mass0),
                   np.array(parent, dtype=np.int64), np.array(is_leaf, dtype=bool))


# ---------------------------------------------------------------------------
# ensemble simulation via hazard inversion


def leaf_statistics_ensemble(x0: float, t: float, traj: Trajectory,
                             replicas: int, rng: np.random.Generator,
                             node_budget: int = NODE_BUDGET,
                             chunk: int = 500):
    """(N, M, first branch time) for many independent trees.

    Split times are drawn by inverting the integrated hazard against the
    tabulated rho integrals; each generation of branches across a chunk of
    replicas is processed in one vectorized pass.  Agrees in law with
    simulate_red_tree (the thinning path), which is used to cross-check it.
    """
    if x0 < 0.0 or t <= 0.0:
        raise DomainError("need x0 >= 0 and t > 0")
    table = _RhoTable(traj, t)
    n_out = np.zeros(replicas, dtype=np.int64)
    m_out = np.zeros(replicas)
    first_out = np.full(replicas, t)
    done = 0
    while done < replicas:
        n_rep = min(chunk, replicas - done)
        rep = np.arange(done, done + n_rep)
        s0 = np.zeros(n_rep)
        m0 = np.full(n_rep, float(x0))
        generation = 0
        batch_nodes = 0
        while rep.size:
            batch_nodes += rep.size
            if batch_nodes > node_budget:
                raise ResourceError(
                    f"replica batch exceeded node budget {node_budget}; "
                    "reduce the chunk size")
            u0 = t - s0
            a = m0 + u0
            c0_u0, c1_u0 = table.interp(u0)
            g_u0 = a * c0_u0 - c1_u0
            target = g_u0 - rng.exponential(size=rep.size)
            leaf = target <= 0.0
            if np.any(leaf):
                idx = rep[leaf]
                np.add.at(n_out, idx, 1)
                np.add.at(m_out, idx, m0[leaf] + u0[leaf])
            alive = ~leaf
            if not np.any(alive):
                break
            u1 = table.invert(a[alive], u0[alive], target[alive])
            s_split = t - u1
            if generation == 0:
                first_out[rep[alive]] = s_split
            m_split = m0[alive] + (s_split - s0[alive])
            v = rng.random(s_split.size)
            rep = np.repeat(rep[alive], 2)
            s0 = np.repeat(s_split, 2)
            m_parent = np.repeat(m_split, 2)
            frac = np.empty(2 * v.size)
            frac[0::2] = v
            frac[1::2] = 1.0 - v
            m0 = frac * m_parent
            generation += 1
        done += n_rep
    return n_out, m_out, first_out


# ---------------------------------------------------------------------------
# the limit tree (rate 2 m / (1-s)^2)


def _limit_hazard(r, s0, m0):
    """Integrated split hazard of the limit process from s0 to r."""
    a = m0 - s0 + 1.0
    w0 = 1.0 - s0
    wr = 1.0 - r
    return 2.0 * (a * (1.0 / wr - 1.0 / w0) + np.log(wr / w0))


def first_branching_survival(r: float, x: float) -> float:
    """P(no split of the limit root with mass x before relative time r)."""
    if not (0.0 <= r < 1.0):
        raise DomainError("r must lie in [0, 1)")
    if x < 0.0:
        raise DomainError("x must be >= 0")
    return math.exp(-(2.0 * (x + 1.0) * r / (1.0 - r) + 2.0 * math.log(1.0 - r)))


def _invert_limit_hazard(e, s0, m0, cutoff):
    """Solve hazard(r) = e for r in (s0, cutoff]; nan when the branch outlives.

    Safeguarded Newton in r with a bisection fallback; the hazard is smooth,
    increasing and convex up to the 1/(1-r) blow-up, so Newton from the
    bisection midpoint converges fast.  Tolerance 1e-12 in hazard units.
    """
    if _limit_hazard(cutoff, s0, m0) < e:
        return math.nan
    lo, hi = s0, cutoff
    r = 0.5 * (lo + hi)
    for _ in range(200):
        f = _limit_hazard(r, s0, m0) - e
        if abs(f) < 1e-12:
            return r
        if f > 0.0:
            hi = r
        else:
            lo = r
        df = 2.0 * (m0 + (r - s0)) / (1.0 - r) ** 2
        step = r - f / df
        r = step if lo < step < hi else 0.5 * (lo + hi)
    return r


def simulate_limit_tree(x: float, eps: float, rng: np.random.Generator,
                        node_budget: int = NODE_BUDGET) -> RedTree:
    """Exact limit tree on [0, 1 - eps] via closed-form hazard inversion."""
    if not (0.0 < eps < 1.0):
        raise DomainError("cutoff eps must lie in (0, 1)")
    if x < 0.0:
        raise DomainError("initial mass must be >= 0")
    cutoff = 1.0 - eps
    labels = [()]
    birth = [0.0]
    mass0 = [float(x)]
    parent = [-1]
    death = []
    is_leaf = []
    head = 0
    while head < len(labels):
        s0, m0 = birth[head], mass0[head]
        r = _invert_limit_hazard(rng.exponential(), s0, m0, cutoff)
        if math.isnan(r):
            death.append(cutoff)
            is_leaf.append(True)
        else:
            death.append(r)
            is_leaf.append(False)
            m_split = m0 + (r - s0)
            v = rng.random()
            lab = labels[head]
            for frac, k_child in ((v, 1), (1.0 - v, 2)):
                labels.append(lab + (k_child,))
                birth.append(r)
                mass0.append(frac * m_split)
                parent.append(head)
            if len(labels) > node_budget:
                raise ResourceError("limit tree exceeded node budget")
        head += 1
    return RedTree(cutoff, float(x), tuple(labels), np.array(birth),
                   np.array(death), np.array(mass0),
                   np.array(parent, dtype=np.int64), np.array(is_leaf, dtype=bool))


def limit_first_split_sample(x: float, replicas: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Root split times of the limit process, vectorized over replicas.

    Inverts the same closed-form hazard as simulate_limit_tree with no
    cutoff: the rate blow-up at s -> 1 makes every root split before 1.
    """
    if x < 0.0:
        raise DomainError("x must be >= 0")
    e = rng.exponential(size=replicas)
    # solve 2[(x+1) r/(1-r) + log(1-r)] = e by monotone bisection + Newton
    lo = np.zeros(replicas)
    hi = np.full(replicas, 1.0 - 1e-15)
    r = 1.0 - 1.0 / (1.0 + e)  # rough starting guess
    for _ in range(100):
        f = 2.0 * ((x + 1.0) * r / (1.0 - r) + np.log1p(-r)) - e
        pos = f > 0.0
        hi = np.where(pos, r, hi)
        lo = np.where(pos, lo, r)
        # derivative of the hazard: rate of the root at time r with mass x + r
        df = 2.0 * (x + r) / (1.0 - r) ** 2
        step = r - f / df
        inside = (step > lo) & (step < hi)
        r = np.where(inside, step, 0.5 * (lo + hi))
        if np.max(np.abs(f)) < 1e-12:
            break
    return r


# ---------------------------------------------------------------------------
# Laplace-transform ODE machinery


@dataclass(frozen=True, eq=False)
class ThetaSolution:
    t: np.ndarray
    theta: np.ndarray
    theta_prime: np.ndarray
    eps1: float
    eps2: float
    trajectory: Trajectory

    @property
    def final(self):
        return float(self.theta[-1]), float(self.theta_prime[-1])


def theta_solve(traj: Trajectory, eps1: float, eps2: float, t: float,
                rtol: float = 1e-10, atol: float = 1e-12) -> ThetaSolution:
    """Solve Theta'' = rho(s)(1 - e^{-Theta}), Theta(0)=eps1, Theta'(0)=eps2."""
    if eps1 < 0.0 or eps2 < 0.0:
        raise DomainError("initial data must be >= 0")
    if t > traj.t_max * (1 + 1e-12):
        raise DomainError("trajectory horizon shorter than requested time")

    def rhs(s, y):
        return (y[1], float(traj.rho_at(min(s, traj.t_max))) * -math.expm1(-y[0]))

    sol = solve_ivp(rhs, (0.0, t), (eps1, eps2), method="RK45",
                    rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise NumericsError(f"Theta integration failed: {sol.message}")
    grid = np.linspace(0.0, t, 513)
    th, thp = sol.sol(grid)
    return ThetaSolution(grid, th, thp, eps1, eps2, traj)


def laplace_phi(traj: Trajectory, t: float, x: float, eps1: float, eps2: float
                ) -> float:
    """E_x[exp(-eps1*N_t - eps2*M_t)] = exp(-(Theta(t) + x Theta'(t)))."""
    th, thp = theta_solve(traj, eps1, eps2, t).final
    return math.exp(-(th + x * thp))


@dataclass(frozen=True)
class GammaConstants:
    gamma1: float
    gamma2: float
    horizon: float
    plateau_error: float


def linearized_gammas(traj: Trajectory, horizon: float = 1e4,
                      plateau_tol: float = 0.01) -> GammaConstants:
    """Growth constants of a'' = rho a from initial data (1,0) and (0,1).

    gamma_i = a(T)/T^2, cross-checked against a'(T)/(2T); disagreement
    beyond plateau_tol means the quadratic regime was not reached.
    """
    if horizon > traj.t_max * (1 + 1e-12):
        raise DomainError("trajectory horizon shorter than gamma horizon")

    def rhs(s, y):
        r = float(traj.rho_at(min(s, traj.t_max)))
        return (y[1], r * y[0])

    out = []
    worst = 0.0
    for y0 in ((1.0, 0.0), (0.0, 1.0)):
        sol = solve_ivp(rhs, (0.0, horizon), y0, method="RK45",
                        rtol=1e-10, atol=1e-12)
        if not sol.success:
            raise NumericsError(f"linearized integration failed: {sol.message}")
        aT, apT = sol.y[0, -1], sol.y[1, -1]
        g_a = aT / horizon ** 2
        g_ap = apT / (2.0 * horizon)
        rel = abs(g_a - g_ap) / g_a
        worst = max(worst, rel)
        if rel > plateau_tol:
            raise NumericsError("gamma plateau not reached", achieved=rel)
        out.append(g_a)
    return GammaConstants(out[0], out[1], float(horizon), worst)


def limit_laplace(c: float, x: float = 0.0) -> float:
    """E[exp(-c*eta)] shifted for initial mass x, in closed form.

    3c/sinh^2(sqrt(3c)) * exp(-2x (sqrt(3c) coth(sqrt(3c)) - 1)), with a
    series fallback for tiny c where the closed form loses digits.
    """
    if c < 0.0 or x < 0.0:
        raise DomainError("need c >= 0 and x >= 0")
    if c == 0.0:
        return 1.0
    if c < 1e-4:
        # s^2/sinh^2 s = 1 - c + 3c^2/5 + O(c^3), s*coth(s) - 1 = c - c^2/5
        base = 1.0 - c + 0.6 * c * c
        expo = c - 0.2 * c * c
        return base * math.exp(-2.0 * x * expo)
    s = math.sqrt(3.0 * c)
    return (3.0 * c / math.sinh(s) ** 2
            * math.exp(-2.0 * x * (s / math.tanh(s) - 1.0)))


# ---------------------------------------------------------------------------
# Bessel-bridge functional


@dataclass(frozen=True, eq=False)
class BridgeSample:
    s: np.ndarray
    r: np.ndarray
    x: float
    eta: float


def _bridge_batch(replicas: int, k: int, endpoint: float,
                  rng: np.random.Generator) -> np.ndarray:
    """eta values for a batch of 4-d bridges on a k-grid (vectorized)."""
    h = 1.0 / k
    s = np.linspace(0.0, 1.0, k + 1)
    r2 = np.zeros((replicas, k + 1))
    for comp in range(4):
        incr = rng.standard_normal((replicas, k)) * math.sqrt(h)
        w = np.concatenate([np.zeros((replicas, 1)), np.cumsum(incr, axis=1)], axis=1)
        end = endpoint if comp == 0 else 0.0
        b = w - np.outer(w[:, -1], s) + end * s
        r2 += b * b
    return 1.5 * np.trapezoid(r2, dx=h, axis=1)


def bessel_eta_sample(x: float, k: int, rng: np.random.Generator) -> BridgeSample:
    """One 4-dimensional Bessel bridge from 0 to 2*sqrt(x) on a k-grid.

    Built from four scalar Brownian bridges (exact in law at the grid
    points); the trapezoid rule for eta carries an O(1/k^2) bias.
    """
    if k < 100:
        raise DomainError("grid size must be >= 100")
    if x < 0.0:
        raise DomainError("x must be >= 0")
    h = 1.0 / k
    s = np.linspace(0.0, 1.0, k + 1)
    r2 = np.zeros(k + 1)
    endpoint = 2.0 * math.sqrt(x)
    for comp in range(4):
        incr = rng.standard_normal(k) * math.sqrt(h)
        w = np.concatenate([[0.0], np.cumsum(incr)])
        end = endpoint if comp == 0 else 0.0
        b = w - w[-1] * s + end * s
        r2 += b * b
    eta = 1.5 * float(np.trapezoid(r2, dx=h))
    return BridgeSample(s, np.sqrt(r2), float(x), eta)


def bessel_eta_ensemble(x: float, k: int, replicas: int,
                        rng: np.random.Generator, chunk: int = 1000) -> np.ndarray:
    """eta for many independent bridges, chunked to bound memory."""
    if k < 100:
        raise DomainError("grid size must be >= 100")
    out = np.empty(replicas)
    endpoint = 2.0 * math.sqrt(x)
    done = 0
    while done < replicas:
        m = min(chunk, replicas - done)
        out[done:done + m] = _bridge_batch(m, k, endpoint, rng)
        done += m
    return out


def leaf_limit_check(traj: Trajectory, t: float, replicas: int,
                     theta1: float, theta2: float, x: float,
                     rng: np.random.Generator,
                     gammas: Optional[GammaConstants] = None) -> dict:
    """Monte Carlo vs closed-form limit law for the rescaled leaf statistics.

    Simulates trees started from mass x*t, forms the empirical Laplace
    transform of (N/t^2, M/t^2) at (theta1, theta2) and compares with
    limit_laplace at c = gamma1*theta1 + gamma2*theta2.  Finite-t bias of
    relative order log(t)/t is expected on top of the MC error.
    """
    if theta1 < 0.0 or theta2 < 0.0:
        raise DomainError("theta arguments must be >= 0")
    if gammas is None:
        gammas = linearized_gammas(traj)
    n, m, _ = leaf_statistics_ensemble(x * t, t, traj, replicas, rng)
    z = np.exp(-(theta1 * n + theta2 * m) / t ** 2)
    mc = float(z.mean())
    sigma = float(z.std(ddof=1) / math.sqrt(replicas))
    c = gammas.gamma1 * theta1 + gammas.gamma2 * theta2
    exact = limit_laplace(c, x)
    return {"mc": mc, "mc_sigma": sigma, "limit": exact, "c": c,
            "gap": mc - exact, "relative_gap": mc / exact - 1.0,
            "gamma1": gammas.gamma1, "gamma2": gammas.gamma2,
            "replicas": replicas, "t": t}
