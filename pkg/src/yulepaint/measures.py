"""Exact calculus on laws with an atom at zero.

The basic object is the two-parameter family

    p * delta_0 + (1 - p) * Exp(rate)

which is closed under the model's evolution.  Its self-convolution lives in
the slightly larger family ``AtomGammaMixture`` (atom + Exp + Gamma(2)
components), which in turn is closed under the shift map
``nu -> law of (Z - s)_+``.  Everything here is closed-form; these formulas
are the ground truth used by the ODE engine and by all Monte Carlo checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

#: default tolerance for closed-form identities
ABS_TOL = 1e-12


@dataclass(frozen=True)
class ExpMixture:
    """Law p*delta_0 + (1-p)*Exp(rate).

    rate == 0 is accepted at construction for the degenerate pure-atom
    boundary family, but only ``cdf`` knows what to do with it; the other
    operations raise DomainError to avoid 0/0.
    """

    p: float
    rate: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DomainError(f"atom weight must lie in [0,1], got {self.p}")
        if self.rate < 0.0 or not np.isfinite(self.rate):
            raise DomainError(f"rate must be finite and >= 0, got {self.rate}")

    def mean(self) -> float:
        self._require_positive_rate()
        return (1.0 - self.p) / self.rate

    def _require_positive_rate(self):
        if self.rate == 0.0:
            raise DomainError("operation undefined for the rate=0 boundary family")


@dataclass(frozen=True)
class AtomGammaMixture:
    """atom_weight*delta_0 + sum_i w_i * Gamma(shape_i, rate_i), shapes in {1,2}."""

    atom_weight: float
    components: tuple  # of (weight, shape, rate)

    def __post_init__(self):
        if not (-ABS_TOL <= self.atom_weight <= 1.0 + ABS_TOL):
            raise DomainError("atom weight outside [0,1]")
        total = self.atom_weight
        for w, shape, rate in self.components:
            if shape not in (1, 2):
                raise DomainError(f"unsupported shape {shape}")
            if w < -ABS_TOL or rate <= 0.0:
                raise DomainError("component weights must be >= 0 with rate > 0")
            total += w
        if abs(total - 1.0) > 1e-10:
            raise DomainError(f"total mass {total} != 1")

    def mean(self) -> float:
        return sum(w * shape / rate for w, shape, rate in self.components)


@dataclass(frozen=True)
class EmpiricalSample:
    """Sorted non-negative sample with provenance metadata."""

    values: np.ndarray
    seed: Optional[int] = None
    generator_id: Optional[str] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise DomainError("sample must be one-dimensional")
        if v.size and v[0] < 0.0:
            # cheapest check given sortedness
            raise DomainError("sample values must be non-negative")
        if np.any(np.diff(v) < 0.0):
            raise DomainError("sample values must be sorted ascending")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values, seed=None, generator_id=None):
        return cls(np.sort(np.asarray(values, dtype=float)), seed, generator_id)

    @property
    def count(self) -> int:
        return self.values.size


# ---------------------------------------------------------------------------
# operations on ExpMixture


def cdf(m: ExpMixture, x):
    """CDF of the mixture at x >= 0 (scalar or array).

    For the rate=0 boundary family this returns p for every finite x: the
    continuous part carries no mass on compacts.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise DomainError("cdf argument must be >= 0")
    out = m.p + (1.0 - m.p) * -np.expm1(-m.rate * x)
    return out if out.ndim else float(out)


def quantile(m: ExpMixture, u):
    """Right-continuous inverse of the CDF, u in [0, 1)."""
    m._require_positive_rate()
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u >= 1.0):
        raise DomainError("quantile argument must lie in [0,1)")
    with np.errstate(divide="ignore"):
        tail = np.where(u < m.p, 0.0, -np.log((1.0 - u) / (1.0 - m.p)) / m.rate
                        if m.p < 1.0 else 0.0)
    out = np.maximum(tail, 0.0)
    return out if out.ndim else float(out)


def sample(m: ExpMixture, rng: np.random.Generator, size=None):
    """Inverse-transform sampling; exact zeros for the atom."""
    if m.p == 1.0:
        return np.zeros(size) if size is not None else 0.0
    m._require_positive_rate()
    u = rng.random(size)
    out = np.where(u < m.p, 0.0, rng.exponential(1.0 / m.rate, size=np.shape(u)))
    return out if size is not None else float(out)


def convolve_self(m: ExpMixture) -> AtomGammaMixture:
    """Law of X + X' with X, X' i.i.d. with law m."""
    if m.p == 1.0:
        return AtomGammaMixture(1.0, ())
    m._require_positive_rate()
    p, lam = m.p, m.rate
    comps = []
    if p > 0.0:
        comps.append((2.0 * p * (1.0 - p), 1, lam))
    comps.append(((1.0 - p) ** 2, 2, lam))
    return AtomGammaMixture(p * p, tuple(comps))


# ---------------------------------------------------------------------------
# operations on AtomGammaMixture


def _gamma_cdf(shape, rate, x):
    # closed forms for the only shapes we carry
    z = rate * x
    if shape == 1:
        return -np.expm1(-z)
    return -np.expm1(-z) - z * np.exp(-z)


def gamma_mixture_cdf(g: AtomGammaMixture, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise DomainError("cdf argument must be >= 0")
    out = np.full(x.shape, g.atom_weight)
    for w, shape, rate in g.components:
        out = out + w * _gamma_cdf(shape, rate, x)
    return out if out.ndim else float(out)


def shift_cdf(g: AtomGammaMixture, s: float, x):
    """CDF of the shifted law (Z - s)_+ at x, i.e. CDF_g(x + s)."""
    if s < 0.0:
        raise DomainError("shift must be >= 0")
    return gamma_mixture_cdf(g, np.asarray(x, dtype=float) + s)


def shift(g: AtomGammaMixture, s: float) -> AtomGammaMixture:
    """Shifted law as an AtomGammaMixture again (the family is closed).

    (Gamma(2,lam) - s)_+ redistributes as an enlarged atom plus
    e^{-lam*s}*(s*lam*Exp(lam) + Gamma(2,lam)); Exp components just shrink.
    """
    if s < 0.0:
        raise DomainError("shift must be >= 0")
    if s == 0.0:
        return g
    atom = g.atom_weight
    comps = {}

    def add(w, shape, rate):
        if w > 0.0:
            key = (shape, rate)
            comps[key] = comps.get(key, 0.0) + w

    for w, shape, rate in g.components:
        z = rate * s
        if shape == 1:
            atom += w * -np.expm1(-z)
            add(w * np.exp(-z), 1, rate)
        else:
            atom += w * (-np.expm1(-z) - z * np.exp(-z))
            add(w * z * np.exp(-z), 1, rate)
            add(w * np.exp(-z), 2, rate)
    comp_tuple = tuple((w, shape, rate) for (shape, rate), w in sorted(comps.items()))
    return AtomGammaMixture(min(atom, 1.0), comp_tuple)


# ---------------------------------------------------------------------------
# goodness of fit


def ks_distance(s: EmpiricalSample, m: ExpMixture) -> float:
    """sup-norm distance between the empirical CDF and cdf(m).

    The atom at 0 is handled exactly: the model CDF jumps from 0 to
    p at x=0, and for x>0 the comparison uses both one-sided limits of the
    empirical step function.
    """
    v = s.values
    n = v.size
    if n == 0:
        raise DomainError("empty sample")
    # collapse tie blocks: the empirical CDF at a repeated value is the
    # block's upper index, its left limit the block's lower index
    uniq, first = np.unique(v, return_index=True)
    last = np.append(first[1:], n)
    fv = np.atleast_1d(np.asarray(cdf(m, uniq), dtype=float))
    hi = last / n
    lo = first / n
    # left limit of the model CDF: 0 at the atom, continuous elsewhere
    f_left = np.where(uniq == 0.0, 0.0, fv)
    return float(max(np.max(np.abs(hi - fv)), np.max(np.abs(f_left - lo))))


def ks_two_sample(a: EmpiricalSample, b: EmpiricalSample) -> float:
    """Two-sample sup-distance between empirical CDFs (ties allowed)."""
    if a.count == 0 or b.count == 0:
        raise DomainError("empty sample")
    grid = np.concatenate([a.values, b.values])
    fa = np.searchsorted(a.values, grid, side="right") / a.count
    fb = np.searchsorted(b.values, grid, side="right") / b.count
    return float(np.max(np.abs(fa - fb)))


def ks_critical_value(n: int, m: Optional[int] = None, level: float = 0.01) -> float:
    """Asymptotic KS critical value; two-sample when m is given."""
    c = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63}[level]
    if m is None:
        return c / np.sqrt(n)
    return c * np.sqrt((n + m) / (n * m))
