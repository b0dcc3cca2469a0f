"""Finite discrete distributions on the reals: max-divergence,
conditioning, the infinity-Wasserstein distance (fast quantile method
plus a brute-force oracle), and the adversary-robustness bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

MERGE_TOL = 1e-12   # atom values closer than this are the same atom
PROB_SUM_TOL = 1e-10


@dataclass(frozen=True)
class DiscreteDistribution:
    """Atoms (value, prob) in canonical form: values strictly increasing,
    duplicates merged, probabilities summing to 1."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("values and probs must be equal-length 1-d arrays")
        if np.any(p < -PROB_SUM_TOL):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum():g}, expected 1")
        order = np.argsort(v, kind="stable")
        v, p = v[order], p[order]
        # merge atoms within tolerance
        mv, mp = [v[0]], [p[0]]
        for val, pr in zip(v[1:], p[1:]):
            if val - mv[-1] <= MERGE_TOL:
                mp[-1] += pr
            else:
                mv.append(val)
                mp.append(pr)
        v = np.array(mv)
        p = np.clip(np.array(mp), 0.0, None)
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_weights(cls, values, weights) -> "DiscreteDistribution":
        """Build from non-negative weights, normalizing to total 1."""
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0:
            raise ValueError("total weight must be positive")
        return cls(values, w / total)

    def to_pairs(self) -> list[list[float]]:
        return [[float(v), float(p)] for v, p in zip(self.values, self.probs)]

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms with strictly positive probability."""
        mask = self.probs > 0
        return self.values[mask], self.probs[mask]

    def same_as(self, other: "DiscreteDistribution", tol: float = 1e-12) -> bool:
        v1, p1 = self.support()
        v2, p2 = other.support()
        return (v1.size == v2.size and np.allclose(v1, v2, atol=tol, rtol=0)
                and np.allclose(p1, p2, atol=tol, rtol=0))


def max_divergence(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """sup over support(p) of log(p(x)/q(x)); +inf where q has no mass.

    Atoms with p(x) = 0 contribute nothing (the 0/0 segments are skipped).
    """
    best = 0.0
    qmap = {float(v): pr for v, pr in zip(q.values, q.probs)}
    for v, pr in zip(p.values, p.probs):
        if pr <= 0:
            continue
        qm = 0.0
        for qv, qp in qmap.items():
            if abs(qv - v) <= MERGE_TOL:
                qm = qp
                break
        if qm <= 0:
            return float("inf")
        best = max(best, float(np.log(pr / qm)))
    return best


def symmetric_max_divergence(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    return max(max_divergence(p, q), max_divergence(q, p))


def condition_renormalize(p: DiscreteDistribution, keep) -> DiscreteDistribution:
    """Zero out atoms not in the kept index set (1-based atom positions)
    and renormalize the rest."""
    keep0 = {int(i) - 1 for i in keep}
    if not keep0 or min(keep0) < 0 or max(keep0) >= p.values.size:
        raise ValueError("keep indices out of range")
    mask = np.zeros(p.values.size, dtype=bool)
    mask[sorted(keep0)] = True
    kept_mass = p.probs[mask].sum()
    if kept_mass <= 0:
        raise ValueError("kept mass is zero")
    new_probs = np.where(mask, p.probs, 0.0) / kept_mass
    return DiscreteDistribution(p.values, new_probs)


def robustness_delta(theta_tilde_conditionals, theta_conditionals_per_candidate,
                     epsilon: float | None = None):
    """Belief-robustness bound.

    theta_tilde_conditionals: one DiscreteDistribution per secret, under the
    adversary's belief. theta_conditionals_per_candidate: for each candidate
    theta in the class, the matching per-secret list. Returns (delta, eps')
    where delta = inf over candidates of the max over secrets of the
    symmetric max-divergence, and eps' = epsilon + 2*delta (None if epsilon
    is not supplied). Support mismatch gives delta = +inf, not an error.
    """
    tilde = list(theta_tilde_conditionals)
    best = float("inf")
    for cand in theta_conditionals_per_candidate:
        cand = list(cand)
        if len(cand) != len(tilde):
            raise ValueError("secret indexing mismatch")
        worst = 0.0
        for t, c in zip(tilde, cand):
            worst = max(worst, symmetric_max_divergence(t, c))
            if worst == float("inf"):
                break
        best = min(best, worst)
    eps_prime = None if epsilon is None else epsilon + 2 * best
    return best, eps_prime


def w_infinity(mu: DiscreteDistribution, nu: DiscreteDistribution) -> float:
    """Infinity-Wasserstein distance on the line via the monotone
    (quantile) coupling: max |x - y| over aligned CDF segments."""
    xv, xp = mu.support()
    yv, yp = nu.support()
    i = j = 0
    rem_x = xp[0]
    rem_y = yp[0]
    best = 0.0
    while True:
        best = max(best, abs(xv[i] - yv[j]))
        step = min(rem_x, rem_y)
        rem_x -= step
        rem_y -= step
        if rem_x <= 1e-15:
            i += 1
            if i >= xv.size:
                break
            rem_x = xp[i]
        if rem_y <= 1e-15:
            j += 1
            if j >= yv.size:
                break
            rem_y = yp[j]
    return best


def w_infinity_oracle(mu: DiscreteDistribution, nu: DiscreteDistribution) -> float:
    """Independent brute-force verifier of w_infinity.

    Smallest w among the pairwise |x - y| such that a transport using only
    pairs within distance w is feasible. Feasibility is Hall's condition
    over all subsets of mu's support. Supports of size <= 12 only.
    """
    xv, xp = mu.support()
    yv, yp = nu.support()
    if xv.size > 12 or yv.size > 12:
        raise ValueError("oracle supports at most 12 atoms per side")

    dists = sorted({abs(float(x) - float(y)) for x in xv for y in yv})

    def feasible(w: float) -> bool:
        # Hall: every subset S of supply atoms must fit in N_w(S)
        within = np.abs(xv[:, None] - yv[None, :]) <= w + 1e-12
        for r in range(1, xv.size + 1):
            for S in combinations(range(xv.size), r):
                reach = within[list(S)].any(axis=0)
                if xp[list(S)].sum() > yp[reach].sum() + 1e-9:
                    return False
        return True

    # feasibility is monotone in w; binary search the candidate list
    lo, hi = 0, len(dists) - 1
    if not feasible(dists[hi]):
        raise ValueError("no feasible transport (unequal masses?)")
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(dists[mid]):
            hi = mid
        else:
            lo = mid + 1
    return dists[lo]


def mixture(dists, weights) -> DiscreteDistribution:
    """Mixture of distributions with the given weights."""
    w = np.asarray(weights, dtype=float)
    values = np.concatenate([d.values for d in dists])
    probs = np.concatenate([wi * d.probs for wi, d in zip(w, dists)])
    return DiscreteDistribution.from_weights(values, probs)
