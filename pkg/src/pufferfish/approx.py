"""Mixing-parameter machinery and the approximate Markov quilt mechanism:
stationary distributions, time reversal, eigengaps, closed-form influence
upper bounds, MQMApprox, and the fast middle-node search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (BinaryInterval, DistributionClass, FiniteSet, LaplaceSource,
                   LipschitzQuery, MatrixSetAllInits, MixingParams, NoisePlan,
                   TransitionMatrix)
from .quilt import MarkovQuilt, minimal_quilt_set, score


def jacobi_eigenvalues(S: np.ndarray, tol: float = 1e-12,
                       max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by the cyclic Jacobi method.

    Rotations are applied until every off-diagonal entry is below tol.
    """
    A = np.array(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if np.max(np.abs(A - A.T)) > 1e-9:
        raise ValueError("matrix must be symmetric")
    n = A.shape[0]
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(A ** 2) - np.sum(np.diag(A) ** 2))
        if off < tol:
            return np.sort(np.diag(A))
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < tol / (n * n):
                    continue
                # classic 2x2 rotation zeroing A[p, q]
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta ** 2 + 1)) \
                    if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t ** 2 + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
    raise RuntimeError("Jacobi eigensolver did not converge")


def _rows(P) -> np.ndarray:
    return P.rows if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)


def _check_mixing(P: np.ndarray) -> None:
    k = P.shape[0]
    M = np.eye(k)
    for _ in range(k * k):
        M = M @ P
        if np.all(M > 0):
            return
    raise ValueError("chain does not mix (reducible or periodic)")


def stationary_distribution(P) -> np.ndarray:
    """The unique stationary distribution of an irreducible aperiodic P,
    by direct linear solve (one balance equation replaced by the
    normalization constraint)."""
    P = _rows(P)
    _check_mixing(P)
    k = P.shape[0]
    A = P.T - np.eye(k)
    A[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    if np.max(np.abs(pi @ P - pi)) > 1e-10:
        raise ValueError("stationary solve failed residual check")
    return pi


def time_reversal(P, pi) -> TransitionMatrix:
    """P*(x, y) = pi(y) P(y, x) / pi(x)."""
    P = _rows(P)
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("stationary distribution must be strictly positive")
    if np.max(np.abs(pi @ P - pi)) > 1e-9:
        raise ValueError("pi is not stationary for P")
    rev = (P.T * pi[None, :]) / pi[:, None]
    return TransitionMatrix(rev)


def is_reversible(P, pi, tol: float = 1e-10) -> bool:
    P = _rows(P)
    pi = np.asarray(pi, dtype=float)
    return bool(np.max(np.abs(pi[:, None] * P - (pi[:, None] * P).T)) <= tol)


def eigengap(P, mode: str = "pp_star") -> float:
    """Mixing eigengap of the chain.

    pp_star: 1 - max{|lambda| < 1} over eigenvalues of P P*, computed by
    symmetrizing with the stationary similarity transform and running the
    Jacobi eigensolver. reversible: 2 * (1 - second-largest |lambda| of P),
    valid only under detailed balance.
    """
    P = _rows(P)
    pi = stationary_distribution(P)
    d = np.sqrt(pi)
    if mode == "pp_star":
        M = P @ time_reversal(P, pi).rows
        S = (d[:, None] * M) / d[None, :]
    elif mode == "reversible":
        if not is_reversible(P, pi):
            raise ValueError("reversible mode requires detailed balance")
        S = (d[:, None] * P) / d[None, :]
    else:
        raise ValueError(f"unknown eigengap mode {mode!r}")
    S = (S + S.T) / 2
    evs = jacobi_eigenvalues(S)
    mags = np.sort(np.abs(evs))[::-1]
    if abs(mags[0] - 1.0) > 1e-9:
        raise ValueError("leading eigenvalue is not 1")
    lam2 = mags[1] if mags.size > 1 else 0.0
    if mode == "pp_star":
        return float(1.0 - lam2)
    return float(2.0 * (1.0 - lam2))


@dataclass(frozen=True)
class MixingSummary:
    """Worst-case mixing parameters of a distribution class."""

    pi_min: float
    g: float
    k: int
    T: int
    reversible: bool
    mode: str
    pis: tuple = ()

    def to_dict(self) -> dict:
        return {"pi_min": self.pi_min, "g": self.g, "k": self.k, "T": self.T,
                "reversible": self.reversible, "mode": self.mode,
                "pis": [list(p) for p in self.pis]}


def _binary_chain_params(p0: float, p1: float) -> tuple[float, float]:
    """Closed forms for the two-state chain [[p0, 1-p0], [1-p1, p1]]:
    stationary pi and the second eigenvalue p0 + p1 - 1."""
    denom = 2.0 - p0 - p1
    pi = np.array([(1.0 - p1) / denom, (1.0 - p0) / denom])
    return float(pi.min()), p0 + p1 - 1.0


def mixing_summary(cls: DistributionClass, mode: str = "pp_star") -> MixingSummary:
    """pi_min and g minimized over the class.

    The default gap is the PP* one even for reversible chains; the factor-2
    reversible gap is opt-in via mode="reversible".
    """
    if isinstance(cls, MixingParams):
        return MixingSummary(pi_min=cls.pi_min, g=cls.g, k=cls.k, T=cls.T,
                             reversible=cls.reversible,
                             mode="reversible" if cls.reversible else "pp_star")
    if isinstance(cls, BinaryInterval):
        # closed forms; both pi_min and the gap are monotone along the grid
        # edges so evaluating analytic extremes plus the grid is exact
        pts = np.unique(np.concatenate([cls.grid(), [cls.alpha, cls.beta]]))
        pi_min, g = np.inf, np.inf
        for p0 in pts:
            for p1 in pts:
                pm, lam2 = _binary_chain_params(p0, p1)
                pi_min = min(pi_min, pm)
                gv = 2.0 * (1.0 - abs(lam2)) if mode == "reversible" \
                    else 1.0 - lam2 * lam2
                g = min(g, gv)
        return MixingSummary(pi_min=float(pi_min), g=float(g), k=2, T=cls.T,
                             reversible=True, mode=mode)
    if isinstance(cls, FiniteSet):
        mats = [c.P for c in cls.chains]
        k, T = cls.k, cls.T
    elif isinstance(cls, MatrixSetAllInits):
        mats = list(cls.matrices)
        k, T = cls.k, cls.T
    else:
        raise ValueError("unsupported class for mixing summary")
    pis = []
    pi_min, g = np.inf, np.inf
    all_rev = True
    for P in mats:
        pi = stationary_distribution(P)
        pis.append(tuple(pi))
        pi_min = min(pi_min, float(pi.min()))
        g = min(g, eigengap(P, mode=mode))
        all_rev = all_rev and is_reversible(P, pi)
    return MixingSummary(pi_min=float(pi_min), g=float(g), k=k, T=T,
                         reversible=all_rev, mode=mode, pis=tuple(pis))


def _delta(t: int, summary: MixingSummary) -> float:
    return float(np.exp(-t * summary.g / 2.0) / summary.pi_min)


def _threshold(summary: MixingSummary) -> float:
    return 2.0 * np.log(1.0 / summary.pi_min) / summary.g


def influence_bound(summary: MixingSummary, quilt: MarkovQuilt) -> float:
    """Closed-form upper bound on the max-influence of a quilt.

    Pair(a, b): log((1+D_b)/(1-D_b)) + 2 log((1+D_a)/(1-D_a)) with
    D_t = exp(-t g / 2) / pi_min; Left(a) keeps only the 2 log term;
    Right(b) only the single log term; Trivial is 0. Extents below the
    validity threshold 2 log(1/pi_min)/g make the bound unusable (+inf).
    """
    if quilt.shape == "trivial":
        return 0.0
    thr = _threshold(summary)

    def term(t: int) -> float:
        if t < thr:
            return np.inf
        d = _delta(t, summary)
        if d >= 1.0:
            return np.inf
        return float(np.log((1.0 + d) / (1.0 - d)))

    if quilt.shape == "right":
        return term(quilt.b)
    if quilt.shape == "left":
        return 2.0 * term(quilt.a)
    return term(quilt.b) + 2.0 * term(quilt.a)


def a_star(summary: MixingSummary, epsilon: float) -> int:
    """The half-width threshold enabling the T-independent middle-node
    search: 2 * ceil(log(((e^{eps/6}+1)/(e^{eps/6}-1)) / pi_min) / g)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.exp(epsilon / 6.0)
    inner = np.log(((x + 1.0) / (x - 1.0)) / summary.pi_min)
    return int(2 * np.ceil(inner / summary.g))


def _approx_sigma_node(summary: MixingSummary, i: int, T: int, ell: int,
                       epsilon: float):
    """Min score over the minimal quilt set at node i using the bound.
    Returns (sigma_i, quilt, influence) with the deterministic tie-break."""
    best = None
    for quilt in minimal_quilt_set(i, T, ell):
        e = influence_bound(summary, quilt)
        s = score(quilt, e, epsilon, T)
        rank = {"pair": 0, "left": 1, "right": 2, "trivial": 3}[quilt.shape]
        key = (s, quilt.n_size(T), rank, quilt.a, quilt.b)
        if best is None or key < best[0]:
            best = (key, quilt, e)
    return best[0][0], best[1], best[2]


def _approx_sigma_node_fast(summary: MixingSummary, i: int, T: int, ell: int,
                            epsilon: float):
    """Same result as _approx_sigma_node, vectorized over pair extents."""
    thr = _threshold(summary)
    t_lo = int(np.ceil(thr))
    if t_lo < thr:
        t_lo += 1

    def term_vec(ts: np.ndarray) -> np.ndarray:
        d = np.exp(-ts * summary.g / 2.0) / summary.pi_min
        out = np.where((ts >= thr) & (d < 1.0),
                       np.log((1.0 + d) / np.maximum(1.0 - d, 1e-300)), np.inf)
        return out

    cands = [((T / epsilon, T, 3, 0, 0), MarkovQuilt(i, "trivial"), 0.0)]
    amax = min(i - 1, ell - 2)
    bmax = min(T - i, ell - 2)
    if amax >= t_lo and bmax >= t_lo:
        a_vals = np.arange(t_lo, amax + 1)
        b_vals = np.arange(t_lo, bmax + 1)
        E = 2.0 * term_vec(a_vals)[:, None] + term_vec(b_vals)[None, :]
        N = a_vals[:, None] + b_vals[None, :] - 1
        valid = a_vals[:, None] + b_vals[None, :] < ell
        with np.errstate(invalid="ignore"):
            s = np.where(valid & (E < epsilon), N / (epsilon - E), np.inf)
        m = s.min()
        if np.isfinite(m):
            for idx in np.argwhere(s == m):
                a, b = int(a_vals[idx[0]]), int(b_vals[idx[1]])
                cands.append(((float(m), a + b - 1, 0, a, b),
                              MarkovQuilt(i, "pair", a, b), float(E[idx[0], idx[1]])))
    la = min(i - 1, ell - (T - i))
    if la >= t_lo:
        a_vals = np.arange(t_lo, la + 1)
        E = 2.0 * term_vec(a_vals)
        N = T - i + a_vals
        s = np.where(E < epsilon, N / (epsilon - E), np.inf)
        m = s.min()
        if np.isfinite(m):
            for idx in np.argwhere(s == m):
                a = int(a_vals[idx[0]])
                cands.append(((float(m), T - i + a, 1, a, 0),
                              MarkovQuilt(i, "left", a=a), float(E[idx[0]])))
    rb = min(T - i, ell - i + 1)
    if rb >= t_lo:
        b_vals = np.arange(t_lo, rb + 1)
        E = term_vec(b_vals)
        N = i + b_vals - 1
        s = np.where(E < epsilon, N / (epsilon - E), np.inf)
        m = s.min()
        if np.isfinite(m):
            for idx in np.argwhere(s == m):
                b = int(b_vals[idx[0]])
                cands.append(((float(m), i + b - 1, 2, 0, b),
                              MarkovQuilt(i, "right", b=b), float(E[idx[0]])))
    cands.sort(key=lambda c: c[0])
    best = cands[0]
    return best[0][0], best[1], best[2]


def mqm_approx_plan(cls: DistributionClass, F: LipschitzQuery, epsilon: float,
                    ell: int, mode: str = "pp_star") -> NoisePlan:
    """Scale computation for MQMApprox (no sampling)."""
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ValueError("epsilon must be positive and finite")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    summary = mixing_summary(cls, mode=mode)
    T = summary.T
    per_node = []
    sigma_max = 0.0
    for i in range(1, T + 1):
        s_i, quilt, e = _approx_sigma_node_fast(summary, i, T, ell, epsilon)
        per_node.append({"node": i, "sigma": s_i, "influence": e,
                         "quilt": quilt.to_dict()})
        sigma_max = max(sigma_max, s_i)
    return NoisePlan(
        mechanism_id="mqm_approx",
        epsilon=epsilon,
        sigma_max=sigma_max,
        lipschitz=F.L,
        query=F.name,
        per_node=per_node,
        notes={"T": T, "ell": ell, "mixing": summary.to_dict(),
               "a_star": a_star(summary, epsilon)},
    )


def mqm_approx(cls: DistributionClass, F: LipschitzQuery, data, epsilon: float,
               ell: int, src: LaplaceSource,
               mode: str = "pp_star") -> tuple[np.ndarray, NoisePlan]:
    """MQMApprox: per-node minimal score with the closed-form bound, then
    F(data) + L * sigma_max * Lap(1) per coordinate."""
    plan = mqm_approx_plan(cls, F, epsilon, ell, mode=mode)
    answer = F(data) + src.sample(plan.laplace_scale, F.dim)
    return answer, plan


def mqm_approx_fast_plan(cls: DistributionClass, F: LipschitzQuery,
                         epsilon: float, mode: str = "pp_star") -> NoisePlan:
    """Fast middle-node scale computation, T-independent when T >= 8 a*.
    Below the threshold, falls back to the full search with ell = 4 a*."""
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ValueError("epsilon must be positive and finite")
    summary = mixing_summary(cls, mode=mode)
    T = summary.T
    astar = a_star(summary, epsilon)
    ell = 4 * astar
    if T < 8 * astar:
        plan = mqm_approx_plan(cls, F, epsilon, ell, mode=mode)
        plan.mechanism_id = "mqm_approx_fast"
        plan.notes["fallback"] = "T below 8*a_star: full search used"
        return plan
    mid = int(np.ceil(T / 2))
    s_mid, quilt, e = _approx_sigma_node_fast(summary, mid, T, ell, epsilon)
    return NoisePlan(
        mechanism_id="mqm_approx_fast",
        epsilon=epsilon,
        sigma_max=s_mid,
        lipschitz=F.L,
        query=F.name,
        per_node=[{"node": mid, "sigma": s_mid, "influence": e,
                   "quilt": quilt.to_dict()}],
        notes={"T": T, "ell": ell, "mixing": summary.to_dict(),
               "a_star": astar, "middle_node_only": True},
    )


def mqm_approx_fast(cls: DistributionClass, F: LipschitzQuery, data,
                    epsilon: float, src: LaplaceSource,
                    mode: str = "pp_star") -> tuple[np.ndarray, NoisePlan]:
    """Fast MQMApprox with the middle-node search."""
    plan = mqm_approx_fast_plan(cls, F, epsilon, mode=mode)
    answer = F(data) + src.sample(plan.laplace_scale, F.dim)
    return answer, plan
