"""Markov quilt machinery for chains: minimal quilt enumeration, exact
max-influence (with the all-initial-distributions variant), scores, the
exact mechanism, and the sequential-composition ledger.

Influence values are plain floats in nats; +inf marks an unusable quilt
(zero-denominator ratio somewhere) and never raises.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .core import (DistributionClass, BinaryInterval, FiniteSet, LaplaceSource,
                   LipschitzQuery, MarkovChainModel, MatrixSetAllInits,
                   NoisePlan, TransitionMatrix)

_SHAPE_RANK = {"pair": 0, "left": 1, "right": 2, "trivial": 3}


@dataclass(frozen=True)
class MarkovQuilt:
    """Quilt X_Q around protected node X_i (1-based labels).

    pair:    X_Q = {X_{i-a}, X_{i+b}},  |X_N| = a + b - 1
    left:    X_Q = {X_{i-a}},           |X_N| = T - i + a
    right:   X_Q = {X_{i+b}},           |X_N| = i + b - 1
    trivial: X_Q = {},                  |X_N| = T
    X_N always contains X_i itself.
    """

    i: int
    shape: str
    a: int = 0
    b: int = 0

    def __post_init__(self):
        if self.shape not in _SHAPE_RANK:
            raise ValueError(f"unknown quilt shape {self.shape!r}")
        if self.shape in ("pair", "left") and self.a < 1:
            raise ValueError("left extent a must be >= 1")
        if self.shape in ("pair", "right") and self.b < 1:
            raise ValueError("right extent b must be >= 1")
        if self.shape in ("pair", "left") and self.i - self.a < 1:
            raise ValueError("quilt node i-a below 1")

    def n_size(self, T: int) -> int:
        if self.shape == "pair":
            return self.a + self.b - 1
        if self.shape == "left":
            return T - self.i + self.a
        if self.shape == "right":
            return self.i + self.b - 1
        return T

    def nodes(self, T: int) -> tuple[int, ...]:
        """The quilt node labels X_Q."""
        if self.shape == "pair":
            return (self.i - self.a, self.i + self.b)
        if self.shape == "left":
            return (self.i - self.a,)
        if self.shape == "right":
            return (self.i + self.b,)
        return ()

    def label(self) -> str:
        ns = ", ".join(f"X_{n}" for n in self.nodes(10 ** 9))
        return "{" + ns + "}" if self.shape != "trivial" else "trivial"

    def to_dict(self) -> dict:
        return {"i": self.i, "shape": self.shape, "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d) -> "MarkovQuilt":
        return cls(i=int(d["i"]), shape=d["shape"], a=int(d.get("a", 0)),
                   b=int(d.get("b", 0)))


def minimal_quilt_set(i: int, T: int, ell: int) -> list[MarkovQuilt]:
    """The minimal candidate set S_{Q,i} for node i with extent bound ell.

    Pair quilts need a+b < ell and valid indices; one-sided quilts are
    admitted when their N-size is at most ell; the trivial quilt is always
    included.
    """
    if not (1 <= i <= T):
        raise ValueError("node index out of range")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    quilts: list[MarkovQuilt] = []
    for a in range(1, min(i - 1, ell - 2) + 1):
        for b in range(1, min(T - i, ell - 1 - a) + 1):
            quilts.append(MarkovQuilt(i, "pair", a, b))
    # left quilt {X_{i-a}}: N-size T-i+a must fit in ell
    for a in range(1, min(i - 1, ell - (T - i)) + 1):
        quilts.append(MarkovQuilt(i, "left", a=a))
    # right quilt {X_{i+b}}: N-size i+b-1 must fit in ell
    for b in range(1, min(T - i, ell - i + 1) + 1):
        quilts.append(MarkovQuilt(i, "right", b=b))
    quilts.append(MarkovQuilt(i, "trivial"))
    return quilts


def _log(a: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a)


def _backward_table(L: np.ndarray) -> np.ndarray:
    """out[x, x'] = max_y L[y, x] - L[y, x'] with 0/0 pairs skipped."""
    with np.errstate(invalid="ignore"):
        d = L[:, :, None] - L[:, None, :]
        d = np.where(np.isnan(d), -np.inf, d)
    return d.max(axis=0)


def _forward_table(L: np.ndarray) -> np.ndarray:
    """out[x, x'] = max_z L[x, z] - L[x', z] with 0/0 pairs skipped."""
    with np.errstate(invalid="ignore"):
        d = L[:, None, :] - L[None, :, :]
        d = np.where(np.isnan(d), -np.inf, d)
    return d.max(axis=2)


def _prior_table(log_m: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """out[x, x'] = log m(x') - log m(x); masked states give -inf rows/cols."""
    with np.errstate(invalid="ignore"):
        R = log_m[None, :] - log_m[:, None]
        R = np.where(np.isnan(R), -np.inf, R)
    if mask is not None:
        R = np.where(mask[:, None] & mask[None, :], R, -np.inf)
    return R


def _prior_table_all_inits(L_prev: np.ndarray) -> np.ndarray:
    """All-initials prior term: out[x, x'] = max_y log P^{i-1}(y, x') -
    log P^{i-1}(y, x). With P^0 = I this covers i = 1 (basis extremes)."""
    with np.errstate(invalid="ignore"):
        d = L_prev[:, None, :] - L_prev[:, :, None]
        d = np.where(np.isnan(d), -np.inf, d)
    return d.max(axis=0)


class _ChainTables:
    """Cached matrix powers and log-ratio tables for one transition matrix."""

    def __init__(self, P: np.ndarray, T: int, jmax: int, pow_max: int | None = None):
        self.P = P
        self.T = T
        self.jmax = jmax
        pow_max = max(jmax, pow_max if pow_max is not None else 0)
        pows = [np.eye(P.shape[0])]
        for _ in range(pow_max):
            nxt = pows[-1] @ P
            if np.max(np.abs(nxt.sum(axis=1) - 1.0)) > 1e-10:
                raise ValueError("row stochasticity lost under matrix powers")
            pows.append(nxt)
        self.pows = pows
        self.logs = [_log(p) for p in pows]
        # F[t][x,x'] and B[t][x,x'] for t = 1..jmax (index t-1)
        self.F = [_forward_table(self.logs[t]) for t in range(1, jmax + 1)]
        self.B = [_backward_table(self.logs[t]) for t in range(1, jmax + 1)]

    def marginal(self, q: np.ndarray, i: int) -> np.ndarray:
        """P(X_i = .) for 1-based node i."""
        return q @ self.pows[i - 1]


def _prior_for_node(tab: _ChainTables, i: int, q: np.ndarray | None) -> np.ndarray:
    if q is None:
        return _prior_table_all_inits(tab.logs[i - 1])
    m = tab.marginal(q, i)
    return _prior_table(_log(m), mask=m > 0)


def exact_max_influence(theta: MarkovChainModel, quilt: MarkovQuilt) -> float:
    """Exact max-influence of quilt X_Q on X_i under one theta."""
    return _influence(theta.P.rows, theta.T, quilt, q=theta.q)


def exact_influence_all_inits(P: TransitionMatrix, T: int, quilt: MarkovQuilt) -> float:
    """Exact max-influence over every initial distribution in the simplex."""
    rows = P.rows if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    return _influence(rows, T, quilt, q=None)


def _influence(P: np.ndarray, T: int, quilt: MarkovQuilt, q) -> float:
    if quilt.shape == "trivial":
        return 0.0
    i = quilt.i
    if not (1 <= i <= T) or (quilt.shape in ("pair", "right") and i + quilt.b > T):
        raise ValueError("quilt out of range for chain length")
    jmax = max(quilt.a, quilt.b, 0 if q is None and quilt.shape == "right" else i - 1)
    tab = _ChainTables(P, T, jmax)
    # admissible secrets at node i need positive marginal mass
    mask = None
    if q is not None:
        m = tab.marginal(np.asarray(q, dtype=float), i)
        mask = m > 0
    if quilt.shape == "right":
        Fb = tab.F[quilt.b - 1]
        if mask is not None:
            Fb = np.where(mask[:, None] & mask[None, :], Fb, -np.inf)
        e = Fb.max()
    else:
        R = _prior_for_node(tab, i, None if q is None else np.asarray(q, dtype=float))
        if quilt.shape == "left":
            with np.errstate(invalid="ignore"):
                s = R + tab.B[quilt.a - 1]
                s = np.where(np.isnan(s), -np.inf, s)
        else:
            with np.errstate(invalid="ignore"):
                s = R + tab.B[quilt.a - 1] + tab.F[quilt.b - 1]
                s = np.where(np.isnan(s), -np.inf, s)
        e = s.max()
    return max(0.0, float(e)) if np.isfinite(e) else (float("inf") if e > 0 else 0.0)


def brute_force_influence_nodes(theta: MarkovChainModel, i: int, quilt_nodes) -> float:
    """Max-influence by full enumeration of the joint: the worst
    max-divergence between the distributions of the quilt nodes given
    X_i = x vs X_i = x'. Oracle for small chains (k^T <= 10^6)."""
    k, T = theta.k, theta.T
    if k ** T > 10 ** 6:
        raise ValueError("chain too large for brute force")
    nodes = sorted(int(n) for n in quilt_nodes)
    if not nodes:
        return 0.0
    if i in nodes or not all(1 <= n <= T for n in nodes):
        raise ValueError("invalid quilt node set")
    # joint over all sequences
    P, q = theta.P.rows, theta.q
    cond: dict[int, dict[tuple, float]] = {x: {} for x in range(k)}
    marg = np.zeros(k)
    for seq in product(range(k), repeat=T):
        p = q[seq[0]]
        for t in range(1, T):
            p *= P[seq[t - 1], seq[t]]
            if p == 0.0:
                break
        if p == 0.0:
            continue
        x = seq[i - 1]
        key = tuple(seq[n - 1] for n in nodes)
        cond[x][key] = cond[x].get(key, 0.0) + p
        marg[x] += p
    e = 0.0
    for x in range(k):
        for xp in range(k):
            if x == xp or marg[x] <= 0 or marg[xp] <= 0:
                continue
            for key, pk in cond[x].items():
                qk = cond[xp].get(key, 0.0)
                if qk <= 0:
                    return float("inf")
                e = max(e, float(np.log((pk / marg[x]) / (qk / marg[xp]))))
    return e


def brute_force_max_influence(theta: MarkovChainModel, quilt: MarkovQuilt) -> float:
    """Enumeration oracle for exact_max_influence."""
    if quilt.shape == "trivial":
        return 0.0
    return brute_force_influence_nodes(theta, quilt.i, quilt.nodes(theta.T))


def score(quilt: MarkovQuilt, influence: float, epsilon: float, T: int) -> float:
    """sigma(X_Q) = |X_N| / (epsilon - e) if e < epsilon else +inf."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if influence == -np.inf:
        return 0.0
    if influence >= epsilon:
        return float("inf")
    return quilt.n_size(T) / (epsilon - influence)


def _node_candidates(tab: _ChainTables, i: int, T: int, ell: int,
                     q: np.ndarray | None, R_const: np.ndarray | None,
                     BF_sum: np.ndarray | None):
    """Influence arrays for node i over the minimal quilt set.

    Returns (pair E matrix indexed [a-1, b-1] with invalid slots +inf,
    left vector, right vector). BF_sum is the precomputed
    B[a] + F[b] tensor, flattened to (jmax, jmax, k*k).
    """
    R = R_const if R_const is not None else _prior_for_node(tab, i, q)
    Rf = R.ravel()
    amax = min(i - 1, ell - 2)
    bmax = min(T - i, ell - 2)
    if amax >= 1 and bmax >= 1:
        with np.errstate(invalid="ignore"):
            s = BF_sum[:amax, :bmax] + Rf
            s = np.where(np.isnan(s), -np.inf, s)
        E_pair = s.max(axis=2)
        a_idx = np.arange(1, amax + 1)[:, None]
        b_idx = np.arange(1, bmax + 1)[None, :]
        E_pair = np.where(a_idx + b_idx < ell, E_pair, np.inf)
    else:
        E_pair = np.full((0, 0), np.inf)
    la = min(i - 1, ell - (T - i))
    if la >= 1:
        with np.errstate(invalid="ignore"):
            s = np.stack([tab.B[a - 1] for a in range(1, la + 1)]) + R
            s = np.where(np.isnan(s), -np.inf, s)
        E_left = s.reshape(la, -1).max(axis=1)
    else:
        E_left = np.full(0, np.inf)
    rb = min(T - i, ell - i + 1)
    if rb >= 1:
        E_right = np.array([tab.F[b - 1].max() for b in range(1, rb + 1)])
    else:
        E_right = np.full(0, np.inf)
    return E_pair, E_left, E_right


def _score_arrays(E, N, epsilons):
    """Scores for an influence array E with N-sizes N, per epsilon."""
    out = []
    for eps in epsilons:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(np.maximum(E, 0.0) < eps,
                         N / (eps - np.maximum(E, 0.0)), np.inf)
        out.append(s)
    return out


def _best_quilt(i, T, ell, epsilon, E_pair, E_left, E_right):
    """Argmin-score quilt for one node with deterministic tie-breaking:
    lowest score, then smallest |X_N|, then shape rank, then (a, b)."""
    cands = [(T / epsilon, T, _SHAPE_RANK["trivial"], 0, 0,
              MarkovQuilt(i, "trivial"), 0.0)]
    a_idx = np.arange(1, E_pair.shape[0] + 1)[:, None]
    b_idx = np.arange(1, E_pair.shape[1] + 1)[None, :]
    N_pair = a_idx + b_idx - 1
    for (s_arr, N_arr, shape) in (
        (_score_arrays(E_pair, N_pair, [epsilon])[0], N_pair, "pair"),
        (_score_arrays(E_left, T - i + np.arange(1, E_left.size + 1), [epsilon])[0],
         T - i + np.arange(1, E_left.size + 1), "left"),
        (_score_arrays(E_right, i + np.arange(1, E_right.size + 1) - 1, [epsilon])[0],
         i + np.arange(1, E_right.size + 1) - 1, "right"),
    ):
        if s_arr.size == 0:
            continue
        m = s_arr.min()
        if not np.isfinite(m):
            continue
        for idx in np.argwhere(s_arr == m):
            if shape == "pair":
                a, b = int(idx[0]) + 1, int(idx[1]) + 1
                e_val = float(E_pair[idx[0], idx[1]])
                quilt = MarkovQuilt(i, "pair", a, b)
                nsz = a + b - 1
            elif shape == "left":
                a, b = int(idx[0]) + 1, 0
                e_val = float(E_left[idx[0]])
                quilt = MarkovQuilt(i, "left", a=a)
                nsz = T - i + a
            else:
                a, b = 0, int(idx[0]) + 1
                e_val = float(E_right[idx[0]])
                quilt = MarkovQuilt(i, "right", b=b)
                nsz = i + b - 1
            cands.append((float(m), nsz, _SHAPE_RANK[shape], a, b, quilt,
                          max(0.0, e_val)))
    cands.sort(key=lambda c: c[:5])
    best = cands[0]
    return best[0], best[5], best[6]


def _theta_search(P: np.ndarray, T: int, epsilons, ell: int,
                  q: np.ndarray | None, want_detail: bool):
    """Per-theta quilt search. Returns (sigma per epsilon, detail per node
    for the first epsilon if requested)."""
    k = P.shape[0]
    jmax = min(T - 1, max(ell, 1))
    tab = _ChainTables(P, T, jmax, pow_max=T - 1)
    if jmax >= 1:
        Bs = np.stack([tab.B[t] for t in range(jmax)]).reshape(jmax, -1)
        Fs = np.stack([tab.F[t] for t in range(jmax)]).reshape(jmax, -1)
        with np.errstate(invalid="ignore"):
            BF_sum = Bs[:, None, :] + Fs[None, :, :]
            BF_sum = np.where(np.isnan(BF_sum), -np.inf, BF_sum)
    else:
        BF_sum = np.full((0, 0, k * k), -np.inf)
    # stationary-initial shortcut: the prior table is node-independent
    R_const = None
    if q is not None and np.max(np.abs(q @ P - q)) <= 1e-9:
        R_const = _prior_table(_log(q), mask=q > 0)
    sigmas = np.zeros(len(epsilons))
    detail = [] if want_detail else None
    for i in range(1, T + 1):
        E_pair, E_left, E_right = _node_candidates(tab, i, T, ell, q, R_const, BF_sum)
        a_idx = np.arange(1, E_pair.shape[0] + 1)[:, None]
        b_idx = np.arange(1, E_pair.shape[1] + 1)[None, :]
        N_pair = a_idx + b_idx - 1
        for j, eps in enumerate(epsilons):
            best = T / eps
            for E, N in ((E_pair, N_pair),
                         (E_left, T - i + np.arange(1, E_left.size + 1)),
                         (E_right, i + np.arange(1, E_right.size + 1) - 1)):
                if E.size:
                    s = _score_arrays(E, N, [eps])[0]
                    best = min(best, float(s.min()))
            sigmas[j] = max(sigmas[j], best)
        if want_detail:
            s_i, quilt, e_val = _best_quilt(i, T, ell, epsilons[0],
                                            E_pair, E_left, E_right)
            detail.append({"node": i, "sigma": s_i, "influence": e_val,
                           "quilt": quilt.to_dict()})
    return sigmas, detail


def _class_members(cls: DistributionClass):
    """Yield (label, P rows, q or None) for searchable class variants."""
    if isinstance(cls, BinaryInterval):
        cls = cls.expand()
    if isinstance(cls, FiniteSet):
        for idx, c in enumerate(cls.chains):
            yield idx, c.P.rows, c.q
    elif isinstance(cls, MatrixSetAllInits):
        for idx, m in enumerate(cls.matrices):
            yield idx, m.rows, None
    else:
        raise ValueError("class must be FiniteSet, MatrixSetAllInits, or BinaryInterval")


def mqm_sigma_max(cls: DistributionClass, epsilons, ell: int,
                  want_detail: bool = False):
    """sigma_max per epsilon over the whole class; optionally the winning
    per-node detail (for the first epsilon)."""
    if isinstance(cls, BinaryInterval):
        cls = cls.expand()
    T = cls.T
    sig = np.zeros(len(epsilons))
    per_theta = []
    best_detail, best_theta = None, None
    for idx, P, q in _class_members(cls):
        s, detail = _theta_search(P, T, epsilons, ell, q, want_detail)
        if want_detail:
            worst = max(detail, key=lambda d: d["sigma"])
            per_theta.append({"theta_index": idx, "sigma_max": float(s[0]),
                              "node": worst["node"], "quilt": worst["quilt"]})
            if best_detail is None or s[0] > best_detail[0]:
                best_detail = (s[0], detail, idx)
        sig = np.maximum(sig, s)
    if want_detail:
        _, detail, idx = best_detail
        for d in detail:
            d["theta_index"] = idx
        return sig, detail, per_theta
    return sig, None, None


def mqm_exact(cls: DistributionClass, F: LipschitzQuery, data, epsilon: float,
              ell: int, src: LaplaceSource) -> tuple[np.ndarray, NoisePlan]:
    """MQMExact: exact per-node quilt search over the class, then
    F(data) + L * sigma_max * Lap(1) per coordinate."""
    plan = mqm_exact_plan(cls, F, epsilon, ell)
    answer = F(data) + src.sample(plan.laplace_scale, F.dim)
    return answer, plan


def mqm_exact_plan(cls: DistributionClass, F: LipschitzQuery, epsilon: float,
                   ell: int) -> NoisePlan:
    """Scale computation only (no sampling), for audits."""
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ValueError("epsilon must be positive and finite")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    sig, detail, per_theta = mqm_sigma_max(cls, [epsilon], ell, want_detail=True)
    if isinstance(cls, BinaryInterval):
        cls = cls.expand()
    return NoisePlan(
        mechanism_id="mqm_exact",
        epsilon=epsilon,
        sigma_max=float(sig[0]),
        lipschitz=F.L,
        query=F.name,
        per_node=detail,
        per_theta=per_theta,
        notes={"T": cls.T, "ell": ell},
    )


# ---------------------------------------------------------------------------
# Sequential composition

class CompositionError(ValueError):
    pass


@dataclass
class CompositionLedger:
    """Accountant for sequential mechanism runs over frozen quilt sets.

    quilt_sets records the parameters (T, ell, class digest) that determine
    every S_{Q,i} via minimal_quilt_set; active_quilts is the per-node
    argmin quilt frozen at creation. total = K * max_k epsilon_k while the
    quilt sets stay fixed.
    """

    quilt_sets: dict
    active_quilts: list
    entries: list = field(default_factory=list)

    @property
    def total(self) -> float:
        if not self.entries:
            return 0.0
        return len(self.entries) * max(e["epsilon"] for e in self.entries)

    def fingerprint(self) -> str:
        body = json.dumps({"quilt_sets": self.quilt_sets,
                           "active_quilts": self.active_quilts}, sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()


def ledger_from_plan(plan: NoisePlan, cls: DistributionClass) -> CompositionLedger:
    digest = hashlib.sha256(
        json.dumps(_class_digest_obj(cls), sort_keys=True).encode()).hexdigest()
    qs = {"T": plan.notes.get("T"), "ell": plan.notes.get("ell"),
          "class_digest": digest}
    active = [{"node": d["node"], "quilt": d["quilt"],
               "influence": d["influence"]} for d in plan.per_node]
    return CompositionLedger(quilt_sets=qs, active_quilts=active)


def _class_digest_obj(cls: DistributionClass):
    from .core import class_spec_to_json
    return class_spec_to_json(cls)


def compose(ledger: CompositionLedger, query_name: str, epsilon_k: float,
            plan: NoisePlan | None = None,
            cls: DistributionClass | None = None) -> CompositionLedger:
    """Append one mechanism run to the ledger.

    If the run's plan is supplied, its quilt sets and active quilts must
    match the frozen ones; otherwise the composition guarantee is void and
    the entry is rejected.
    """
    if not (np.isfinite(epsilon_k) and epsilon_k > 0):
        raise CompositionError("epsilon must be positive and finite")
    if plan is not None:
        check = ledger_from_plan(plan, cls) if cls is not None else None
        qs = {"T": plan.notes.get("T"), "ell": plan.notes.get("ell")}
        frozen = {k: v for k, v in ledger.quilt_sets.items() if k in qs}
        if qs != frozen:
            raise CompositionError("composition guarantee void: quilt sets changed")
        if check is not None and check.quilt_sets != ledger.quilt_sets:
            raise CompositionError("composition guarantee void: class changed")
        active = [{"node": d["node"], "quilt": d["quilt"]} for d in plan.per_node]
        frozen_active = [{"node": d["node"], "quilt": d["quilt"]}
                         for d in ledger.active_quilts]
        if active != frozen_active:
            raise CompositionError("composition guarantee void: active quilts changed")
    ledger.entries.append({"query": query_name, "epsilon": float(epsilon_k)})
    return ledger


def replay_plan(ledger: CompositionLedger, F: LipschitzQuery,
                epsilon: float) -> NoisePlan:
    """Rescore the ledger's frozen active quilts at a new epsilon, without
    re-running the quilt search. The returned plan composes cleanly."""
    T = ledger.quilt_sets["T"]
    per_node = []
    sigma_max = 0.0
    for d in ledger.active_quilts:
        quilt = MarkovQuilt.from_dict(d["quilt"])
        s = score(quilt, d["influence"], epsilon, T)
        per_node.append({"node": d["node"], "sigma": s,
                         "influence": d["influence"], "quilt": d["quilt"]})
        sigma_max = max(sigma_max, s)
    return NoisePlan(
        mechanism_id="mqm_exact",
        epsilon=epsilon,
        sigma_max=sigma_max,
        lipschitz=F.L,
        query=F.name,
        per_node=per_node,
        notes={"T": T, "ell": ledger.quilt_sets["ell"], "replayed": True},
    )


def _chain_hash(prev: str, body: dict) -> str:
    payload = prev + json.dumps(body, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def save_ledger(ledger: CompositionLedger, path) -> None:
    """Persist as append-only JSON lines with a hash chain."""
    lines = []
    header = {"kind": "header", "quilt_sets": ledger.quilt_sets,
              "active_quilts": ledger.active_quilts}
    h = _chain_hash("", header)
    header["hash"] = h
    lines.append(json.dumps(header, sort_keys=True))
    for e in ledger.entries:
        body = {"kind": "entry", "query": e["query"], "epsilon": e["epsilon"]}
        h = _chain_hash(h, body)
        body["hash"] = h
        lines.append(json.dumps(body, sort_keys=True))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_ledger(path) -> CompositionLedger:
    """Load and verify the hash chain; tampering raises CompositionError."""
    with open(path) as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise CompositionError("ledger missing header")
    h = ""
    ledger = None
    for rec in lines:
        stored = rec.pop("hash", None)
        h = _chain_hash(h, rec)
        if stored != h:
            raise CompositionError("ledger hash chain broken: refusing to use")
        if rec["kind"] == "header":
            ledger = CompositionLedger(quilt_sets=rec["quilt_sets"],
                                       active_quilts=rec["active_quilts"])
        else:
            ledger.entries.append({"query": rec["query"], "epsilon": rec["epsilon"]})
    return ledger
