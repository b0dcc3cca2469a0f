"""The Wasserstein mechanism over small explicit joint models, plus the
group-sensitivity comparison baseline.

Joint models are explicit probability tables, so everything here is exact
enumeration behind a size guard. The Markov-chain modules are the scalable
route.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product

import numpy as np

from .core import LaplaceSource, LipschitzQuery, NoisePlan
from .discrete import DiscreteDistribution, w_infinity

ENUM_GUARD = 10 ** 7


@dataclass(frozen=True)
class JointModel:
    """An explicit joint distribution over n records, each taking one of
    domain_size values (0-based). The secrets are the events
    "record i takes value a"."""

    n: int
    domain_size: int
    joint: np.ndarray

    def __post_init__(self):
        if self.domain_size ** self.n > ENUM_GUARD:
            raise ValueError("joint table too large to enumerate")
        table = np.asarray(self.joint, dtype=float).reshape((self.domain_size,) * self.n)
        if abs(table.sum() - 1.0) > 1e-10:
            raise ValueError(f"joint table sums to {table.sum():g}")
        if np.any(table < -1e-12):
            raise ValueError("negative joint probability")
        table = np.clip(table, 0.0, None)
        table.setflags(write=False)
        object.__setattr__(self, "joint", table)

    @classmethod
    def from_json(cls, obj) -> "JointModel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(n=int(obj["n"]), domain_size=int(obj["domain"]),
                   joint=np.asarray(obj["probs"], dtype=float))

    def to_json(self) -> dict:
        return {"n": self.n, "domain": self.domain_size,
                "probs": self.joint.ravel().tolist()}

    def outcomes(self) -> np.ndarray:
        """All outcomes as an array of shape (domain^n, n)."""
        idx = np.indices((self.domain_size,) * self.n)
        return idx.reshape(self.n, -1).T


@dataclass(frozen=True)
class GroupStructure:
    """A partition of record indices {1..n} (1-based) into groups."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        flat = [i for g in self.groups for i in g]
        if sorted(flat) != list(range(1, len(flat) + 1)):
            raise ValueError("groups must partition 1..n")
        object.__setattr__(self, "groups", tuple(tuple(g) for g in self.groups))


def _query_values(model: JointModel, F: LipschitzQuery) -> np.ndarray:
    """F evaluated at every outcome (scalar queries only)."""
    if F.dim != 1:
        raise ValueError("the Wasserstein mechanism handles scalar queries")
    out = model.outcomes()
    return np.array([F(row)[0] for row in out])


def conditional_output_dist(model: JointModel, F: LipschitzQuery,
                            secret: tuple[int, int],
                            _fvals: np.ndarray | None = None) -> DiscreteDistribution:
    """Exact distribution of F(X) given record i takes value a.

    secret = (i, a) with i a 1-based record index and a a 0-based value.
    """
    i, a = secret
    if not (1 <= i <= model.n) or not (0 <= a < model.domain_size):
        raise ValueError("secret out of range")
    fvals = _query_values(model, F) if _fvals is None else _fvals
    flat = model.joint.ravel()
    out = model.outcomes()
    mask = out[:, i - 1] == a
    mass = flat[mask].sum()
    if mass <= 0:
        raise ValueError(f"secret (record {i} = {a}) has zero probability")
    return DiscreteDistribution.from_weights(fvals[mask], flat[mask])


def wasserstein_scale(model_list, F: LipschitzQuery) -> tuple[float, list[str]]:
    """W = sup over secret pairs and candidate models of the
    infinity-Wasserstein distance between conditional output distributions.

    Secret pairs where either conditional is undefined (zero-probability
    secret) are skipped; skips are returned for logging.
    """
    W = 0.0
    skipped: list[str] = []
    any_pair = False
    for m_idx, model in enumerate(model_list):
        fvals = _query_values(model, F)
        conds: dict[tuple[int, int], DiscreteDistribution | None] = {}
        for i in range(1, model.n + 1):
            for a in range(model.domain_size):
                try:
                    conds[(i, a)] = conditional_output_dist(model, F, (i, a), _fvals=fvals)
                except ValueError:
                    conds[(i, a)] = None
        for i in range(1, model.n + 1):
            for a in range(model.domain_size):
                for b in range(a + 1, model.domain_size):
                    mu, nu = conds[(i, a)], conds[(i, b)]
                    if mu is None or nu is None:
                        skipped.append(f"model {m_idx}: record {i} pair ({a},{b})")
                        continue
                    any_pair = True
                    W = max(W, w_infinity(mu, nu))
    if not any_pair:
        raise ValueError("no admissible secret pair in any model")
    return W, skipped


def wasserstein_mechanism(model_list, F: LipschitzQuery, data, epsilon: float,
                          src: LaplaceSource) -> tuple[float, NoisePlan]:
    """F(data) + Lap(W / epsilon). Returns the private scalar and its plan."""
    if not (epsilon > 0) or not np.isfinite(epsilon):
        raise ValueError("epsilon must be positive and finite")
    W, skipped = wasserstein_scale(model_list, F)
    answer = float(F(data)[0])
    scale = W / epsilon
    if scale > 0:
        answer += float(src.sample(scale, 1)[0])
    plan = NoisePlan(
        mechanism_id="wasserstein",
        epsilon=epsilon,
        sigma_max=W / epsilon,
        lipschitz=1.0,
        query=F.name,
        notes={"W": W, "skipped_secret_pairs": skipped},
    )
    return answer, plan


def group_sensitivity(n: int, domain_size: int, F: LipschitzQuery,
                      groups: GroupStructure) -> float:
    """Max over groups of the worst |F(x) - F(y)| (L1 for vector F) when
    all records of one group change arbitrarily."""
    if max(i for g in groups.groups for i in g) != n:
        raise ValueError("groups must cover 1..n")
    best = 0.0
    for g in groups.groups:
        g0 = [i - 1 for i in g]
        rest = [i for i in range(n) if i not in g0]
        if domain_size ** (len(rest) + len(g0)) > ENUM_GUARD:
            raise ValueError("group sensitivity enumeration too large")
        for rest_vals in product(range(domain_size), repeat=len(rest)):
            base = np.zeros(n, dtype=int)
            base[rest] = rest_vals
            vals = []
            for g_vals in product(range(domain_size), repeat=len(g0)):
                x = base.copy()
                x[g0] = g_vals
                vals.append(F(x))
            vals = np.asarray(vals)
            if vals.shape[1] == 1:
                best = max(best, float(vals.max() - vals.min()))
            else:
                for a in range(len(vals)):
                    diffs = np.abs(vals - vals[a]).sum(axis=1)
                    best = max(best, float(diffs.max()))
    return best
