"""Shared domain types: Markov chain models, distribution classes,
Lipschitz queries, noise plans, and a reproducible Laplace source.

Node labels X_1..X_T are 1-based in documentation and reports; state
values are stored 0-based (0..k-1). Conversion happens only at the
ingest/CLI boundary.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

# simplex checks use this tolerance; matrices are never renormalized silently
PROB_TOL = 1e-12


def _as_prob_vector(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 1:
        raise ValueError("probability vector must be 1-dimensional")
    return q


class TransitionMatrix:
    """A k x k row-stochastic matrix P(x -> y).

    The underlying array is copied and frozen at construction.
    """

    def __init__(self, rows, validate: bool = True):
        rows = np.array(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise ValueError("transition matrix must be square")
        if rows.shape[0] < 2:
            raise ValueError("need at least 2 states")
        if validate:
            errs = stochasticity_violations(rows)
            if errs:
                raise ValueError("; ".join(errs))
        rows.setflags(write=False)
        self.rows = rows

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    def power(self, j: int) -> np.ndarray:
        """P^j by repeated squaring (P^0 = identity)."""
        return np.linalg.matrix_power(self.rows, j)

    def __eq__(self, other):
        return isinstance(other, TransitionMatrix) and np.array_equal(self.rows, other.rows)

    def __repr__(self):
        return f"TransitionMatrix(k={self.k})"


def stochasticity_violations(rows: np.ndarray, tol: float = PROB_TOL) -> list[str]:
    """List human-readable row-stochasticity violations of a square matrix."""
    errs = []
    for i, row in enumerate(rows):
        bad = np.where((row < -tol) | (row > 1 + tol))[0]
        for j in bad:
            errs.append(f"P[{i}][{j}]={row[j]:g} outside [0,1]")
        s = row.sum()
        if abs(s - 1.0) > tol:
            errs.append(f"row {i} sums to {s:g}")
    return errs


@dataclass(frozen=True)
class MarkovChainModel:
    """One admissible distribution theta = (q, P) on chains of length T."""

    q: np.ndarray
    P: TransitionMatrix
    T: int

    def __post_init__(self):
        object.__setattr__(self, "q", _as_prob_vector(self.q))
        self.q.setflags(write=False)
        if not isinstance(self.P, TransitionMatrix):
            object.__setattr__(self, "P", TransitionMatrix(self.P))
        if self.T < 1:
            raise ValueError("T must be >= 1")

    @property
    def k(self) -> int:
        return self.P.k


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


def validate_chain(model: MarkovChainModel) -> ValidationReport:
    """Report-style validation of a chain model (never raises)."""
    errs: list[str] = []
    q, rows = model.q, model.P.rows
    if len(q) != rows.shape[0]:
        errs.append(f"q has length {len(q)}, P has {rows.shape[0]} states")
    bad = np.where((q < -PROB_TOL) | (q > 1 + PROB_TOL))[0]
    for j in bad:
        errs.append(f"q[{j}]={q[j]:g} outside [0,1]")
    s = q.sum()
    if abs(s - 1.0) > PROB_TOL:
        errs.append(f"q sums to {s:g}")
    errs.extend(stochasticity_violations(rows))
    if model.T < 1:
        errs.append(f"T={model.T} < 1")
    return ValidationReport(ok=not errs, violations=tuple(errs))


# ---------------------------------------------------------------------------
# Distribution classes (representations of Theta)

@dataclass(frozen=True)
class FiniteSet:
    """Theta as an explicit finite list of (q, P) models sharing k and T."""

    chains: tuple[MarkovChainModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        if not self.chains:
            raise ValueError("FiniteSet must be non-empty")
        k, T = self.chains[0].k, self.chains[0].T
        for c in self.chains:
            if c.k != k or c.T != T:
                raise ValueError("all members must share k and T")

    @property
    def k(self) -> int:
        return self.chains[0].k

    @property
    def T(self) -> int:
        return self.chains[0].T


@dataclass(frozen=True)
class MatrixSetAllInits:
    """Theta = {every simplex initial distribution} x a finite matrix set."""

    matrices: tuple[TransitionMatrix, ...]
    T: int

    def __post_init__(self):
        object.__setattr__(
            self,
            "matrices",
            tuple(m if isinstance(m, TransitionMatrix) else TransitionMatrix(m)
                  for m in self.matrices),
        )
        if not self.matrices:
            raise ValueError("matrix set must be non-empty")
        k = self.matrices[0].k
        if any(m.k != k for m in self.matrices):
            raise ValueError("all matrices must share k")
        if self.T < 1:
            raise ValueError("T must be >= 1")

    @property
    def k(self) -> int:
        return self.matrices[0].k


@dataclass(frozen=True)
class BinaryInterval:
    """Binary chains with (p0, p1) in [alpha, beta]^2 and all initials.

    p0 = P(stay in state 0), p1 = P(stay in state 1). Expansion places
    both parameters on a grid of pitch grid_step, endpoints included.
    """

    alpha: float
    beta: float
    grid_step: float = 0.01
    T: int = 100

    def __post_init__(self):
        if not (0.0 < self.alpha <= self.beta < 1.0):
            raise ValueError("need 0 < alpha <= beta < 1")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if self.T < 1:
            raise ValueError("T must be >= 1")

    @property
    def k(self) -> int:
        return 2

    def grid(self) -> np.ndarray:
        n = int(np.floor((self.beta - self.alpha) / self.grid_step + 1e-9))
        pts = self.alpha + self.grid_step * np.arange(n + 1)
        if pts[-1] < self.beta - 1e-12:
            pts = np.append(pts, self.beta)
        return pts

    def expand(self) -> MatrixSetAllInits:
        pts = self.grid()
        mats = [TransitionMatrix([[p0, 1 - p0], [1 - p1, p1]])
                for p0 in pts for p1 in pts]
        return MatrixSetAllInits(tuple(mats), self.T)


@dataclass(frozen=True)
class MixingParams:
    """Theta summarized directly by its mixing parameters."""

    pi_min: float
    g: float
    k: int
    T: int
    reversible: bool = False

    def __post_init__(self):
        if not (0.0 < self.pi_min <= 1.0 / self.k):
            raise ValueError("need 0 < pi_min <= 1/k")
        if not (0.0 < self.g <= 2.0):
            raise ValueError("need 0 < g <= 2")
        if self.T < 1:
            raise ValueError("T must be >= 1")


DistributionClass = Union[FiniteSet, MatrixSetAllInits, BinaryInterval, MixingParams]


def parse_class_spec(obj) -> DistributionClass:
    """Build a DistributionClass from its JSON document (dict or JSON text)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError("class spec must be an object with a 'type' field")
    t = obj["type"]
    if t == "finite_set":
        T = int(obj["T"])
        chains = tuple(
            MarkovChainModel(q=c["q"], P=TransitionMatrix(c["P"]), T=T)
            for c in obj["chains"]
        )
        return FiniteSet(chains)
    if t == "matrix_set_all_inits":
        mats = tuple(TransitionMatrix(m) for m in obj["matrices"])
        return MatrixSetAllInits(mats, int(obj["T"]))
    if t == "binary_interval":
        return BinaryInterval(
            alpha=float(obj["alpha"]),
            beta=float(obj["beta"]),
            grid_step=float(obj.get("grid_step", 0.01)),
            T=int(obj["T"]),
        )
    if t == "mixing_params":
        return MixingParams(
            pi_min=float(obj["pi_min"]),
            g=float(obj["g"]),
            k=int(obj["k"]),
            T=int(obj["T"]),
            reversible=bool(obj.get("reversible", False)),
        )
    raise ValueError(f"unknown class spec type {t!r}")


def class_spec_to_json(cls: DistributionClass) -> dict:
    """Inverse of parse_class_spec."""
    if isinstance(cls, FiniteSet):
        return {
            "type": "finite_set",
            "T": cls.T,
            "chains": [{"q": c.q.tolist(), "P": c.P.rows.tolist()} for c in cls.chains],
        }
    if isinstance(cls, MatrixSetAllInits):
        return {
            "type": "matrix_set_all_inits",
            "T": cls.T,
            "matrices": [m.rows.tolist() for m in cls.matrices],
        }
    if isinstance(cls, BinaryInterval):
        return {
            "type": "binary_interval",
            "alpha": cls.alpha,
            "beta": cls.beta,
            "grid_step": cls.grid_step,
            "T": cls.T,
        }
    if isinstance(cls, MixingParams):
        return {
            "type": "mixing_params",
            "pi_min": cls.pi_min,
            "g": cls.g,
            "k": cls.k,
            "T": cls.T,
            "reversible": cls.reversible,
        }
    raise TypeError(f"not a DistributionClass: {cls!r}")


# ---------------------------------------------------------------------------
# Lipschitz queries

@dataclass(frozen=True)
class LipschitzQuery:
    """A query F with a known L1 Lipschitz constant under one-record change.

    eval takes a 0-based state sequence (numpy int array of length T) and
    returns a real vector of length dim.
    """

    name: str
    L: float
    dim: int
    eval: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("Lipschitz constant must be non-negative")

    def __call__(self, states) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(states, dtype=int)), dtype=float)


_STATE_FREQ_RE = re.compile(r"^state_frequency\((\d+)\)$")


def builtin_query(name: str, T: int, k: int) -> LipschitzQuery:
    """Builtin queries with analytic Lipschitz constants.

    rel_freq_histogram: per-state relative frequencies, L = 2/T, dim = k.
    count_histogram: per-state counts, L = 2, dim = k.
    state_frequency(s): frequency of state s (1-based label), L = 1/T, dim = 1.
    """
    if T < 1 or k < 1:
        raise ValueError("need T >= 1 and k >= 1")
    if name == "rel_freq_histogram":
        return LipschitzQuery(
            name, 2.0 / T, k,
            lambda x, k=k, T=T: np.bincount(x, minlength=k)[:k] / T,
        )
    if name == "count_histogram":
        return LipschitzQuery(
            name, 2.0, k,
            lambda x, k=k: np.bincount(x, minlength=k)[:k].astype(float),
        )
    m = _STATE_FREQ_RE.match(name)
    if m:
        s = int(m.group(1))
        if not (1 <= s <= k):
            raise ValueError(f"state label {s} outside 1..{k}")
        return LipschitzQuery(
            name, 1.0 / T, 1,
            lambda x, s=s - 1: np.array([np.mean(x == s)]),
        )
    raise ValueError(f"unknown builtin query {name!r}")


# ---------------------------------------------------------------------------
# Noise plan

@dataclass
class NoisePlan:
    """Record of a scale computation: sigma_max, winners, and the final scale."""

    mechanism_id: str
    epsilon: float
    sigma_max: float
    lipschitz: float
    query: str
    per_node: list = field(default_factory=list)
    per_theta: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def laplace_scale(self) -> float:
        return self.lipschitz * self.sigma_max

    def to_dict(self) -> dict:
        return {
            "mechanism_id": self.mechanism_id,
            "epsilon": self.epsilon,
            "sigma_max": self.sigma_max,
            "lipschitz": self.lipschitz,
            "laplace_scale": self.laplace_scale,
            "query": self.query,
            "per_node": self.per_node,
            "per_theta": self.per_theta,
            "notes": self.notes,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


# ---------------------------------------------------------------------------
# Randomness

class LaplaceSource:
    """Seeded Laplace sampler.

    Uses a counter-based generator (Philox) and inverse-CDF transform so
    identical seeds give bitwise-identical streams across platforms.
    A source is single-owner; use derive() to get independent children
    for parallel work.
    """

    def __init__(self, seed: int, _key=None):
        self.seed = int(seed)
        key = _key if _key is not None else np.array([self.seed, 0], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def derive(self, index: int) -> "LaplaceSource":
        """An independent child source; deterministic in (seed, index)."""
        key = np.array([self.seed, int(index) + 1], dtype=np.uint64)
        child = LaplaceSource(self.seed, _key=key)
        return child

    def uniform(self, n: int) -> np.ndarray:
        return self._gen.random(int(n))

    def sample(self, scale: float, n: int) -> np.ndarray:
        """n draws from zero-mean Laplace with the given scale."""
        if scale <= 0:
            raise ValueError("scale must be positive")
        u = self.uniform(n)
        # u = 0 would hit log(0); nudge into the open interval
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        return np.where(u < 0.5, scale * np.log(2 * u), -scale * np.log(2 * (1 - u)))


def laplace_sample(src: LaplaceSource, scale: float, n: int) -> np.ndarray:
    """Functional form of LaplaceSource.sample."""
    return src.sample(scale, n)


def sample_sequence(model: MarkovChainModel, src: LaplaceSource) -> np.ndarray:
    """Sample a length-T state sequence (0-based values) from the chain."""
    rep = validate_chain(model)
    if not rep.ok:
        raise ValueError("invalid chain: " + "; ".join(rep.violations))
    u = src.uniform(model.T)
    cq = np.cumsum(model.q)
    states = np.empty(model.T, dtype=int)
    states[0] = int(np.searchsorted(cq, u[0], side="right"))
    cp = np.cumsum(model.P.rows, axis=1)
    for t in range(1, model.T):
        states[t] = int(np.searchsorted(cp[states[t - 1]], u[t], side="right"))
    return np.clip(states, 0, model.k - 1)
