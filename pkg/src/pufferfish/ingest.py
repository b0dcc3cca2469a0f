"""Time-series loading, discretization with gap splitting, and empirical
transition-matrix estimation.

States are 1-based in files and reports, 0-based in arrays; this module
owns the conversion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .baselines import ChainSegmentation
from .core import TransitionMatrix


@dataclass(frozen=True)
class RawSeries:
    """Rows of (timestamp seconds, value). Values may be numeric or labels."""

    timestamps: np.ndarray
    values: tuple

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        if ts.ndim != 1 or len(ts) != len(self.values):
            raise ValueError("timestamps and values must have equal length")
        if np.any(np.diff(ts) < 0):
            row = int(np.argmax(np.diff(ts) < 0)) + 2
            raise ValueError(f"timestamps decrease at row {row}")
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", tuple(self.values))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class BinSpec:
    """Uniform bins: value v maps to floor((v - origin) / width) + 1,
    clamped to [1, k]."""

    width: float
    origin: float
    k: int

    def __post_init__(self):
        if self.width <= 0 or self.k < 1:
            raise ValueError("need positive width and k >= 1")


@dataclass(frozen=True)
class LabelMap:
    """Categorical labels to 1-based states."""

    mapping: dict

    @property
    def k(self) -> int:
        return max(self.mapping.values())


@dataclass(frozen=True)
class DiscretizedSeries:
    """0-based state array plus segmentation and the spec that produced it."""

    states: np.ndarray
    segmentation: ChainSegmentation
    k: int
    bin_spec: object = None
    clamped: int = 0

    def __post_init__(self):
        st = np.asarray(self.states, dtype=int)
        if st.size and (st.min() < 0 or st.max() >= self.k):
            raise ValueError("states out of range")
        if self.segmentation.total != st.size:
            raise ValueError("segmentation does not cover the sequence")
        st.setflags(write=False)
        object.__setattr__(self, "states", st)


def load_csv(path, schema) -> RawSeries:
    """Load (timestamp, value) rows. schema: {timestamp_col, value_col}
    naming header columns. Errors carry 1-based data row numbers."""
    tcol, vcol = schema["timestamp_col"], schema["value_col"]
    ts, vals = [], []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tcol not in reader.fieldnames \
                or vcol not in reader.fieldnames:
            raise ValueError(f"missing columns {tcol!r}/{vcol!r} in header")
        for rownum, row in enumerate(reader, start=1):
            traw, vraw = row.get(tcol), row.get(vcol)
            if traw is None or traw == "":
                raise ValueError(f"row {rownum}: missing {tcol!r}")
            if vraw is None or vraw == "":
                raise ValueError(f"row {rownum}: missing {vcol!r}")
            try:
                t = float(traw)
            except ValueError:
                raise ValueError(f"row {rownum}: unparseable timestamp {traw!r}")
            if ts and t < ts[-1]:
                raise ValueError(f"row {rownum}: timestamp out of order")
            ts.append(t)
            vals.append(vraw)
    if not ts:
        raise ValueError("empty series")
    return RawSeries(np.array(ts), tuple(vals))


def discretize(series: RawSeries, spec, gap_threshold: float = 600.0) -> DiscretizedSeries:
    """Bin values and split segments at timestamp gaps above the threshold.

    Numeric values outside [1, k] bins clamp to the boundary bins; the
    clamp count is reported on the result.
    """
    if len(series) == 0:
        raise ValueError("empty series")
    states = np.empty(len(series), dtype=int)
    clamped = 0
    if isinstance(spec, LabelMap):
        k = spec.k
        for idx, v in enumerate(series.values):
            key = v if v in spec.mapping else str(v)
            if key not in spec.mapping:
                raise ValueError(f"unmapped label {v!r} at row {idx + 1}")
            states[idx] = spec.mapping[key] - 1
    elif isinstance(spec, BinSpec):
        k = spec.k
        vals = np.array([float(v) for v in series.values])
        raw = np.floor((vals - spec.origin) / spec.width).astype(int) + 1
        clamped = int(np.sum((raw < 1) | (raw > k)))
        states = np.clip(raw, 1, k) - 1
    else:
        raise TypeError("spec must be a BinSpec or LabelMap")
    gaps = np.where(np.diff(series.timestamps) > gap_threshold)[0]
    bounds = [0] + [int(g) + 1 for g in gaps] + [len(series)]
    segs = tuple((bounds[j], bounds[j + 1]) for j in range(len(bounds) - 1))
    return DiscretizedSeries(states=states, segmentation=ChainSegmentation(segs),
                             k=k, bin_spec=spec, clamped=clamped)


@dataclass(frozen=True)
class EstimatedChain:
    """Estimated transition matrix with initial-distribution options."""

    P: TransitionMatrix
    q_empirical: np.ndarray
    q_stationary: np.ndarray | None


def estimate_transition(series: DiscretizedSeries, smoothing: float = 1.0) -> EstimatedChain:
    """P(x, y) = (count(x->y) + s) / (count(x->.) + k s), transitions
    counted within segments only.

    q_empirical is the distribution of segment-start states; q_stationary
    is the stationary distribution of the estimate (None if the estimate
    fails the mixing guard, only possible with smoothing 0).
    """
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    k = series.k
    if series.states.size == 0:
        raise ValueError("empty series")
    counts = np.zeros((k, k))
    starts = np.zeros(k)
    for s, e in series.segmentation.segments:
        seg = series.states[s:e]
        starts[seg[0]] += 1
        np.add.at(counts, (seg[:-1], seg[1:]), 1.0)
    row_tot = counts.sum(axis=1)
    if smoothing == 0 and np.any(row_tot == 0):
        bad = int(np.argmax(row_tot == 0)) + 1
        raise ValueError(f"state {bad} has no outgoing transitions; "
                         "use smoothing > 0")
    P = (counts + smoothing) / (row_tot + k * smoothing)[:, None]
    Pm = TransitionMatrix(P)
    q_emp = starts / starts.sum()
    try:
        from .approx import stationary_distribution
        q_stat = stationary_distribution(Pm)
    except ValueError:
        q_stat = None
    return EstimatedChain(P=Pm, q_empirical=q_emp, q_stationary=q_stat)
