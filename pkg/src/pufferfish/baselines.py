"""Group differential privacy and entry-level differential privacy
Laplace baselines."""

from __future__ import annotations

from dataclasses import dataclass

from .core import LipschitzQuery


@dataclass(frozen=True)
class ChainSegmentation:
    """Index ranges [start, end) treated as independent chains.

    Indices are 0-based positions into the observed sequence; segments
    must be disjoint, ordered, and cover 0..total-1 without gaps.
    """

    segments: tuple[tuple[int, int], ...]

    def __post_init__(self):
        segs = tuple((int(s), int(e)) for s, e in self.segments)
        if not segs:
            raise ValueError("segmentation must be non-empty")
        pos = 0
        for s, e in segs:
            if s != pos or e <= s:
                raise ValueError("segments must be ordered, disjoint, covering")
            pos = e
        object.__setattr__(self, "segments", segs)

    @property
    def total(self) -> int:
        return self.segments[-1][1]

    @property
    def longest(self) -> int:
        return max(e - s for s, e in self.segments)


def group_dp_scale(F: LipschitzQuery, segmentation: ChainSegmentation,
                   epsilon: float, group_sensitivity: float | None = None) -> float:
    """Laplace scale per coordinate when the whole largest segment may
    change: count histograms 2M, relative-frequency histograms 2M/T,
    state frequencies M/T, all divided by epsilon. Arbitrary queries need
    a user-supplied group sensitivity."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    M = segmentation.longest
    T = segmentation.total
    if group_sensitivity is not None:
        return group_sensitivity / epsilon
    if F.name == "count_histogram":
        return 2.0 * M / epsilon
    if F.name == "rel_freq_histogram":
        return 2.0 * M / T / epsilon
    if F.name.startswith("state_frequency("):
        return M / T / epsilon
    raise ValueError(
        f"no analytic group sensitivity for {F.name!r}; supply group_sensitivity")


def entry_dp_scale(F: LipschitzQuery, epsilon: float) -> float:
    """Laplace scale under single-entry sensitivity: L / epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return F.L / epsilon
