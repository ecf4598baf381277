"""Top-level motif selection: drive the running signature toward a target.

On every beat the next motif is drawn from a distribution built as the
elementwise product of a signature-mismatch vector with the current motif's
transition row, normalized. Two mismatch weightings are provided:

  - "deficit" (default): max(s_target - s_running, 0), which weights only
    motifs the dance is still missing. The running signature of sampled
    streams converges to the target under this mode.
  - "absolute": |s_running - s_target|, which also rewards over-represented
    motifs. Measured on long runs, this drives the sampled stream to a biased
    equilibrium away from the target, so it is kept only as an alternative.

Pinned beats override sampling. Fallbacks: if every weight is zero, sample
the transition row alone; if the transition row is all-zero, sample the
target signature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .motifs import chi_square

MODES = ("deficit", "absolute")


@dataclass(frozen=True)
class MotifConstraint:
    """Pin one beat to a motif id."""

    beat: int
    motif: int

    def __post_init__(self):
        if self.beat < 0:
            raise ValueError("constraint beat index must be >= 0")
        if self.motif < 0:
            raise ValueError("constraint motif id must be >= 0")


@dataclass
class ChoreographyState:
    """Mutable sampler state: current motif, running counts, target, RNG."""

    transition: np.ndarray  # (K, K) row-stochastic
    target: np.ndarray  # (K,) normalized signature
    seed: int = 0
    mode: str = "deficit"
    current: int | None = None
    counts: np.ndarray = field(init=False)
    rng: np.random.Generator = field(init=False)

    def __post_init__(self):
        k = len(self.target)
        if self.transition.shape != (k, k):
            raise ValueError("transition matrix does not match signature length")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.counts = np.zeros(k, dtype=int)
        self.rng = np.random.default_rng(self.seed)

    @property
    def num_clusters(self) -> int:
        return len(self.target)

    def signature(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros(self.num_clusters)
        return self.counts / total

    def record(self, motif: int) -> None:
        self.counts[motif] += 1
        self.current = motif


def next_motif_distribution(state: ChoreographyState) -> np.ndarray:
    """The sampling distribution for the next beat, before drawing."""
    if state.current is None:
        return _normalized(state.target)
    row = state.transition[state.current]
    if state.mode == "absolute":
        mismatch = np.abs(state.signature() - state.target)
    else:
        mismatch = np.maximum(state.target - state.signature(), 0.0)
    weights = mismatch * row
    total = weights.sum()
    if total > 0:
        return weights / total
    if row.sum() > 0:
        return row / row.sum()
    return _normalized(state.target)


def _normalized(v: np.ndarray) -> np.ndarray:
    total = v.sum()
    if total <= 0:
        return np.full(len(v), 1.0 / len(v))
    return v / total


def next_motif(state: ChoreographyState, constraint: MotifConstraint | None = None) -> int:
    """Draw (or honor a pinned) next motif and update the running state."""
    if constraint is not None:
        if not 0 <= constraint.motif < state.num_clusters:
            raise ValueError(f"constraint motif {constraint.motif} out of range")
        chosen = constraint.motif
    else:
        dist = next_motif_distribution(state)
        chosen = int(state.rng.choice(state.num_clusters, p=dist))
    state.record(chosen)
    return chosen


def run_choreography(
    transition: np.ndarray,
    target: np.ndarray,
    num_beats: int,
    seed: int = 0,
    constraints: list[MotifConstraint] | None = None,
    mode: str = "deficit",
) -> tuple[list[int], list[float]]:
    """Generate a motif sequence of num_beats plus its per-beat distance trace.

    The first beat samples the target signature unless pinned. Returns
    (sequence, chi-square trace after each beat). Deterministic per seed.
    """
    pinned = {c.beat: c for c in constraints or []}
    for c in pinned.values():
        if not 0 <= c.motif < len(target):
            raise ValueError(f"constraint motif {c.motif} out of range")
    state = ChoreographyState(np.asarray(transition, float), np.asarray(target, float),
                              seed=seed, mode=mode)
    sequence: list[int] = []
    trace: list[float] = []
    for beat in range(num_beats):
        sequence.append(next_motif(state, pinned.get(beat)))
        trace.append(chi_square(state.signature(), state.target))
    return sequence, trace


def run_transition_only(transition: np.ndarray, target: np.ndarray, num_beats: int,
                        seed: int = 0) -> tuple[list[int], list[float]]:
    """Ablated generator: sample transition rows only, ignoring the signature.

    Serves as the baseline the guided sampler is compared against.
    """
    transition = np.asarray(transition, float)
    target = np.asarray(target, float)
    rng = np.random.default_rng(seed)
    k = len(target)
    counts = np.zeros(k)
    sequence: list[int] = []
    trace: list[float] = []
    current = int(rng.choice(k, p=_normalized(target)))
    counts[current] += 1
    sequence.append(current)
    trace.append(chi_square(counts / counts.sum(), target))
    for _ in range(1, num_beats):
        row = transition[current]
        dist = row / row.sum() if row.sum() > 0 else _normalized(target)
        current = int(rng.choice(k, p=dist))
        counts[current] += 1
        sequence.append(current)
        trace.append(chi_square(counts / counts.sum(), target))
    return sequence, trace


def convergence_trace(sequence, target: np.ndarray) -> list[float]:
    """Chi-square distance to the target after each element of a motif stream."""
    target = np.asarray(target, dtype=float)
    counts = np.zeros(len(target))
    trace = []
    for motif in sequence:
        counts[int(motif)] += 1
        trace.append(chi_square(counts / counts.sum(), target))
    return trace
