"""Motion words, the embedding space, clustering, and signature statistics.

Motion words are beat-delimited, non-overlapping pose runs. Words are
time-scaled to a uniform length (13 frames by default), embedded into a
d-dimensional space by a deterministic PCA basis, and clustered with K-means;
each cluster's representative word (its motif) is the member closest to the
centroid. Signatures are normalized motif histograms; distances between them
use the chi-square metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .audio import BeatGrid
from .core import MotionClip, antipodal_correct_rotations

DEFAULT_WORD_FRAMES = 13
DEFAULT_EMBED_DIM = 184
DEFAULT_CLUSTERS = 500


@dataclass
class MotionWord:
    """Beat-delimited pose run with its contact labels and source span."""

    root_disp: np.ndarray  # (N, 3)
    rotations: np.ndarray  # (N, J, 4)
    contacts: np.ndarray  # (N, 2)
    beat_span: tuple[int, int]

    def __post_init__(self):
        if len(self.root_disp) != len(self.rotations) or len(self.contacts) != len(self.rotations):
            raise ValueError("word arrays disagree on frame count")
        if self.num_frames < 2:
            raise ValueError("motion word needs at least 2 frames")

    @property
    def num_frames(self) -> int:
        return len(self.rotations)

    @property
    def num_joints(self) -> int:
        return self.rotations.shape[1]

    def total_displacement(self) -> np.ndarray:
        return self.root_disp.sum(axis=0)

    def copy(self) -> "MotionWord":
        return MotionWord(self.root_disp.copy(), self.rotations.copy(),
                          self.contacts.copy(), self.beat_span)


@dataclass
class EmbeddingBasis:
    """Deterministic PCA basis over time-scaled, flattened words."""

    mean: np.ndarray  # (flat_dim,)
    projection: np.ndarray  # (d_eff, flat_dim), orthonormal rows
    word_frames: int
    target_dim: int

    @property
    def dim(self) -> int:
        return len(self.projection)

    @property
    def flat_dim(self) -> int:
        return len(self.mean)


@dataclass
class MotifTable:
    """Cluster centroids, representative words, and transition statistics."""

    centroids: np.ndarray  # (K, d_eff)
    motif_words: list  # K representative MotionWords
    transition: np.ndarray  # (K, K) row-stochastic; all-zero rows were never visited
    basis: EmbeddingBasis

    @property
    def num_clusters(self) -> int:
        return len(self.centroids)

    def empty_transition_rows(self) -> np.ndarray:
        return self.transition.sum(axis=1) == 0


def segment_words(clip: MotionClip, contacts: np.ndarray, beats: BeatGrid) -> list[MotionWord]:
    """Split a clip into words on the beat; word k spans [t_k, t_{k+1}).

    Frames before the first beat and at/after the last beat are dropped.
    """
    frames = beats.beat_frames
    if len(frames) < 2:
        raise ValueError("need at least 2 beats to segment words")
    if frames[0] < 0 or frames[-1] > clip.num_frames:
        raise ValueError("beat frames outside clip range")
    contacts = np.asarray(contacts)
    words = []
    for k in range(len(frames) - 1):
        a, b = int(frames[k]), int(frames[k + 1])
        words.append(MotionWord(
            root_disp=clip.root_disp[a:b].copy(),
            rotations=clip.rotations[a:b].copy(),
            contacts=contacts[a:b].copy(),
            beat_span=(a, b),
        ))
    return words


def timescale_word(word: MotionWord, target_len: int = DEFAULT_WORD_FRAMES) -> MotionWord:
    """Uniformly rescale a word in time to target_len frames.

    Rotations use piecewise shortest-arc slerp over normalized time; root
    displacements are rebuilt from the interpolated cumulative path, so the
    total displacement is preserved exactly. Contacts sample nearest-neighbor.
    """
    n = word.num_frames
    if target_len < 2:
        raise ValueError("target_len must be at least 2")
    if n == target_len:
        return word.copy()
    times = np.linspace(0.0, n - 1, target_len)
    rotations = np.stack([quat.sample_sequence(word.rotations, s) for s in times])
    cum = np.cumsum(word.root_disp, axis=0)
    sampled = np.stack([_lerp_rows(cum, s) for s in times])
    disp = np.diff(sampled, axis=0, prepend=sampled[:1])
    disp[0] = sampled[0]
    contacts = word.contacts[np.clip(np.round(times).astype(int), 0, n - 1)]
    return MotionWord(disp, rotations, contacts, word.beat_span)


def _lerp_rows(arr: np.ndarray, s: float) -> np.ndarray:
    hi = len(arr) - 1
    lo = int(np.floor(s))
    if lo >= hi:
        return arr[hi].copy()
    frac = s - lo
    return (1.0 - frac) * arr[lo] + frac * arr[lo + 1]


def word_vector(word: MotionWord, word_frames: int) -> np.ndarray:
    """Canonical flat vector: time-scaled, sign-corrected, frame-major."""
    scaled = timescale_word(word, word_frames)
    rot = antipodal_correct_rotations(scaled.rotations)
    per_frame = np.concatenate([scaled.root_disp, rot.reshape(word_frames, -1)], axis=1)
    return per_frame.reshape(-1)


def fit_embedding(words: list[MotionWord], dim: int = DEFAULT_EMBED_DIM,
                  word_frames: int = DEFAULT_WORD_FRAMES) -> EmbeddingBasis:
    """PCA basis over the corpus words; deterministic for a given word order.

    The effective dimension shrinks automatically when the corpus has fewer
    than dim + 1 words (or fewer flat dimensions). Eigenvector signs are fixed
    so the largest-magnitude component of each row is positive.
    """
    if len(words) < 2:
        raise ValueError("need at least 2 words to fit an embedding")
    X = np.stack([word_vector(w, word_frames) for w in words])
    mean = X.mean(axis=0)
    Xc = X - mean
    d_eff = int(min(dim, len(words) - 1, Xc.shape[1]))
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    projection = vt[:d_eff].copy()
    for row in projection:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return EmbeddingBasis(mean, projection, word_frames, dim)


def embed_word(word: MotionWord, basis: EmbeddingBasis) -> np.ndarray:
    """Project a word onto the basis and L2-normalize; unit-norm output."""
    v = word_vector(word, basis.word_frames) - basis.mean
    proj = basis.projection @ v
    n = np.linalg.norm(proj)
    if n < 1e-12:
        raise ValueError("degenerate word: zero-vector projection")
    return proj / n


def kmeans(points: np.ndarray, k: int, seed: int = 0,
           max_iters: int = 100) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Seeded k-means++ then Lloyd iterations; returns (centroids, labels, inertia).

    Terminates on an assignment fixpoint or max_iters. A cluster left empty
    after an update is re-seeded to the point farthest from its own centroid.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < k:
        raise ValueError(f"need at least {k} points for {k} clusters")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = points[rng.integers(n)]
        else:
            centroids[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - centroids[i]) ** 2, axis=1))

    labels = np.full(n, -1)
    inertia_trace: list[float] = []
    for _ in range(max_iters):
        dists = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)
        inertia_trace.append(float(dists[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for i in range(k):
            members = points[labels == i]
            if len(members):
                centroids[i] = members.mean(axis=0)
            else:
                per_point = np.sum((points - centroids[labels]) ** 2, axis=1)
                centroids[i] = points[int(np.argmax(per_point))]
    return centroids, labels, inertia_trace


def assign_motif(word: MotionWord, table: MotifTable) -> int:
    """Closest cluster id by centroid distance; ties break to the lowest id."""
    v = embed_word(word, table.basis)
    return assign_vector(v, table.centroids)


def assign_vector(v: np.ndarray, centroids: np.ndarray) -> int:
    return int(np.argmin(np.sum((centroids - v) ** 2, axis=1)))


def compute_signature(stream, k: int) -> np.ndarray:
    """Normalized occurrence histogram over K motifs; all-zero when empty."""
    stream = np.asarray(list(stream), dtype=int)
    sig = np.zeros(k)
    if len(stream) == 0:
        return sig
    if stream.min() < 0 or stream.max() >= k:
        raise ValueError("motif id out of range")
    counts = np.bincount(stream, minlength=k).astype(float)
    return counts / counts.sum()


def chi_square(s_i: np.ndarray, s_j: np.ndarray) -> float:
    """Chi-square distance: half the sum of (a-b)^2/(a+b), with 0/0 -> 0.

    Symmetric, zero iff equal, and bounded by 1 for normalized signatures.
    """
    a = np.asarray(s_i, dtype=float)
    b = np.asarray(s_j, dtype=float)
    if a.shape != b.shape:
        raise ValueError("signatures must have the same length")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("signature entries must be non-negative")
    denom = a + b
    num = (a - b) ** 2
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(0.5 * terms.sum())


def build_transition_matrix(streams: list, k: int) -> np.ndarray:
    """Row-stochastic matrix of consecutive motif pairs counted per stream.

    Pairs never cross stream boundaries. Rows of motifs that never appear as
    a predecessor stay all-zero (callers can flag them via a zero row sum).
    """
    counts = np.zeros((k, k))
    for stream in streams:
        stream = np.asarray(list(stream), dtype=int)
        if len(stream) and (stream.min() < 0 or stream.max() >= k):
            raise ValueError("motif id out of range")
        for j, i in zip(stream[:-1], stream[1:]):
            counts[j, i] += 1.0
    sums = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)


def template_signature(streams: list, k: int) -> np.ndarray:
    """Genre template: the average of the per-dance signatures."""
    if not streams:
        return np.zeros(k)
    sigs = np.stack([compute_signature(s, k) for s in streams])
    return sigs.mean(axis=0)


def build_motif_table(words: list[MotionWord], k: int, seed: int = 0,
                      dim: int = DEFAULT_EMBED_DIM,
                      word_frames: int = DEFAULT_WORD_FRAMES,
                      streams_by_word: list[int] | None = None,
                      max_iters: int = 100) -> tuple[MotifTable, np.ndarray]:
    """Fit embedding, cluster, pick representatives, and count transitions.

    streams_by_word assigns each word to a source dance (defaults to one
    stream); transitions never cross dances. Returns (table, labels).
    """
    basis = fit_embedding(words, dim, word_frames)
    vectors = np.stack([embed_word(w, basis) for w in words])
    centroids, labels, _ = kmeans(vectors, k, seed=seed, max_iters=max_iters)

    motif_words: list[MotionWord | None] = [None] * k
    for i in range(k):
        members = np.nonzero(labels == i)[0]
        if len(members) == 0:
            raise RuntimeError(f"cluster {i} has no members")
        d2 = np.sum((vectors[members] - centroids[i]) ** 2, axis=1)
        motif_words[i] = words[int(members[np.argmin(d2)])].copy()

    if streams_by_word is None:
        streams = [labels.tolist()]
    else:
        tags = np.asarray(streams_by_word)
        streams = [labels[tags == t].tolist() for t in dict.fromkeys(streams_by_word)]
    transition = build_transition_matrix(streams, k)
    return MotifTable(centroids, motif_words, transition, basis), labels
