"""Beat grids and audio feature ingestion.

The engine consumes precomputed music features from files: per-frame rhythmic
4-vectors (tempogram autocorrelation, onset strength, RMS, beat indicator) and
per-beat-interval spectral 87-vectors, treated as opaque. A synthetic grid
generator covers testing at arbitrary tempi, and a small onset-based tracker
extracts beats from raw WAV audio at desk scale; neither attempts parity with
any external feature extractor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

RHYTHMIC_DIM = 4
SPECTRAL_DIM = 87
OUTPUT_FPS = 30.0


@dataclass
class BeatGrid:
    """Musical beats mapped to motion frames, with aligned features.

    beat_frames are strictly increasing frame indices; rhythmic has one row
    per frame with the beat indicator in column 3; spectral has one row per
    beat interval (len(beat_frames) - 1).
    """

    fps: float
    beat_frames: np.ndarray  # (B,) int
    rhythmic: np.ndarray  # (T, 4)
    spectral: np.ndarray  # (B-1, 87)

    def __post_init__(self):
        self.beat_frames = np.asarray(self.beat_frames, dtype=int)
        self.rhythmic = np.asarray(self.rhythmic, dtype=float)
        self.spectral = np.asarray(self.spectral, dtype=float)
        self.validate()

    def validate(self) -> None:
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if len(self.beat_frames) and np.any(np.diff(self.beat_frames) <= 0):
            raise ValueError("beat_frames must be strictly increasing")
        if self.rhythmic.ndim != 2 or self.rhythmic.shape[1] != RHYTHMIC_DIM:
            raise ValueError(f"rhythmic features must be (frames, {RHYTHMIC_DIM})")
        if self.spectral.ndim != 2 or self.spectral.shape[1] != SPECTRAL_DIM:
            raise ValueError(f"spectral features must be (intervals, {SPECTRAL_DIM})")
        n_intervals = max(len(self.beat_frames) - 1, 0)
        if len(self.spectral) != n_intervals:
            raise ValueError(
                f"{len(self.spectral)} spectral rows for {n_intervals} beat intervals")
        if len(self.beat_frames) and self.beat_frames[-1] >= len(self.rhythmic):
            raise ValueError("beat frame beyond rhythmic feature range")
        indicator = np.zeros(len(self.rhythmic))
        indicator[self.beat_frames] = 1.0
        if not np.array_equal(self.rhythmic[:, 3] != 0, indicator != 0):
            raise ValueError("beat indicator column disagrees with beat_frames")

    @property
    def num_frames(self) -> int:
        return len(self.rhythmic)

    @property
    def num_intervals(self) -> int:
        return max(len(self.beat_frames) - 1, 0)

    def interval_lengths(self) -> np.ndarray:
        return np.diff(self.beat_frames)


def load_features(path: str | Path) -> BeatGrid:
    """Load a feature file (see save_features for the schema)."""
    data = json.loads(Path(path).read_text())
    try:
        grid = BeatGrid(
            fps=float(data["fps"]),
            beat_frames=np.array(data["beat_frames"], dtype=int),
            rhythmic=np.array(data["rhythmic"], dtype=float),
            spectral=np.array(data["spectral"], dtype=float).reshape(-1, SPECTRAL_DIM)
            if data["spectral"] else np.zeros((0, SPECTRAL_DIM)),
        )
    except KeyError as exc:
        raise ValueError(f"feature file missing field {exc}") from None
    return grid


def save_features(grid: BeatGrid, path: str | Path) -> None:
    """Write the JSON feature schema: {fps, beat_frames, rhythmic, spectral}."""
    payload = {
        "fps": grid.fps,
        "beat_frames": grid.beat_frames.tolist(),
        "rhythmic": grid.rhythmic.tolist(),
        "spectral": grid.spectral.tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def synth_beat_grid(bpm: float, fps: float, duration_frames: int, seed: int = 0) -> BeatGrid:
    """Synthetic grid for testing: beats at round(k * fps * 60 / bpm).

    Rhythmic surrogates peak at beats (cosine bump and a sharper Gaussian
    bump), RMS is constant, and the indicator marks exact beat frames.
    Spectral rows are reproducible pseudo-random draws for the given seed.
    """
    if bpm <= 0:
        raise ValueError("bpm must be positive")
    period = fps * 60.0 / bpm
    beats = []
    k = 0
    while True:
        frame = int(round(k * period))
        if frame >= duration_frames:
            break
        beats.append(frame)
        k += 1
    beat_frames = np.array(beats, dtype=int)

    t = np.arange(duration_frames, dtype=float)
    phase = 2.0 * np.pi * t / period
    nearest = np.round(t / period) * period
    a1 = 0.5 * (1.0 + np.cos(phase))
    a2 = np.exp(-0.5 * ((t - nearest) / (period / 6.0)) ** 2)
    a3 = np.full(duration_frames, 0.5)
    a4 = np.zeros(duration_frames)
    a4[beat_frames] = 1.0
    rhythmic = np.stack([a1, a2, a3, a4], axis=1)

    rng = np.random.default_rng(seed)
    spectral = rng.standard_normal((max(len(beat_frames) - 1, 0), SPECTRAL_DIM))
    return BeatGrid(fps, beat_frames, rhythmic, spectral)


def _onset_envelope(samples: np.ndarray, sample_rate: int,
                    window: int = 1024, hop: int = 256) -> tuple[np.ndarray, float]:
    """Half-wave rectified spectral flux; returns (envelope, envelope frame rate)."""
    if len(samples) < window + hop:
        return np.zeros(0), sample_rate / hop
    n_frames = 1 + (len(samples) - window) // hop
    win = np.hanning(window)
    spectra = np.empty((n_frames, window // 2 + 1))
    for i in range(n_frames):
        seg = samples[i * hop : i * hop + window] * win
        spectra[i] = np.abs(np.fft.rfft(seg))
    flux = np.maximum(np.diff(spectra, axis=0), 0.0).sum(axis=1)
    envelope = np.concatenate([[0.0], flux])
    peak = envelope.max()
    if peak > 0:
        envelope = envelope / peak
    return envelope, sample_rate / hop


def track_beats(samples: np.ndarray, sample_rate: int,
                output_fps: float = OUTPUT_FPS) -> np.ndarray:
    """Beat frame indices (at output_fps) from mono audio samples.

    Pipeline: spectral-flux onset envelope, tempo from the autocorrelation
    peak in the 60-240 bpm band (parabolic sub-lag refinement), then beats by
    phase-aligned peak picking on the envelope. Silence yields an empty result.
    The tempo estimate is invariant to global amplitude scaling.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if len(samples) < 2 * sample_rate:
        raise ValueError("need at least 2 seconds of audio")
    envelope, env_fps = _onset_envelope(samples, sample_rate)
    if len(envelope) == 0 or envelope.max() <= 0 or envelope.std() < 1e-12:
        return np.zeros(0, dtype=int)

    centered = envelope - envelope.mean()
    corr = np.correlate(centered, centered, mode="full")[len(centered) - 1 :]
    lag_min = max(2, int(np.floor(env_fps * 60.0 / 240.0)))
    lag_max = min(len(corr) - 2, int(np.ceil(env_fps * 60.0 / 60.0)))
    if lag_max <= lag_min:
        return np.zeros(0, dtype=int)
    lag = lag_min + int(np.argmax(corr[lag_min : lag_max + 1]))
    # parabolic refinement for sub-lag tempo resolution
    y0, y1, y2 = corr[lag - 1], corr[lag], corr[lag + 1]
    denom = y0 - 2 * y1 + y2
    shift = 0.0 if abs(denom) < 1e-12 else 0.5 * (y0 - y2) / denom
    period = lag + float(np.clip(shift, -0.5, 0.5))

    # choose the comb phase that collects the most onset energy
    n_phases = max(int(round(period)), 1)
    best_phase, best_score = 0.0, -np.inf
    for p in range(n_phases):
        idx = np.round(np.arange(p, len(envelope) - 1e-9, period)).astype(int)
        idx = idx[idx < len(envelope)]
        if len(idx) == 0:
            continue
        score = envelope[idx].sum()
        if score > best_score:
            best_score, best_phase = score, float(p)
    positions = np.arange(best_phase, len(envelope) - 1e-9, period)
    frames = np.round(positions / env_fps * output_fps).astype(int)
    return np.unique(frames)


def estimate_bpm(samples: np.ndarray, sample_rate: int) -> float:
    """Tempo in bpm from the tracker's autocorrelation stage; 0 for silence."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    envelope, env_fps = _onset_envelope(samples, sample_rate)
    if len(envelope) == 0 or envelope.max() <= 0 or envelope.std() < 1e-12:
        return 0.0
    centered = envelope - envelope.mean()
    corr = np.correlate(centered, centered, mode="full")[len(centered) - 1 :]
    lag_min = max(2, int(np.floor(env_fps * 60.0 / 240.0)))
    lag_max = min(len(corr) - 2, int(np.ceil(env_fps * 60.0 / 60.0)))
    if lag_max <= lag_min:
        return 0.0
    lag = lag_min + int(np.argmax(corr[lag_min : lag_max + 1]))
    y0, y1, y2 = corr[lag - 1], corr[lag], corr[lag + 1]
    denom = y0 - 2 * y1 + y2
    shift = 0.0 if abs(denom) < 1e-12 else 0.5 * (y0 - y2) / denom
    period = lag + float(np.clip(shift, -0.5, 0.5))
    return 60.0 * env_fps / period


def load_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Mono float samples in [-1, 1] from a PCM16 or float32 WAV file."""
    rate, data = wavfile.read(str(path))
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype.kind == "i":
        data = data.astype(float) / float(np.iinfo(data.dtype).max)
    else:
        data = data.astype(float)
    return data, int(rate)


def grid_from_audio(samples: np.ndarray, sample_rate: int, seed: int = 0,
                    output_fps: float = OUTPUT_FPS) -> BeatGrid:
    """Build a BeatGrid from raw audio: tracked beats plus desk-scale features.

    Rhythmic columns reuse the tracker internals (autocorrelation strength,
    onset flux, RMS, beat indicator). Spectral rows are 87-band log-magnitude
    summaries per beat interval; the engine treats their composition as opaque.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    beat_frames = track_beats(samples, sample_rate, output_fps)
    duration_frames = int(np.ceil(len(samples) / sample_rate * output_fps))
    if len(beat_frames):
        duration_frames = max(duration_frames, int(beat_frames[-1]) + 1)

    envelope, env_fps = _onset_envelope(samples, sample_rate)
    t = np.arange(duration_frames, dtype=float)
    if len(envelope):
        env_at = np.interp(t * env_fps / output_fps, np.arange(len(envelope)), envelope)
    else:
        env_at = np.zeros(duration_frames)
    hop = int(round(sample_rate / output_fps))
    rms = np.array([
        np.sqrt(np.mean(samples[i * hop : (i + 1) * hop] ** 2)) if i * hop < len(samples) else 0.0
        for i in range(duration_frames)
    ])
    # local periodicity strength over a short trailing window
    a1 = np.convolve(env_at, np.ones(10) / 10.0, mode="same")
    a4 = np.zeros(duration_frames)
    a4[beat_frames[beat_frames < duration_frames]] = 1.0
    rhythmic = np.stack([a1, env_at, rms, a4], axis=1)

    spectral = np.zeros((max(len(beat_frames) - 1, 0), SPECTRAL_DIM))
    for k in range(len(spectral)):
        s0 = int(beat_frames[k] / output_fps * sample_rate)
        s1 = int(beat_frames[k + 1] / output_fps * sample_rate)
        seg = samples[s0:max(s1, s0 + 2)]
        mag = np.abs(np.fft.rfft(seg * np.hanning(len(seg))))
        bands = np.array_split(mag, SPECTRAL_DIM)
        spectral[k] = [np.log1p(b.sum()) for b in bands]
    return BeatGrid(output_fps, beat_frames, rhythmic, spectral)
