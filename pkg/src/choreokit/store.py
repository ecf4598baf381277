"""Corpus store, motif-table bundles, and the synthesis pipeline glue.

Disk layouts (all byte-deterministic for fixed inputs and seeds):

corpus store/
    store.json          entry index and ingest settings
    skeleton.json       shared skeleton (all entries must match)
    entries/<id>/       root.npy, quats.npy, contacts.npy, beats.json, meta.json

bundle/
    manifest.json       K, d (requested and effective), J, fps, word_frames, flat_dim
    centroids.f32       row-major little-endian float32, K x d_eff
    transition.json     dense rows
    basis.f32           mean row then d_eff projection rows, little-endian float32
    motifs/             one BVH per representative word
    skeleton.json, templates.json, assignments.json
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bvh as bvh_io
from .audio import BeatGrid, load_features, save_features
from .choreography import MotifConstraint
from .config import ProjectConfig
from .core import Joint, MotionClip, Skeleton, antipodal_correct
from .motifs import (EmbeddingBasis, MotifTable, MotionWord, build_motif_table,
                     compute_signature, segment_words, template_signature)
from .motionio import detect_foot_contacts, load_manifest, resample
from .synthesis import (SynthesisPlan, SynthesisResult, clean_foot_sliding,
                        smooth_root_orientation, synthesize_graph)


def _dump_json(data, path: Path) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")


def skeleton_to_dict(skeleton: Skeleton) -> dict:
    return {
        "fps": skeleton.fps,
        "units": skeleton.units,
        "left_foot": skeleton.left_foot,
        "right_foot": skeleton.right_foot,
        "joints": [{
            "name": j.name, "parent": j.parent, "offset": list(j.offset),
            "is_end_site": j.is_end_site, "channel_order": j.channel_order,
        } for j in skeleton.joints],
    }


def skeleton_from_dict(data: dict) -> Skeleton:
    joints = tuple(Joint(j["name"], j["parent"], tuple(j["offset"]),
                         j["is_end_site"], j["channel_order"])
                   for j in data["joints"])
    return Skeleton(joints, fps=data["fps"], units=data["units"],
                    left_foot=data.get("left_foot"), right_foot=data.get("right_foot"))


@dataclass
class StoreEntry:
    entry_id: str
    genre: str
    root_disp: np.ndarray
    rotations: np.ndarray
    contacts: np.ndarray
    grid: BeatGrid

    @property
    def num_frames(self) -> int:
        return len(self.rotations)

    def clip(self, skeleton: Skeleton, fps: float) -> MotionClip:
        return MotionClip(skeleton, self.root_disp.copy(), self.rotations.copy(), fps)


@dataclass
class CorpusStore:
    skeleton: Skeleton
    fps: float
    entries: list[StoreEntry]

    def entry(self, entry_id: str) -> StoreEntry:
        for e in self.entries:
            if e.entry_id == entry_id:
                return e
        raise KeyError(f"no store entry {entry_id!r}")

    def genres(self) -> list[str]:
        return sorted({e.genre for e in self.entries})


def ingest_corpus(manifest_path: str | Path, config: ProjectConfig) -> CorpusStore:
    """Parse, sign-correct, resample, label contacts for every manifest entry."""
    items = load_manifest(manifest_path)
    entries: list[StoreEntry] = []
    skeleton: Skeleton | None = None
    for item in items:
        text = Path(item.bvh_path).read_text()
        clip = bvh_io.parse_bvh(text, units=config.units)
        clip = antipodal_correct(clip)
        if clip.fps > config.fps:
            clip = resample(clip, config.fps)
        elif clip.fps < config.fps:
            raise ValueError(f"{item.bvh_path}: clip fps {clip.fps} below target "
                             f"{config.fps}; upsampling is unsupported")
        if skeleton is None:
            feet = {}
            if config.left_foot:
                feet = {"left_foot": config.left_foot, "right_foot": config.right_foot}
            base = clip.skeleton
            skeleton = Skeleton(base.joints, fps=config.fps, units=config.units,
                                **feet) if feet else base
        elif [j.name for j in clip.skeleton.joints] != [j.name for j in skeleton.joints]:
            raise ValueError(f"{item.bvh_path}: skeleton differs from the corpus skeleton")
        grid = load_features(item.beats_path)
        if len(grid.beat_frames) and grid.beat_frames[-1] > clip.num_frames:
            raise ValueError(f"{item.beats_path}: beats extend beyond the clip")
        try:
            contacts = detect_foot_contacts(
                clip, config.contact_height, config.contact_speed,
                config.left_foot or None, config.right_foot or None)
        except ValueError:
            contacts = np.zeros((clip.num_frames, 2), dtype=np.int8)
        digest = hashlib.sha256()
        digest.update(text.encode())
        digest.update(Path(item.beats_path).read_bytes())
        digest.update(item.genre.encode())
        entries.append(StoreEntry(digest.hexdigest()[:16], item.genre,
                                  clip.root_disp, clip.rotations, contacts, grid))
    if skeleton is None:
        skeleton = Skeleton((Joint("root", -1, (0.0, 0.0, 0.0)),), fps=config.fps)
    return CorpusStore(skeleton, config.fps, entries)


def save_store(store: CorpusStore, out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / "entries").mkdir(parents=True, exist_ok=True)
    _dump_json(skeleton_to_dict(store.skeleton), out / "skeleton.json")
    index = {"version": 1, "fps": store.fps,
             "entries": [{"id": e.entry_id, "genre": e.genre, "frames": e.num_frames}
                         for e in store.entries]}
    _dump_json(index, out / "store.json")
    for e in store.entries:
        edir = out / "entries" / e.entry_id
        edir.mkdir(parents=True, exist_ok=True)
        np.save(edir / "root.npy", e.root_disp)
        np.save(edir / "quats.npy", e.rotations)
        np.save(edir / "contacts.npy", e.contacts)
        save_features(e.grid, edir / "beats.json")
        _dump_json({"id": e.entry_id, "genre": e.genre}, edir / "meta.json")


def load_store(path: str | Path) -> CorpusStore:
    root = Path(path)
    index = json.loads((root / "store.json").read_text())
    skeleton = skeleton_from_dict(json.loads((root / "skeleton.json").read_text()))
    entries = []
    for row in index["entries"]:
        edir = root / "entries" / row["id"]
        entries.append(StoreEntry(
            row["id"], row["genre"],
            np.load(edir / "root.npy"), np.load(edir / "quats.npy"),
            np.load(edir / "contacts.npy"), load_features(edir / "beats.json")))
    return CorpusStore(skeleton, index["fps"], entries)


@dataclass
class Bundle:
    table: MotifTable
    skeleton: Skeleton
    fps: float
    word_frames: int
    templates: dict[str, np.ndarray]
    assignments: dict[str, dict]  # entry id -> {"clusters": [...], "spans": [[a,b]...]}
    rep_refs: list[dict]  # per cluster: {"entry": id, "word": index}
    member_counts: list[int]

    @property
    def num_clusters(self) -> int:
        return self.table.num_clusters

    def template(self, genre: str | None = None) -> np.ndarray:
        if genre is None:
            genre = "combined"
        if genre not in self.templates:
            raise KeyError(f"no template for genre {genre!r}")
        return self.templates[genre]

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.table.centroids.astype("<f8").tobytes())
        digest.update(self.table.transition.astype("<f8").tobytes())
        digest.update(self.table.basis.projection.astype("<f8").tobytes())
        for genre in sorted(self.templates):
            digest.update(genre.encode())
            digest.update(self.templates[genre].astype("<f8").tobytes())
        return digest.hexdigest()[:16]


def build_bundle(store: CorpusStore, config: ProjectConfig, seed: int | None = None,
                 clusters: int | None = None) -> Bundle:
    """Segment all entries, fit the embedding, cluster, count transitions,
    and average per-genre (plus combined) template signatures."""
    k = clusters or config.clusters
    seed = config.seed if seed is None else seed
    words: list[MotionWord] = []
    tags: list[int] = []
    offsets: dict[str, tuple[int, int]] = {}
    for tag, entry in enumerate(store.entries):
        clip = entry.clip(store.skeleton, store.fps)
        entry_words = segment_words(clip, entry.contacts, entry.grid)
        offsets[entry.entry_id] = (len(words), len(entry_words))
        words.extend(entry_words)
        tags.extend([tag] * len(entry_words))
    if len(words) < k:
        raise ValueError(f"corpus yields {len(words)} words for {k} clusters")
    table, labels = build_motif_table(words, k, seed=seed, dim=config.embedding_dim,
                                      word_frames=config.word_frames,
                                      streams_by_word=tags)

    assignments = {}
    genre_streams: dict[str, list[list[int]]] = {}
    for entry in store.entries:
        start, count = offsets[entry.entry_id]
        ids = labels[start : start + count].tolist()
        spans = [list(words[start + i].beat_span) for i in range(count)]
        assignments[entry.entry_id] = {"clusters": ids, "spans": spans}
        genre_streams.setdefault(entry.genre, []).append(ids)
    templates = {genre: template_signature(streams, k)
                 for genre, streams in genre_streams.items()}
    templates["combined"] = template_signature(
        [s for streams in genre_streams.values() for s in streams], k)

    rep_refs = []
    vectors_start = {e.entry_id: offsets[e.entry_id] for e in store.entries}
    for i in range(k):
        rep = table.motif_words[i]
        ref = None
        for entry in store.entries:
            start, count = vectors_start[entry.entry_id]
            for w in range(count):
                if words[start + w].beat_span == rep.beat_span and \
                        labels[start + w] == i and \
                        np.array_equal(words[start + w].rotations, rep.rotations):
                    ref = {"entry": entry.entry_id, "word": w}
                    break
            if ref:
                break
        rep_refs.append(ref or {"entry": store.entries[0].entry_id, "word": 0})
    member_counts = [int((labels == i).sum()) for i in range(k)]
    return Bundle(table, store.skeleton, store.fps, config.word_frames,
                  templates, assignments, rep_refs, member_counts)


def save_bundle(bundle: Bundle, out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / "motifs").mkdir(parents=True, exist_ok=True)
    table = bundle.table
    manifest = {
        "version": 1,
        "K": table.num_clusters,
        "d": table.basis.target_dim,
        "d_effective": table.basis.dim,
        "J": bundle.skeleton.num_joints,
        "fps": bundle.fps,
        "word_frames": bundle.word_frames,
        "flat_dim": table.basis.flat_dim,
        "member_counts": bundle.member_counts,
    }
    _dump_json(manifest, out / "manifest.json")
    (out / "centroids.f32").write_bytes(table.centroids.astype("<f4").tobytes())
    _dump_json({"rows": table.transition.tolist()}, out / "transition.json")
    basis = np.vstack([table.basis.mean[None, :], table.basis.projection])
    (out / "basis.f32").write_bytes(basis.astype("<f4").tobytes())
    _dump_json(skeleton_to_dict(bundle.skeleton), out / "skeleton.json")
    _dump_json({g: t.tolist() for g, t in bundle.templates.items()},
               out / "templates.json")
    _dump_json({"entries": bundle.assignments, "representatives": bundle.rep_refs},
               out / "assignments.json")
    for i, word in enumerate(table.motif_words):
        clip = MotionClip(bundle.skeleton, word.root_disp, word.rotations, bundle.fps)
        (out / "motifs" / f"motif_{i:04d}.bvh").write_text(bvh_io.write_bvh(clip))


def load_bundle(path: str | Path) -> Bundle:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    k = manifest["K"]
    d_eff = manifest["d_effective"]
    flat = manifest["flat_dim"]
    skeleton = skeleton_from_dict(json.loads((root / "skeleton.json").read_text()))
    centroids = np.frombuffer((root / "centroids.f32").read_bytes(),
                              dtype="<f4").astype(float).reshape(k, d_eff)
    transition = np.array(json.loads((root / "transition.json").read_text())["rows"])
    raw = np.frombuffer((root / "basis.f32").read_bytes(), dtype="<f4")
    raw = raw.astype(float).reshape(d_eff + 1, flat)
    basis = EmbeddingBasis(raw[0], raw[1:], manifest["word_frames"], manifest["d"])
    templates = {g: np.array(t) for g, t in
                 json.loads((root / "templates.json").read_text()).items()}
    assignments_doc = json.loads((root / "assignments.json").read_text())
    motif_words = []
    for i in range(k):
        clip = bvh_io.parse_bvh((root / "motifs" / f"motif_{i:04d}.bvh").read_text())
        motif_words.append(MotionWord(
            clip.root_disp, clip.rotations,
            np.zeros((clip.num_frames, 2), dtype=np.int8), (0, clip.num_frames)))
    table = MotifTable(centroids, motif_words, transition, basis)
    return Bundle(table, skeleton, manifest["fps"], manifest["word_frames"],
                  templates, assignments_doc["entries"],
                  assignments_doc["representatives"], manifest["member_counts"])


def members_by_cluster(bundle: Bundle, store: CorpusStore) -> dict[int, list[MotionWord]]:
    """Rebuild every corpus word grouped by its assigned cluster."""
    members: dict[int, list[MotionWord]] = {i: [] for i in range(bundle.num_clusters)}
    for entry_id, doc in bundle.assignments.items():
        entry = store.entry(entry_id)
        for cluster, (a, b) in zip(doc["clusters"], doc["spans"]):
            members[int(cluster)].append(MotionWord(
                entry.root_disp[a:b].copy(), entry.rotations[a:b].copy(),
                entry.contacts[a:b].copy(), (int(a), int(b))))
    return members


def representative_word(bundle: Bundle, store: CorpusStore, cluster: int) -> MotionWord:
    ref = bundle.rep_refs[cluster]
    doc = bundle.assignments[ref["entry"]]
    a, b = doc["spans"][ref["word"]]
    entry = store.entry(ref["entry"])
    return MotionWord(entry.root_disp[a:b].copy(), entry.rotations[a:b].copy(),
                      entry.contacts[a:b].copy(), (int(a), int(b)))


@dataclass
class ClipRecord:
    clip_id: str
    result: SynthesisResult
    request: dict
    contact_spans: list[dict]

    def sidecar(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "fps": self.result.clip.fps,
            "frames": self.result.clip.num_frames,
            "motif_timeline": self.result.timeline,
            "signature_trace": self.result.signature_trace,
            "contact_spans": self.contact_spans,
            "flags": self.result.flags,
            "request": self.request,
        }


def contact_spans(contacts: np.ndarray) -> list[dict]:
    spans = []
    for col, side in ((0, "left"), (1, "right")):
        start = None
        track = np.asarray(contacts)[:, col]
        for t, v in enumerate(track):
            if v and start is None:
                start = t
            elif not v and start is not None:
                spans.append({"side": side, "start": start, "end": t - 1})
                start = None
        if start is not None:
            spans.append({"side": side, "start": start, "end": len(track) - 1})
    return spans


def synthesize_clip(bundle: Bundle, store: CorpusStore | None, request: dict,
                    config: ProjectConfig) -> ClipRecord:
    """Run the graph backend for a synthesize request and post-process.

    Request fields: beats (grid dict or path) or bpm + duration_beats;
    backend; seed; constraints [{beat, motif}]; style; genre; mode; motifs
    (explicit id list, overrides sampling).
    """
    from .audio import synth_beat_grid

    backend = request.get("backend", "graph")
    seed = int(request.get("seed", config.seed))
    genre = request.get("genre")
    if "beats" in request and request["beats"]:
        grid = _grid_from_request(request["beats"])
    elif "bpm" in request:
        beats = int(request.get("duration_beats", 32))
        bpm = float(request["bpm"])
        frames = int(round(beats * bundle.fps * 60.0 / bpm)) + 1
        grid = synth_beat_grid(bpm, bundle.fps, frames, seed=seed)
    else:
        raise ValueError("request needs beats or bpm")
    constraints = [MotifConstraint(int(c["beat"]), int(c["motif"]))
                   for c in request.get("constraints", [])]
    motif_ids = request.get("motifs")
    plan = SynthesisPlan(
        grid,
        motif_ids=[int(m) for m in motif_ids] if motif_ids else None,
        target_signature=bundle.template(genre),
        constraints=constraints,
        seed=seed,
        mode=request.get("mode", config.sampler_mode),
        style=request.get("style", "none"),
        beta=float(request.get("beta", config.beta)),
        blend_frames=config.blend_frames,
    )
    if backend == "graph":
        if store is None:
            raise ValueError("graph backend needs a corpus store")
        members = members_by_cluster(bundle, store)
        result = synthesize_graph(plan, bundle.table, members, bundle.skeleton)
    elif backend == "lstm":
        result = _synthesize_lstm(bundle, plan, request, config)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    flags = list(result.flags)
    clip = result.clip
    contacts = result.contacts
    try:
        clip, ik_flags = clean_foot_sliding(clip, contacts, blend=config.blend_frames)
        flags.extend(ik_flags)
    except ValueError:
        flags.append({"reason": "foot cleanup skipped: no leg chains resolved"})
    if config.smooth_window > 1:
        clip = smooth_root_orientation(clip, config.smooth_window)
    result = SynthesisResult(clip, contacts, result.motif_ids, result.timeline,
                             result.signature_trace, flags)

    canonical = {
        "backend": backend, "seed": seed, "genre": genre,
        "mode": plan.mode, "style": plan.style,
        "beats": grid.beat_frames.tolist(),
        "constraints": [{"beat": c.beat, "motif": c.motif} for c in constraints],
        "motifs": plan.motif_ids,
        "bundle": bundle.content_hash(),
    }
    clip_id = hashlib.sha256(
        json.dumps(canonical, sort_keys=True).encode()).hexdigest()[:16]
    return ClipRecord(clip_id, result, canonical, contact_spans(contacts))


def _grid_from_request(beats) -> BeatGrid:
    if isinstance(beats, (str, Path)):
        return load_features(beats)
    if isinstance(beats, dict):
        from .audio import SPECTRAL_DIM
        return BeatGrid(
            fps=float(beats["fps"]),
            beat_frames=np.array(beats["beat_frames"], dtype=int),
            rhythmic=np.array(beats["rhythmic"], dtype=float),
            spectral=np.array(beats["spectral"], dtype=float).reshape(-1, SPECTRAL_DIM)
            if beats["spectral"] else np.zeros((0, SPECTRAL_DIM)),
        )
    raise ValueError("beats must be a feature file path or a grid document")


def _synthesize_lstm(bundle: Bundle, plan: SynthesisPlan, request: dict,
                     config: ProjectConfig) -> SynthesisResult:
    from .choreography import convergence_trace, run_choreography
    from .neural.model import RolloutPlan, rollout
    from .neural.training import load_checkpoint

    checkpoint = request.get("checkpoint")
    if not checkpoint or not Path(checkpoint).exists():
        raise ValueError("lstm backend needs an existing --checkpoint file")
    params, net_config = load_checkpoint(checkpoint)
    if net_config.num_joints != bundle.skeleton.num_joints:
        raise ValueError("checkpoint joint count does not match the bundle")
    grid = plan.grid
    n_intervals = grid.num_intervals
    if plan.motif_ids is not None:
        motif_ids = plan.motif_ids
        trace = convergence_trace(motif_ids, plan.target_signature) \
            if plan.target_signature is not None else []
    else:
        motif_ids, trace = run_choreography(
            bundle.table.transition, plan.target_signature, n_intervals,
            seed=plan.seed, constraints=plan.constraints, mode=plan.mode)

    motif_vectors = np.zeros((grid.num_frames, net_config.motif_dim))
    for k in range(n_intervals):
        a, b = grid.beat_frames[k], grid.beat_frames[k + 1]
        motif_vectors[a:b] = bundle.table.centroids[motif_ids[k]]
    motif_vectors[grid.beat_frames[-1] :] = bundle.table.centroids[motif_ids[-1]]

    rep = bundle.table.motif_words[motif_ids[0]]
    prime = min(len(rep.rotations), 15, int(grid.beat_frames[0]) + 1) or 1
    initial_poses = np.concatenate(
        [rep.root_disp[:prime], rep.rotations[:prime].reshape(prime, -1)], axis=1)
    initial_contacts = rep.contacts[:prime].astype(float)
    steps = int(grid.beat_frames[-1] - grid.beat_frames[0])
    rplan = RolloutPlan(grid.rhythmic, motif_vectors, grid.beat_frames)
    poses, contact_probs, _ = rollout(params, net_config, initial_poses,
                                      initial_contacts, rplan, steps)
    j = bundle.skeleton.num_joints
    clip = MotionClip(bundle.skeleton, poses[:, :3],
                      poses[:, 3:].reshape(steps, j, 4), grid.fps)
    contacts = (contact_probs > 0.5).astype(np.int8)
    timeline = [{"beat": k, "motif": int(motif_ids[k]),
                 "start_frame": int(grid.beat_frames[k]),
                 "end_frame": int(grid.beat_frames[k + 1])}
                for k in range(n_intervals)]
    return SynthesisResult(clip, contacts, list(motif_ids), timeline, trace, [])


def save_record(record: ClipRecord, clips_dir: str | Path) -> Path:
    out = Path(clips_dir) / record.clip_id
    out.mkdir(parents=True, exist_ok=True)
    (out / "clip.bvh").write_text(bvh_io.write_bvh(record.result.clip))
    _dump_json(record.sidecar(), out / "sidecar.json")
    return out


def training_sequences(store: CorpusStore, bundle: Bundle) -> list:
    """TrainSequences for the pose generator: per-frame conditioning built
    from the beat grid and the centroid vector of each word's cluster."""
    from .neural.training import TrainSequence

    j = store.skeleton.num_joints
    d = bundle.table.basis.dim
    sequences = []
    for entry in store.entries:
        doc = bundle.assignments.get(entry.entry_id)
        if doc is None:
            continue
        n = entry.num_frames
        poses = np.concatenate([entry.root_disp,
                                entry.rotations.reshape(n, 4 * j)], axis=1)
        rhythmic = np.zeros((n, 4))
        rows = min(n, entry.grid.num_frames)
        rhythmic[:rows] = entry.grid.rhythmic[:rows]
        motif_vectors = np.zeros((n, d))
        spans, targets = [], []
        for cluster, (a, b) in zip(doc["clusters"], doc["spans"]):
            vec = bundle.table.centroids[int(cluster)]
            motif_vectors[a:b] = vec
            spans.append((int(a), int(b)))
            targets.append(vec)
        if spans:
            motif_vectors[: spans[0][0]] = targets[0]
            motif_vectors[spans[-1][1] :] = targets[-1]
        sequences.append(TrainSequence(
            rhythmic, motif_vectors, poses, entry.contacts.astype(float),
            spans, np.array(targets)))
    return sequences
