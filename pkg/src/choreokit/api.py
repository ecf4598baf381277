"""HTTP JSON API for scripts and the authoring UI.

The bundle (and optional corpus store) are loaded once per process and never
mutated; synthesis requests run on a bounded worker pool and results are
persisted under the clip directory keyed by content hash, so identical
requests return identical clips.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from . import bvh as bvh_io
from .config import ProjectConfig
from .motifs import timescale_word
from .store import (Bundle, ClipRecord, CorpusStore, load_bundle, load_store,
                    save_record, synthesize_clip)

MAX_CONCURRENT_SYNTHESES = 4


def create_app(bundle_path: str | Path, store_path: str | Path | None,
               clips_dir: str | Path, config: ProjectConfig) -> FastAPI:
    bundle = load_bundle(bundle_path)
    store = load_store(store_path) if store_path else None
    clips = Path(clips_dir)
    clips.mkdir(parents=True, exist_ok=True)
    records: dict[str, ClipRecord] = {}
    write_lock = threading.Lock()
    workers = threading.Semaphore(MAX_CONCURRENT_SYNTHESES)

    app = FastAPI(title="choreokit", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/api/dataset")
    def dataset():
        entries = []
        if store is not None:
            entries = [{"id": e.entry_id, "genre": e.genre, "frames": e.num_frames,
                        "beats": len(e.grid.beat_frames)} for e in store.entries]
        return {
            "clusters": bundle.num_clusters,
            "embedding_dim": bundle.table.basis.dim,
            "joints": bundle.skeleton.num_joints,
            "fps": bundle.fps,
            "word_frames": bundle.word_frames,
            "genres": sorted(g for g in bundle.templates if g != "combined"),
            "entries": entries,
        }

    @app.get("/api/motifs")
    def motifs(genre: str | None = None):
        try:
            template = bundle.template(genre)
        except KeyError as exc:
            raise HTTPException(404, str(exc)) from None
        out = []
        for i, word in enumerate(bundle.table.motif_words):
            preview = timescale_word(word, bundle.word_frames)
            out.append({
                "id": i,
                "member_count": bundle.member_counts[i],
                "template_frequency": float(template[i]),
                "preview": {
                    "fps": bundle.fps,
                    "root_displacement": preview.root_disp.tolist(),
                    "quaternions": preview.rotations.tolist(),
                },
            })
        return out

    @app.get("/api/signature/template")
    def template(genre: str | None = None):
        try:
            values = bundle.template(genre)
        except KeyError as exc:
            raise HTTPException(404, str(exc)) from None
        return {"genre": genre or "combined", "signature": values.tolist()}

    @app.post("/api/synthesize")
    def synthesize(request: dict):
        if not isinstance(request, dict):
            raise HTTPException(400, "request body must be a JSON object")
        with workers:
            try:
                record = synthesize_clip(bundle, store, request, config)
            except (ValueError, KeyError) as exc:
                raise HTTPException(400, f"bad synthesize request: {exc}") from None
        with write_lock:
            records[record.clip_id] = record
            save_record(record, clips)
        sidecar = record.sidecar()
        sidecar["motif_ids"] = record.result.motif_ids
        return sidecar

    def _record(clip_id: str) -> ClipRecord:
        record = records.get(clip_id)
        if record is None:
            raise HTTPException(404, f"no clip {clip_id!r}")
        return record

    @app.get("/api/clips/{clip_id}")
    def clip(clip_id: str):
        record = _record(clip_id)
        result = record.result
        skeleton = result.clip.skeleton
        return {
            "clip_id": clip_id,
            "fps": result.clip.fps,
            "frames": result.clip.num_frames,
            "joints": [{"name": j.name, "parent": j.parent, "offset": list(j.offset),
                        "is_end_site": j.is_end_site} for j in skeleton.joints],
            "root_displacement": result.clip.root_disp.tolist(),
            "quaternions": result.clip.rotations.tolist(),
            "motif_timeline": result.timeline,
            "signature_trace": result.signature_trace,
            "contact_spans": record.contact_spans,
            "flags": result.flags,
        }

    @app.get("/api/clips/{clip_id}/bvh")
    def clip_bvh(clip_id: str):
        record = _record(clip_id)
        return PlainTextResponse(bvh_io.write_bvh(record.result.clip))

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
