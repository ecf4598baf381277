"""HTTP API surface: dataset, motifs, templates, synthesize, clip retrieval."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from choreokit.api import create_app
from choreokit.config import ProjectConfig
from choreokit.store import build_bundle, ingest_corpus, save_bundle, save_store

from corpus_fixture import write_corpus


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    root = tmp_path_factory.mktemp("api")
    write_corpus(root / "corpus", n_clips_per_genre=4, words_per_clip=14,
                 genres=("alpha",), seed=11)
    config = ProjectConfig(clusters=8, embedding_dim=12, word_frames=13, seed=0)
    store = ingest_corpus(root / "corpus" / "manifest.json", config)
    bundle = build_bundle(store, config)
    save_store(store, root / "store")
    save_bundle(bundle, root / "bundle")
    app = create_app(root / "bundle", root / "store", root / "clips", config)
    return TestClient(app)


class TestReadEndpoints:
    def test_dataset(self, client):
        data = client.get("/api/dataset").json()
        assert data["clusters"] == 8
        assert data["genres"] == ["alpha"]
        assert len(data["entries"]) == 4

    def test_motifs_returns_k_entries(self, client):
        motifs = client.get("/api/motifs").json()
        assert len(motifs) == 8
        freq = sum(m["template_frequency"] for m in motifs)
        assert freq == pytest.approx(1.0, abs=1e-9)
        preview = motifs[0]["preview"]
        assert len(preview["quaternions"]) == 13
        assert len(preview["root_displacement"]) == 13

    def test_template(self, client):
        doc = client.get("/api/signature/template", params={"genre": "alpha"}).json()
        assert len(doc["signature"]) == 8
        assert sum(doc["signature"]) == pytest.approx(1.0, abs=1e-9)

    def test_unknown_genre_404(self, client):
        assert client.get("/api/signature/template",
                          params={"genre": "nope"}).status_code == 404


class TestSynthesize:
    def test_roundtrip(self, client):
        request = {"bpm": 120, "duration_beats": 8, "seed": 5, "genre": "alpha"}
        response = client.post("/api/synthesize", json=request)
        assert response.status_code == 200
        doc = response.json()
        clip_id = doc["clip_id"]
        assert len(doc["motif_timeline"]) == 8

        clip = client.get(f"/api/clips/{clip_id}").json()
        span = doc["request"]["beats"][-1] - doc["request"]["beats"][0]
        assert clip["frames"] == span
        assert len(clip["quaternions"]) == clip["frames"]
        assert len(clip["root_displacement"]) == clip["frames"]
        assert [j["name"] for j in clip["joints"]][0] == "Hips"

        bvh_text = client.get(f"/api/clips/{clip_id}/bvh").text
        assert bvh_text.startswith("HIERARCHY")
        assert f"Frames: {clip['frames']}" in bvh_text

    def test_constraints_echoed(self, client):
        pins = [{"beat": 1, "motif": 3}, {"beat": 4, "motif": 6}]
        doc = client.post("/api/synthesize", json={
            "bpm": 120, "duration_beats": 6, "seed": 2, "constraints": pins}).json()
        timeline = {seg["beat"]: seg["motif"] for seg in doc["motif_timeline"]}
        assert timeline[1] == 3
        assert timeline[4] == 6

    def test_same_request_same_clip_id(self, client):
        request = {"bpm": 120, "duration_beats": 5, "seed": 8}
        a = client.post("/api/synthesize", json=request).json()
        b = client.post("/api/synthesize", json=request).json()
        assert a["clip_id"] == b["clip_id"]

    def test_malformed_body_400(self, client):
        response = client.post("/api/synthesize", json={"nonsense": True})
        assert response.status_code == 400
        assert "error" in response.json() or "detail" in response.json()
        response = client.post("/api/synthesize",
                               content=b"not json",
                               headers={"content-type": "application/json"})
        assert response.status_code == 400

    def test_unknown_clip_404(self, client):
        assert client.get("/api/clips/deadbeef").status_code == 404
