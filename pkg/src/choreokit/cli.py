"""Command-line interface: ingest, features, cluster, synth, eval, train, serve.

Every command is deterministic under a fixed --seed; artifacts embed the
request that produced them. Reports write CSV + PNG + JSON side by side.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bvh as bvh_io
from .audio import grid_from_audio, load_features, load_wav, save_features, synth_beat_grid
from .config import load_config
from .evaluation import alignment_report, kinematic_beats, signature_report
from .report import write_beat_report, write_signature_report
from .store import (build_bundle, ingest_corpus, load_bundle, load_store,
                    save_bundle, save_record, save_store, synthesize_clip)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choreokit",
        description="Music-driven dance synthesis: corpus ingestion, motif "
                    "clustering, signature-guided choreography, evaluation.")
    parser.add_argument("--config", help="project config file (key=value sections); "
                                         "defaults to $CHOREOKIT_CONFIG")
    parser.add_argument("--seed", type=int, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a corpus manifest into a store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("features", help="produce beat-grid feature files")
    fsub = p.add_subparsers(dest="features_command", required=True)
    fs = fsub.add_parser("synth", help="synthetic grid at a fixed tempo")
    fs.add_argument("--bpm", type=float, required=True)
    fs.add_argument("--frames", type=int, required=True)
    fs.add_argument("--out", required=True)
    ft = fsub.add_parser("track", help="track beats in a WAV file")
    ft.add_argument("--wav", required=True)
    ft.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="build a motif-table bundle from a store")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clusters", type=int, help="override [motif] clusters")

    p = sub.add_parser("synth", help="synthesize a clip from a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--store", help="corpus store (required for the graph backend)")
    p.add_argument("--out", required=True)
    p.add_argument("--beats", help="beat-grid feature file")
    p.add_argument("--bpm", type=float)
    p.add_argument("--duration-beats", type=int, default=32)
    p.add_argument("--backend", choices=["graph", "lstm"], default="graph")
    p.add_argument("--checkpoint", help="weights for the lstm backend")
    p.add_argument("--constraints", help="JSON file: [{beat, motif}, ...]")
    p.add_argument("--motifs", help="JSON file: explicit motif id list")
    p.add_argument("--style", default="none",
                   help="none | grid | preset:subtle | preset:strong")
    p.add_argument("--genre", help="template signature to target")
    p.add_argument("--mode", choices=["deficit", "absolute"])

    p = sub.add_parser("eval", help="evaluation reports (CSV + PNG + JSON)")
    esub = p.add_subparsers(dest="eval_command", required=True)
    eb = esub.add_parser("beats", help="kinematic vs music beat alignment")
    eb.add_argument("--bvh", required=True)
    eb.add_argument("--beats", required=True, help="beat-grid feature file")
    eb.add_argument("--out", required=True)
    es = esub.add_parser("signature", help="signature convergence of a clip")
    es.add_argument("--sidecar", required=True, help="sidecar.json of a synthesized clip")
    es.add_argument("--bundle", required=True)
    es.add_argument("--genre")
    es.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the pose generator on a store+bundle")
    p.add_argument("--store", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True, help="checkpoint file")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--curve", help="optional loss-curve CSV path")

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--bundle", required=True)
    p.add_argument("--store")
    p.add_argument("--clips", default="clips")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8420)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        return _dispatch(args, config)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args, config) -> int:
    if args.command == "ingest":
        store = ingest_corpus(args.manifest, config)
        save_store(store, args.out)
        print(f"ingested {len(store.entries)} entries -> {args.out}")
        return 0

    if args.command == "features":
        if args.features_command == "synth":
            grid = synth_beat_grid(args.bpm, config.fps, args.frames, seed=config.seed)
        else:
            samples, rate = load_wav(args.wav)
            grid = grid_from_audio(samples, rate, seed=config.seed,
                                   output_fps=config.fps)
        save_features(grid, args.out)
        print(f"wrote {len(grid.beat_frames)} beats -> {args.out}")
        return 0

    if args.command == "cluster":
        store = load_store(args.store)
        bundle = build_bundle(store, config, seed=config.seed, clusters=args.clusters)
        save_bundle(bundle, args.out)
        print(f"clustered {sum(bundle.member_counts)} words into "
              f"{bundle.num_clusters} motifs -> {args.out}")
        return 0

    if args.command == "synth":
        bundle = load_bundle(args.bundle)
        store = load_store(args.store) if args.store else None
        request: dict = {"backend": args.backend, "seed": config.seed,
                         "style": args.style}
        if args.beats:
            request["beats"] = args.beats
        elif args.bpm:
            request["bpm"] = args.bpm
            request["duration_beats"] = args.duration_beats
        else:
            raise ValueError("synth needs --beats or --bpm")
        if args.constraints:
            request["constraints"] = json.loads(Path(args.constraints).read_text())
        if args.motifs:
            request["motifs"] = json.loads(Path(args.motifs).read_text())
        if args.genre:
            request["genre"] = args.genre
        if args.mode:
            request["mode"] = args.mode
        if args.checkpoint:
            request["checkpoint"] = args.checkpoint
        record = synthesize_clip(bundle, store, request, config)
        out = save_record(record, args.out)
        print(f"clip {record.clip_id}: {record.result.clip.num_frames} frames -> {out}")
        return 0

    if args.command == "eval":
        if args.eval_command == "beats":
            clip = bvh_io.parse_bvh(Path(args.bvh).read_text())
            grid = load_features(args.beats)
            kin = kinematic_beats(clip, config.sg_window, config.sg_order)
            report = alignment_report(kin, grid.beat_frames, config.tolerance)
            summary = write_beat_report(clip, report, args.out,
                                        config.sg_window, config.sg_order)
            print(json.dumps(summary, indent=2, sort_keys=True))
        else:
            sidecar = json.loads(Path(args.sidecar).read_text())
            bundle = load_bundle(args.bundle)
            stream = [seg["motif"] for seg in sidecar["motif_timeline"]]
            target = bundle.template(args.genre)
            report = signature_report(stream, target)
            summary = write_signature_report(report, args.out)
            print(json.dumps(summary, indent=2, sort_keys=True))
        return 0

    if args.command == "train":
        return _train_command(args, config)

    if args.command == "serve":
        import uvicorn

        from .api import create_app

        app = create_app(args.bundle, args.store, args.clips, config)
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
        return 0

    raise ValueError(f"unknown command {args.command!r}")


def _train_command(args, config) -> int:
    from .neural.model import NetConfig
    from .neural.training import save_checkpoint, train
    from .store import training_sequences

    store = load_store(args.store)
    bundle = load_bundle(args.bundle)
    net_config = NetConfig(
        num_joints=bundle.skeleton.num_joints,
        motif_dim=bundle.table.basis.dim,
        hidden=config.hidden, layers=config.layers,
        lambda_perceptual=config.lambda_perceptual,
        learning_rate=config.learning_rate, batch_size=config.batch_size,
        window=config.window, gt_len=config.gt_len, self_len=config.self_len)
    sequences = training_sequences(store, bundle)
    params, curve = train(sequences, net_config, bundle.skeleton,
                          seed=config.seed, iterations=args.iterations,
                          basis=bundle.table.basis)
    save_checkpoint(params, net_config, args.out)
    if args.curve:
        with open(args.curve, "w") as fh:
            fh.write("iteration,loss\n")
            for i, v in enumerate(curve):
                fh.write(f"{i},{v:.9f}\n")
    print(f"trained {args.iterations} iterations, final loss {curve[-1]:.6f} "
          f"-> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
