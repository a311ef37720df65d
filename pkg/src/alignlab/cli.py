"""Command-line interface.

Subcommands: synth, gen (pope|vg|kg|negcap|region), train, probe, eval.
Flags override config-file values, which override built-in defaults; every
stochastic command requires a seed and all runs are byte-reproducible
under a fixed one. Exit codes: 0 success, 1 structured error, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from alignlab import benchgen, datagen, evaluation, probes, trainer
from alignlab.datastore import (
    EmbeddingRecord,
    load_embeddings,
    load_kg_triples,
    load_labeled_features,
    load_scene_graphs,
    save_embeddings,
    save_labeled_features,
    synth_planted_dataset,
)
from alignlab.errors import AlignLabError, ConfigError
from alignlab.losses import LossConfig
from alignlab.projector import ProjectorParams
from alignlab.text import derive_seed
from alignlab.trainer import ScheduleConfig, TrainingData

_SCHEDULE_ALIASES = {
    "separate": "separate",
    "integrated-fixed": "integrated_frozen",
    "integrated-learnable": "integrated_learnable",
}

_ASSUMED = ("beta", "tau1", "tau2", "frequency_threshold")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e


def _resolve(args, cfg: dict, name: str, default=None):
    """Precedence: CLI flag > config file > default."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _require_seed(value) -> int:
    if value is None:
        raise ConfigError("--seed is required for this command")
    return int(value)


def _out_dir(args, cfg) -> Path:
    out = Path(_resolve(args, cfg, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_defaults(pairs: dict) -> None:
    parts = []
    for k, v in pairs.items():
        marker = " (assumed)" if k in _ASSUMED else ""
        parts.append(f"{k}={v}{marker}")
    print("defaults: " + " ".join(parts))


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _require_seed(_resolve(args, cfg, "seed"))
    n_pairs = int(_resolve(args, cfg, "pairs", 512))
    dim = int(_resolve(args, cfg, "dim", 32))
    noise = float(_resolve(args, cfg, "noise", 0.1))
    n_classes = int(_resolve(args, cfg, "classes", 4))
    out = _out_dir(args, cfg)

    ds = synth_planted_dataset(seed, n_pairs, dim, noise, n_classes)
    save_embeddings(out / "planted", ds.records, pairing=ds.manifest.pairing)
    save_labeled_features(out / "latents", ds.latents)

    # Trivial caption/token files so the cosine probe can run on this set:
    # one token per pair whose embedding is the paired text vector.
    tokens = [
        EmbeddingRecord(id=f"w{k:05d}", modality="text", vector=r.vector)
        for k, r in enumerate(r for r in ds.records if r.modality == "text")
    ]
    save_embeddings(out / "tokens", tokens)
    captions = [
        json.dumps({"image_id": f"img{k:05d}", "caption": f"w{k:05d}"})
        for k in range(n_pairs)
    ]
    (out / "captions.jsonl").write_text("\n".join(captions) + "\n", encoding="utf-8")
    print(f"synth: wrote {n_pairs} pairs (dim {dim}, noise {noise}, "
          f"{n_classes} classes) to {out}")
    return 0


def _build_table(graphs, table_graphs_path):
    reference = (load_scene_graphs(table_graphs_path)
                 if table_graphs_path else graphs)
    return datagen.build_cooccurrence(reference)


def cmd_gen_pope(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _require_seed(_resolve(args, cfg, "seed"))
    graphs = load_scene_graphs(args.graphs)
    table = _build_table(graphs, args.table_graphs)
    mode = _resolve(args, cfg, "mode", "random")
    n_per_image = int(_resolve(args, cfg, "n_per_image", 3))
    out = _out_dir(args, cfg)
    items, warnings = benchgen.gen_pope(graphs, table, mode, n_per_image, seed)
    benchgen.write_qa_items(out / f"qa_pope_{mode}.jsonl", items)
    _write_warnings(out / f"qa_pope_{mode}_warnings.jsonl", warnings)
    print(f"gen pope: {len(items)} items ({mode}), {len(warnings)} skipped")
    return 0


def cmd_gen_vg(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _require_seed(_resolve(args, cfg, "seed"))
    threshold = int(_resolve(args, cfg, "frequency_threshold",
                             benchgen.DEFAULT_FREQUENCY_THRESHOLD))
    _print_defaults({"frequency_threshold": threshold})
    graphs = load_scene_graphs(args.graphs)
    out = _out_dir(args, cfg)
    items = benchgen.gen_vg_qa(graphs, threshold, seed)
    benchgen.write_qa_items(out / "qa_vg.jsonl", items)
    print(f"gen vg: {len(items)} items")
    return 0


def cmd_gen_kg(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _require_seed(_resolve(args, cfg, "seed"))
    triples = load_kg_triples(args.triples)
    entity_map = json.loads(Path(args.entity_map).read_text(encoding="utf-8"))
    out = _out_dir(args, cfg)
    items, warnings = benchgen.gen_kg_qa(triples, entity_map, seed)
    benchgen.write_qa_items(out / "qa_kg.jsonl", items)
    _write_warnings(out / "qa_kg_warnings.jsonl", warnings)
    print(f"gen kg: {len(items)} items, {len(warnings)} skipped")
    return 0


def cmd_gen_negcap(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _require_seed(_resolve(args, cfg, "seed"))
    mode = _resolve(args, cfg, "mode", "random")
    graphs = load_scene_graphs(args.graphs)
    table = _build_table(graphs, args.table_graphs)
    out = _out_dir(args, cfg)
    caps, skipped = [], 0
    for g in graphs:
        try:
            base = datagen.spanned_caption_from_scene_graph(g)
            if mode == "remove":
                n_remove = 1 if len(base.spans) < 2 else \
                    1 + (derive_seed(seed, "nrm", g.image_id) % 2)
                caps.append(datagen.perturb_caption_remove(
                    base, n_remove, derive_seed(seed, "rm", g.image_id)))
            else:
                pool = datagen.sample_negative_objects(
                    table, g.object_names(), mode, 3,
                    derive_seed(seed, "pool", g.image_id))
                caps.append(datagen.perturb_caption_insert(
                    base.text, pool, derive_seed(seed, "ins", g.image_id),
                    strategy=f"insert_{mode}", source_image_id=g.image_id))
        except AlignLabError:
            skipped += 1
    datagen.write_negative_captions(out / f"negcaps_{mode}.jsonl", caps)
    print(f"gen negcap: {len(caps)} captions ({mode}), {skipped} skipped")
    return 0


def cmd_gen_region(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _require_seed(_resolve(args, cfg, "seed"))
    graphs = load_scene_graphs(args.graphs)
    out = _out_dir(args, cfg)
    items, skipped = [], 0
    for g in graphs:
        try:
            items.append(datagen.gen_region_instruction(
                g, derive_seed(seed, "region", g.image_id)))
        except AlignLabError:
            skipped += 1
    datagen.write_region_instructions(out / "regions.jsonl", items)
    print(f"gen region: {len(items)} instructions, {skipped} skipped")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _require_seed(_resolve(args, cfg, "seed"))
    schedule_name = _SCHEDULE_ALIASES.get(args.schedule)
    if schedule_name is None:
        raise ConfigError(f"unknown schedule {args.schedule!r}")

    loss_cfg = LossConfig.from_dict(cfg.get("loss", {}))
    sched_raw = dict(cfg.get("schedule", {}))
    sched_raw.update(schedule=schedule_name, seed=seed)
    for flag, key in (("epochs", "epochs"), ("contrastive_epochs", "contrastive_epochs"),
                      ("batch_size", "batch_size"), ("lr", "learning_rate"),
                      ("lam", "lambda_init")):
        v = getattr(args, flag, None)
        if v is not None:
            sched_raw[key] = v
    sched = ScheduleConfig.from_dict(sched_raw)
    _print_defaults({
        "lambda_init": sched.lambda_init, "lambda1": loss_cfg.lambda1,
        "lambda2": loss_cfg.lambda2, "beta": loss_cfg.beta,
        "tau1": loss_cfg.tau1, "tau2": loss_cfg.tau2,
    })

    data_dir = Path(args.data)
    manifest, records = load_embeddings(data_dir / "planted")
    labels = load_labeled_features(data_dir / "latents").labels
    data = TrainingData.from_records(manifest, records, labels=labels)
    projector = ProjectorParams.init(
        data.dim, data.dim, n_layers=2,
        seed=derive_seed(seed, "projector-init"),
    )
    result = trainer.run_schedule(data, projector, loss_cfg, sched)
    out = _out_dir(args, cfg)
    trainer.save_checkpoint(out / "checkpoint", result.projector,
                            result.decoder, result.lam)
    trainer.write_train_log(out / "trainlog.jsonl", result.log)
    final = result.log[-1]["mean_pair_cosine"] if result.log else float("nan")
    print(f"train {args.schedule}: {len(result.log) - 1} steps, "
          f"final mean pair cosine {final:.4f}")
    return 0


def cmd_probe(args) -> int:
    cfg = _load_config_file(args.config)
    out = _out_dir(args, cfg)
    if args.task == "deltaperf":
        seed = _require_seed(_resolve(args, cfg, "seed"))
        pre = load_labeled_features(args.pre)
        post = load_labeled_features(args.post)
        report = probes.delta_perf(pre, post, seed)
        probes.write_report(out / "probe_report.json", report)
        print(report.summary_line())
        return 0
    if args.task == "cosine":
        data_dir = Path(args.data)
        projector, _, _ = trainer.load_checkpoint(args.checkpoint)
        _, records = load_embeddings(data_dir / "planted")
        images = {r.id: r.vector for r in records if r.modality == "image"}
        _, token_records = load_embeddings(data_dir / "tokens")
        token_table = {r.id: r.vector for r in token_records}
        captions = []
        for line in (data_dir / "captions.jsonl").read_text(encoding="utf-8").splitlines():
            if line.strip():
                raw = json.loads(line)
                captions.append((raw["image_id"], raw["caption"]))
        report = probes.alignment_cosine_probe(
            projector, images, token_table, captions, dataset_id=data_dir.name)
        probes.write_report(out / "cosine_report.json", report)
        print(report.summary_line())
        return 0
    raise ConfigError(f"unknown probe task {args.task!r}")


def cmd_eval(args) -> int:
    cfg = _load_config_file(args.config)
    out = _out_dir(args, cfg)
    items = benchgen.read_qa_items(args.qa)
    transcripts = evaluation.read_answers(args.answers)
    report = evaluation.score_transcripts(items, transcripts)
    evaluation.write_report(out / "eval_report.json", report)
    print(report.summary_table())
    return 0


def _write_warnings(path: Path, warnings: list[dict]) -> None:
    if warnings:
        path.write_text(
            "\n".join(json.dumps(w, sort_keys=True) for w in warnings) + "\n",
            encoding="utf-8",
        )


# --------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--config", type=str, default=None,
                   help="JSON config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alignlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted paired dataset")
    _add_common(p)
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    gen = sub.add_parser("gen", help="generate benchmarks / negatives")
    gsub = gen.add_subparsers(dest="generator", required=True)

    p = gsub.add_parser("pope", help="object-existence QA")
    _add_common(p)
    p.add_argument("--graphs", required=True)
    p.add_argument("--table-graphs", default=None,
                   help="reference corpus for the co-occurrence table")
    p.add_argument("--mode", choices=datagen.SAMPLING_MODES, default=None)
    p.add_argument("--n-per-image", dest="n_per_image", type=int, default=None)
    p.set_defaults(func=cmd_gen_pope)

    p = gsub.add_parser("vg", help="attribute/relation QA")
    _add_common(p)
    p.add_argument("--graphs", required=True)
    p.add_argument("--threshold", dest="frequency_threshold", type=int, default=None)
    p.set_defaults(func=cmd_gen_vg)

    p = gsub.add_parser("kg", help="knowledge-graph QA")
    _add_common(p)
    p.add_argument("--triples", required=True)
    p.add_argument("--entity-map", dest="entity_map", required=True)
    p.set_defaults(func=cmd_gen_kg)

    p = gsub.add_parser("negcap", help="negative captions")
    _add_common(p)
    p.add_argument("--graphs", required=True)
    p.add_argument("--table-graphs", default=None)
    p.add_argument("--mode", choices=datagen.SAMPLING_MODES + ("remove",),
                   default=None)
    p.set_defaults(func=cmd_gen_negcap)

    p = gsub.add_parser("region", help="region instruction data")
    _add_common(p)
    p.add_argument("--graphs", required=True)
    p.set_defaults(func=cmd_gen_region)

    p = sub.add_parser("train", help="train a projector schedule")
    _add_common(p)
    p.add_argument("--schedule", required=True, choices=sorted(_SCHEDULE_ALIASES))
    p.add_argument("--data", required=True, help="directory with planted/latents files")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--contrastive-epochs", dest="contrastive_epochs",
                   type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("probe", help="run a diagnostic probe")
    _add_common(p)
    p.add_argument("--task", required=True, choices=("deltaperf", "cosine"))
    p.add_argument("--pre", default=None, help="pre-stage labeled features prefix")
    p.add_argument("--post", default=None, help="post-stage labeled features prefix")
    p.add_argument("--data", default=None, help="synth output dir (cosine task)")
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("eval", help="score answers against a QA set")
    _add_common(p)
    p.add_argument("--qa", required=True)
    p.add_argument("--answers", required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except (AlignLabError, OSError) as e:
        print(f"error {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
