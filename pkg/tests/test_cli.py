import json
from pathlib import Path

import numpy as np
import pytest

from alignlab.cli import main
from alignlab.datastore import (
    KGTriple,
    SceneGraph,
    SceneObject,
    SceneRelation,
    save_kg_triples,
    save_scene_graphs,
)


def _graphs_file(tmp_path):
    graphs = []
    corpus = [
        ("im0", ["dog", "cat"]), ("im1", ["dog", "leash", "person"]),
        ("im2", ["dog", "leash"]), ("im3", ["cat", "person"]),
        ("im4", ["person", "car"]),
    ]
    for image_id, names in corpus:
        objects = [SceneObject(f"{image_id}-o{i}", n, ("brown",), (0, 0, 4, 4))
                   for i, n in enumerate(names)]
        relations = [SceneRelation(objects[0].object_id, "near",
                                   objects[1].object_id)]
        graphs.append(SceneGraph(image_id=image_id, objects=objects,
                                 relations=relations))
    path = tmp_path / "graphs.jsonl"
    save_scene_graphs(path, graphs)
    return path


def _synth(tmp_path, **kw):
    out = tmp_path / "data"
    args = ["synth", "--seed", "7", "--pairs", "64", "--dim", "12",
            "--classes", "3", "--out", str(out)]
    for k, v in kw.items():
        args += [f"--{k}", str(v)]
    assert main(args) == 0
    return out


class TestSynth:
    def test_writes_expected_files(self, tmp_path):
        out = _synth(tmp_path)
        for name in ("planted.manifest", "planted.f32bin", "latents.manifest",
                     "latents.f32bin", "captions.jsonl", "tokens.manifest",
                     "tokens.f32bin"):
            assert (out / name).exists()

    def test_requires_seed(self, tmp_path, capsys):
        code = main(["synth", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "error ConfigError" in capsys.readouterr().err

    def test_byte_reproducible(self, tmp_path):
        a = _synth(tmp_path / "a")
        b = _synth(tmp_path / "b")
        for name in ("planted.f32bin", "planted.manifest", "latents.f32bin",
                     "captions.jsonl", "tokens.f32bin"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestGen:
    def test_pope(self, tmp_path, capsys):
        graphs = _graphs_file(tmp_path)
        out = tmp_path / "qa"
        assert main(["gen", "pope", "--graphs", str(graphs), "--mode",
                     "adversarial", "--n-per-image", "1", "--seed", "3",
                     "--out", str(out)]) == 0
        lines = (out / "qa_pope_adversarial.jsonl").read_text().splitlines()
        assert lines
        golds = [json.loads(l)["gold"] for l in lines]
        assert golds.count("yes") == golds.count("no")

    def test_vg_prints_threshold_marker(self, tmp_path, capsys):
        graphs = _graphs_file(tmp_path)
        out = tmp_path / "qa"
        assert main(["gen", "vg", "--graphs", str(graphs), "--threshold", "1",
                     "--seed", "3", "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert "frequency_threshold=1 (assumed)" in captured
        assert (out / "qa_vg.jsonl").exists()

    def test_kg(self, tmp_path):
        triples_path = tmp_path / "kg.tsv"
        save_kg_triples(triples_path, [
            KGTriple("Paris", "capital_of", "France"),
            KGTriple("Berlin", "capital_of", "Germany"),
            KGTriple("Rome", "capital_of", "Italy"),
        ])
        entity_map = tmp_path / "entities.json"
        entity_map.write_text(json.dumps(
            {"Paris": "h1", "Berlin": "h2", "Rome": "h3"}))
        out = tmp_path / "qa"
        assert main(["gen", "kg", "--triples", str(triples_path),
                     "--entity-map", str(entity_map), "--seed", "5",
                     "--out", str(out)]) == 0
        lines = (out / "qa_kg.jsonl").read_text().splitlines()
        assert any("capital_of" in l for l in lines)

    def test_negcap_and_region(self, tmp_path):
        graphs = _graphs_file(tmp_path)
        out = tmp_path / "caps"
        assert main(["gen", "negcap", "--graphs", str(graphs), "--mode",
                     "popular", "--seed", "2", "--out", str(out)]) == 0
        lines = (out / "negcaps_popular.jsonl").read_text().splitlines()
        assert lines and all("along with" in json.loads(l)["text"] for l in lines)

        assert main(["gen", "negcap", "--graphs", str(graphs), "--mode",
                     "remove", "--seed", "2", "--out", str(out)]) == 0
        removed = (out / "negcaps_remove.jsonl").read_text().splitlines()
        assert removed and all(json.loads(l)["strategy"] == "remove"
                               for l in removed)

        assert main(["gen", "region", "--graphs", str(graphs), "--seed", "2",
                     "--out", str(out)]) == 0
        regions = (out / "regions.jsonl").read_text().splitlines()
        assert regions
        rec = json.loads(regions[0])
        assert rec["prompt"] == "Please caption the content in the bounding box"


class TestTrainAndProbe:
    def test_train_prints_defaults_and_writes(self, tmp_path, capsys):
        data = _synth(tmp_path)
        out = tmp_path / "run"
        assert main(["train", "--schedule", "separate", "--data", str(data),
                     "--seed", "9", "--contrastive-epochs", "2", "--epochs", "1",
                     "--batch-size", "16", "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert "lambda_init=5" in captured
        assert "lambda1=1" in captured and "lambda2=1" in captured
        assert "beta=0.07 (assumed)" in captured
        assert "tau1=0.2 (assumed)" in captured
        assert (out / "checkpoint.manifest").exists()
        assert (out / "trainlog.jsonl").exists()

    def test_integrated_fixed_lambda_zero_determinism(self, tmp_path):
        data = _synth(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["train", "--schedule", "integrated-fixed", "--data",
                         str(data), "--seed", "7", "--epochs", "2",
                         "--batch-size", "16", "--lambda", "0",
                         "--out", str(out)]) == 0
            outs.append(out)
        a, b = outs
        assert (a / "checkpoint.f32bin").read_bytes() == (b / "checkpoint.f32bin").read_bytes()
        assert (a / "trainlog.jsonl").read_text() == (b / "trainlog.jsonl").read_text()

    def test_config_file_schedule_section(self, tmp_path):
        data = _synth(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"schedule": {"epochs": 1, "batch_size": 16,
                                                "contrastive_epochs": 1}}))
        out = tmp_path / "run"
        assert main(["train", "--schedule", "separate", "--data", str(data),
                     "--seed", "7", "--config", str(cfg),
                     "--out", str(out)]) == 0
        log = (out / "trainlog.jsonl").read_text().splitlines()
        # 64 pairs / batch 16 = 4 steps per epoch, two 1-epoch stages + init
        assert len(log) == 9

    def test_probe_cosine(self, tmp_path, capsys):
        data = _synth(tmp_path)
        run = tmp_path / "run"
        assert main(["train", "--schedule", "separate", "--data", str(data),
                     "--seed", "9", "--contrastive-epochs", "10", "--epochs", "0",
                     "--batch-size", "16", "--out", str(run)]) == 0
        assert main(["probe", "--task", "cosine", "--data", str(data),
                     "--checkpoint", str(run / "checkpoint"),
                     "--out", str(run)]) == 0
        captured = capsys.readouterr().out
        assert "mean=" in captured
        report = json.loads((run / "cosine_report.json").read_text())
        assert report["n_pairs"] == 64

    def test_probe_deltaperf(self, tmp_path, capsys):
        data = _synth(tmp_path)
        run = tmp_path / "run"
        assert main(["probe", "--task", "deltaperf", "--pre",
                     str(data / "latents"), "--post", str(data / "latents"),
                     "--seed", "4", "--out", str(run)]) == 0
        report = json.loads((run / "probe_report.json").read_text())
        assert report["delta_perf"] == 0.0
        assert "delta=" in capsys.readouterr().out


class TestEval:
    def test_fixture_scores(self, tmp_path, capsys):
        qa_lines, ans_lines = [], []
        idx = 0
        for gold, ans, count in (("yes", "Yes.", 40), ("no", "Yes!", 10),
                                 ("no", "no", 35), ("yes", "No match", 15)):
            for _ in range(count):
                prov = {"planted": "x"} if gold == "no" else {}
                qa_lines.append(json.dumps({
                    "schema_version": 1, "id": f"q{idx}",
                    "image_or_entity_id": "im", "question": "Is it?",
                    "gold": gold, "qtype": "object_existence",
                    "sampling_mode": "random", "provenance": prov}))
                ans_lines.append(json.dumps({"item_id": f"q{idx}",
                                             "transcript": ans}))
                idx += 1
        qa = tmp_path / "qa.jsonl"
        answers = tmp_path / "answers.jsonl"
        qa.write_text("\n".join(qa_lines) + "\n")
        answers.write_text("\n".join(ans_lines) + "\n")
        out = tmp_path / "eval"
        assert main(["eval", "--qa", str(qa), "--answers", str(answers),
                     "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert "0.7500" in captured and "0.7619" in captured
        report = json.loads((out / "eval_report.json").read_text())
        assert report["overall"]["tp"] == 40


class TestErrorsAndPrecedence:
    def test_unknown_flag_exits_2(self, capsys):
        assert main(["synth", "--bogus"]) == 2

    def test_unknown_command_exits_2(self, capsys):
        assert main(["warp"]) == 2

    def test_validation_error_single_line(self, tmp_path, capsys):
        code = main(["synth", "--seed", "1", "--pairs", "2", "--dim", "4",
                     "--out", str(tmp_path)])
        assert code == 1
        err = capsys.readouterr().err.strip()
        assert len(err.splitlines()) == 1
        assert err.startswith("error ConfigError:")

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"pairs": 32, "dim": 8, "classes": 2}))
        out = tmp_path / "d"
        assert main(["synth", "--seed", "1", "--pairs", "48", "--config",
                     str(cfg), "--out", str(out)]) == 0
        manifest = json.loads((out / "planted.manifest").read_text())
        assert manifest["count"] == 96  # 48 pairs from the flag, dim 8 from config
        assert manifest["dim"] == 8

    def test_missing_data_file_errors(self, tmp_path, capsys):
        code = main(["gen", "pope", "--graphs", str(tmp_path / "nope.jsonl"),
                     "--seed", "1", "--out", str(tmp_path)])
        assert code != 0
