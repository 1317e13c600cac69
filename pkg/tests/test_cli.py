import json
import subprocess
import sys

import pytest

from intentkit.cli import main
from intentkit.io import read_jsonl, write_jsonl
from intentkit.model import LABELS
from synth import gold_record_dict, hand_labeled_suite
from stubserver import StubLLMServer


def write_corpus(path, per_class=40):
    records = []
    i = 0
    for label in LABELS:
        for _ in range(per_class):
            records.append(
                {"id": f"c{i:05d}", "query": f"corpus query {i}", "label": label.value,
                 "confidence": 0.9, "provenance": "weak"}
            )
            i += 1
    write_jsonl(path, records)
    return records


class TestDispatch:
    def test_unknown_flag_exits_1(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["label", "--no-such-flag"])
        assert exc_info.value.code == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand_exits_1(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["frobnicate"])
        assert exc_info.value.code == 1

    def test_missing_input_file_is_data_error(self, tmp_path):
        code = main(["label", "--input", str(tmp_path / "nope.jsonl"),
                     "--output", str(tmp_path / "out.jsonl")])
        assert code == 2

    def test_version_runs(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["--version"])
        assert exc_info.value.code == 0


class TestLabelCommand:
    def test_tsv_to_jsonl(self, tmp_path):
        tsv = tmp_path / "queries.tsv"
        tsv.write_text(
            "q1\tfacebook login\td\tu\nq2\thow do magnets work\td\tu\n", encoding="utf-8"
        )
        out = tmp_path / "weak.jsonl"
        assert main(["label", "--input", str(tsv), "--output", str(out)]) == 0
        records = list(read_jsonl(out))
        assert [r["label"] for r in records] == ["navigational", "informational"]
        manifest = json.loads((tmp_path / "weak.manifest.json").read_text())
        assert manifest["subcommand"] == "label"
        assert manifest["stats"]["labeled"] == 2

    def test_jsonl_input_and_workers(self, tmp_path):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [{"id": f"q{i}", "query": f"buy thing {i}"} for i in range(50)])
        out1, out8 = tmp_path / "w1.jsonl", tmp_path / "w8.jsonl"
        assert main(["label", "--input", str(src), "--output", str(out1)]) == 0
        assert main(["label", "--input", str(src), "--output", str(out8), "--workers", "8"]) == 0
        assert out1.read_bytes() == out8.read_bytes()


class TestCurationCommands:
    def test_sample_split_roundtrip(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, per_class=40)
        sample_out = tmp_path / "sample.jsonl"
        assert main(["sample", "--input", str(corpus), "--per-class", "30",
                     "--seed", "5", "--output", str(sample_out)]) == 0
        sampled = list(read_jsonl(sample_out))
        assert len(sampled) == 90

        train, val = tmp_path / "train.jsonl", tmp_path / "val.jsonl"
        assert main(["split", "--input", str(sample_out), "--ratio", "0.8", "--seed", "5",
                     "--train", str(train), "--val", str(val)]) == 0
        assert len(list(read_jsonl(train))) == 72
        assert len(list(read_jsonl(val))) == 18

    def test_split_ft_export_minimal_records(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, per_class=10)
        train, val = tmp_path / "train.jsonl", tmp_path / "val.jsonl"
        assert main(["split", "--input", str(corpus), "--seed", "1", "--ft-export",
                     "--train", str(train), "--val", str(val)]) == 0
        rec = next(iter(read_jsonl(train)))
        assert set(rec) == {"query", "label"}

    def test_select_hc_and_assemble(self, tmp_path):
        preds = tmp_path / "preds.jsonl"
        records = []
        for i in range(900):
            records.append({
                "id": f"p{i:05d}", "query": f"pred {i}",
                "label": LABELS[i % 3].value,
                "confidence": 0.85 + (i % 15) / 100.0,
            })
        write_jsonl(preds, records)
        random_out = tmp_path / "random.jsonl"
        write_corpus(random_out, per_class=30)

        hc_out = tmp_path / "hc.jsonl"
        assert main(["select-hc", "--input", str(preds), "--threshold", "0.9",
                     "--per-class", "10", "--seed", "3",
                     "--exclude", str(random_out), "--output", str(hc_out)]) == 0
        selected = list(read_jsonl(hc_out))
        assert len(selected) == 30
        assert all(r["confidence"] >= 0.9 for r in selected)

        final = tmp_path / "augmented.jsonl"
        assert main(["assemble", "--random", str(random_out), "--high-conf", str(hc_out),
                     "--threshold", "0.9", "--seed", "3", "--output", str(final)]) == 0
        assert len(list(read_jsonl(final))) == 120

    def test_seed_generated_and_printed(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, per_class=5)
        out = tmp_path / "s.jsonl"
        assert main(["sample", "--input", str(corpus), "--per-class", "3",
                     "--output", str(out)]) == 0
        err = capsys.readouterr().err
        assert "generated seed:" in err
        manifest = json.loads((tmp_path / "s.manifest.json").read_text())
        assert isinstance(manifest["seeds"]["sample"], int)


class TestEvalCommand:
    def build_files(self, tmp_path):
        suite = hand_labeled_suite()
        gold = suite[0:20] + suite[100:120] + suite[200:220]
        gold_path = tmp_path / "gold.jsonl"
        write_jsonl(gold_path, (gold_record_dict(r) for r in gold))
        perfect = tmp_path / "perfect.jsonl"
        write_jsonl(
            perfect,
            (
                {"id": r.query.query_id, "query": r.query.text, "label": r.label.value,
                 "confidence": 1.0, "provenance": "weak"}
                for r in gold
            ),
        )
        return gold_path, perfect

    def test_single_system_report(self, tmp_path):
        gold_path, perfect = self.build_files(tmp_path)
        out = tmp_path / "report.json"
        assert main(["eval", "--gold", str(gold_path), "--preds", f"mine={perfect}",
                     "--seed", "1", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["report"]["macro"]["f1"] == 1.0
        assert (tmp_path / "report.md").exists()
        assert (tmp_path / "report.png").exists()
        assert (tmp_path / "report.manifest.json").exists()

    def test_comparison_report(self, tmp_path):
        gold_path, perfect = self.build_files(tmp_path)
        worse = tmp_path / "worse.jsonl"
        records = list(read_jsonl(perfect))
        for rec in records[:30]:
            rec["label"] = "informational"
        write_jsonl(worse, records)
        out = tmp_path / "cmp.json"
        assert main(["eval", "--gold", str(gold_path),
                     "--preds", f"base={perfect}", f"challenger={worse}",
                     "--baseline", "base", "--iterations", "300",
                     "--seed", "1", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["baseline"] == "base"
        assert len(payload["systems"]) == 2
        assert (tmp_path / "cmp.tsv").exists()
        assert (tmp_path / "cmp.png").exists()

    def test_duplicate_system_name_is_data_error(self, tmp_path):
        gold_path, perfect = self.build_files(tmp_path)
        code = main(["eval", "--gold", str(gold_path),
                     "--preds", f"x={perfect}", f"x={perfect}",
                     "--seed", "1", "--out", str(tmp_path / "r.json")])
        assert code == 2


class TestClassifyLlmCommand:
    def test_missing_api_key_exits_3(self, tmp_path, monkeypatch):
        monkeypatch.delenv("INTENTKIT_TEST_KEY", raising=False)
        cfg = tmp_path / "endpoint.yaml"
        cfg.write_text(
            "base_url: http://127.0.0.1:1\nmodel: m\napi_key_env: INTENTKIT_TEST_KEY\n",
            encoding="utf-8",
        )
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [{"id": "q0", "query": "anything"}])
        code = main(["classify-llm", "--scenario", "definitions_only",
                     "--endpoint", str(cfg), "--input", str(src),
                     "--output", str(tmp_path / "out.jsonl")])
        assert code == 3

    def test_against_stub(self, tmp_path, monkeypatch):
        monkeypatch.setenv("INTENTKIT_TEST_KEY", "k")
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [{"id": f"q{i}", "query": f"question {i}"} for i in range(6)])
        with StubLLMServer(default_reply="navigational") as stub:
            cfg = tmp_path / "endpoint.yaml"
            cfg.write_text(
                f"base_url: {stub.base_url}\nmodel: m\napi_key_env: INTENTKIT_TEST_KEY\n",
                encoding="utf-8",
            )
            out = tmp_path / "preds.jsonl"
            code = main(["classify-llm", "--scenario", "definitions_keywords",
                         "--endpoint", str(cfg), "--input", str(src),
                         "--output", str(out)])
        assert code == 0
        records = list(read_jsonl(out))
        assert [r["label"] for r in records] == ["navigational"] * 6
        report = json.loads((tmp_path / "preds.report.json").read_text())
        assert report["ok"] == 6
        manifest = json.loads((tmp_path / "preds.manifest.json").read_text())
        assert "api_key" not in json.dumps(manifest)


class TestHybridCommand:
    def test_offline_combination(self, tmp_path):
        ws = tmp_path / "ws.jsonl"
        write_jsonl(ws, [
            {"id": "q0", "query": "a", "label": "navigational", "confidence": 1.0,
             "provenance": "weak", "defaulted": False,
             "votes": {"nav": "navigational"}},
            {"id": "q1", "query": "b", "label": "informational", "confidence": 0.34,
             "provenance": "weak", "defaulted": True, "votes": {"nav": "abstain"}},
        ])
        llm = tmp_path / "llm.jsonl"
        write_jsonl(llm, [
            {"id": "q0", "query": "a", "label": "informational", "confidence": 1.0,
             "provenance": "llm-icl"},
            {"id": "q1", "query": "b", "label": None, "provenance": "llm-icl", "error": "oov"},
        ])
        policy = tmp_path / "policy.yaml"
        policy.write_text("mode: filter_agree\nws_min_confidence: 0.9\n", encoding="utf-8")
        out = tmp_path / "hybrid.jsonl"
        assert main(["hybrid", "--llm-preds", str(llm), "--ws-preds", str(ws),
                     "--policy", str(policy), "--out", str(out)]) == 0
        records = list(read_jsonl(out))
        assert records[0]["label"] == "navigational"  # confident WS disagreement wins
        assert records[1]["label"] == "informational" and records[1]["defaulted"]
        assert all(r["provenance"] == "hybrid" for r in records)


class TestBenchAndRun:
    def test_bench_small(self, tmp_path):
        out = tmp_path / "bench.json"
        assert main(["bench", "--count", "3000", "--workers", "1,2", "--seed", "7",
                     "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["outputs_identical"] is True
        assert len(payload["points"]) == 2
        assert (tmp_path / "bench.png").exists()

    def test_run_pipeline_config(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, per_class=20)
        cfg = tmp_path / "pipeline.yaml"
        cfg.write_text(
            f"""
stages:
  - cmd: sample
    args:
      input: {corpus}
      per_class: 10
      seed: 3
      output: {tmp_path}/sampled.jsonl
  - cmd: split
    args:
      input: {tmp_path}/sampled.jsonl
      seed: 3
      train: {tmp_path}/train.jsonl
      val: {tmp_path}/val.jsonl
""",
            encoding="utf-8",
        )
        assert main(["run", str(cfg)]) == 0
        assert len(list(read_jsonl(tmp_path / "train.jsonl"))) == 24
        assert len(list(read_jsonl(tmp_path / "val.jsonl"))) == 6


class TestConsoleScript:
    def test_installed_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "intentkit.cli", "--version"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "intentkit" in proc.stdout
