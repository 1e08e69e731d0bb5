import json

import pytest
from click.testing import CliRunner

from conftest import chat_body
from osmda.cli import main, read_artifact, write_artifact
from pipeline_fixture import (
    build_fixture,
    script_judge,
    script_llm,
    script_vlm,
)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def fixture(tmp_path):
    return build_fixture(tmp_path)


def run_ok(runner, args):
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    return result


class TestArtifacts:
    def test_meta_roundtrip(self, tmp_path):
        p = tmp_path / "a.jsonl"
        write_artifact(p, [{"x": 1}], {"config_digest": "abc", "seed": 7})
        meta, records = read_artifact(p, "whatever")
        assert meta == {"config_digest": "abc", "seed": 7}
        assert records == [{"x": 1}]


class TestValidation:
    def test_missing_upstream_names_producer(self, runner, tmp_path, fixture):
        result = runner.invoke(main, [
            "filter", "--out-dir", str(tmp_path / "out"),
            "--images-manifest", str(fixture["manifest"]),
        ])
        assert result.exit_code == 2
        assert "ingest" in result.output

    def test_missing_required_flag(self, runner, tmp_path):
        result = runner.invoke(main, ["ingest", "--out-dir", str(tmp_path)])
        assert result.exit_code == 2
        assert "images_manifest" in result.output

    def test_missing_out_dir(self, runner):
        result = runner.invoke(main, ["ingest"])
        assert result.exit_code == 2

    def test_endpoint_failure_exit_3(self, runner, tmp_path, fixture, endpoint):
        endpoint.set_script(lambda p: (500, {}))
        result = runner.invoke(main, [
            "ingest", "--out-dir", str(tmp_path / "out"),
            "--images-manifest", str(fixture["manifest"]),
            "--osm-endpoint", endpoint.url,
        ])
        assert result.exit_code == 3


class TestConfigPrecedence:
    def test_file_env_flag(self, runner, tmp_path, fixture, monkeypatch):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(
            "[paths]\n"
            f"images_manifest = {fixture['manifest']}\n"
            f"out_dir = {tmp_path / 'from_file'}\n"
            f"osm_extract = {fixture['extract']}\n"
        )
        # file value used when nothing overrides
        run_ok(runner, ["ingest", "--config", str(cfg)])
        assert (tmp_path / "from_file" / "ingest.jsonl").exists()
        # flag beats file
        run_ok(runner, ["ingest", "--config", str(cfg),
                        "--out-dir", str(tmp_path / "from_flag")])
        assert (tmp_path / "from_flag" / "ingest.jsonl").exists()

    def test_env_beats_file_for_endpoints(self, runner, tmp_path, fixture,
                                          endpoint, monkeypatch):
        out = tmp_path / "out"
        endpoint.set_script(lambda p: (200, ""))
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(
            "[endpoints]\nosm_endpoint = http://127.0.0.1:9/nowhere\n"
        )
        monkeypatch.setenv("OSMDA_OSM_ENDPOINT", endpoint.url)
        run_ok(runner, [
            "ingest", "--config", str(cfg), "--out-dir", str(out),
            "--images-manifest", str(fixture["manifest"]),
        ])
        assert len(endpoint.requests) == 20


class TestPipelineStages:
    def _ingest(self, runner, out, fixture):
        run_ok(runner, [
            "ingest", "--out-dir", str(out),
            "--images-manifest", str(fixture["manifest"]),
            "--osm-extract", str(fixture["extract"]),
        ])

    def test_ingest_groups_by_image(self, runner, tmp_path, fixture):
        out = tmp_path / "out"
        self._ingest(runner, out, fixture)
        meta, records = read_artifact(out / "ingest.jsonl", "ingest")
        assert "config_digest" in meta
        assert len(records) == 20
        assert all(r["objects"] for r in records)

    def test_filter_drops_blacklisted(self, runner, tmp_path, fixture):
        out = tmp_path / "out"
        self._ingest(runner, out, fixture)
        run_ok(runner, [
            "filter", "--out-dir", str(out),
            "--images-manifest", str(fixture["manifest"]),
        ])
        report = json.loads((out / "filter_report.json").read_text())
        assert report["dropped_by_rule"]["type-blacklist"] == 20
        _, records = read_artifact(out / "filtered.jsonl", "filter")
        tags = [o["tags"] for r in records for o in r["objects"]]
        assert all("name" not in t for t in tags)

    def test_relabel_and_cache(self, runner, tmp_path, fixture, endpoint):
        out = tmp_path / "out"
        self._ingest(runner, out, fixture)
        run_ok(runner, ["filter", "--out-dir", str(out),
                        "--images-manifest", str(fixture["manifest"])])
        endpoint.set_script(script_llm)
        run_ok(runner, ["relabel", "--out-dir", str(out),
                        "--llm-endpoint", endpoint.url])
        n_calls = len(endpoint.requests)
        assert n_calls > 0
        _, records = read_artifact(out / "labeled.jsonl", "relabel")
        labels = {o["label"] for r in records for o in r["objects"]}
        assert labels <= {"building area", "farmland area", "school area",
                          "park area", "water area", "generic feature"}
        # warm rerun reuses the cache
        run_ok(runner, ["relabel", "--out-dir", str(out),
                        "--llm-endpoint", endpoint.url])
        assert len(endpoint.requests) == n_calls

    def test_full_pipeline(self, runner, tmp_path, fixture, endpoint_factory):
        out = tmp_path / "out"
        llm, vlm = endpoint_factory(), endpoint_factory()
        llm.set_script(script_llm)
        vlm.set_script(script_vlm)
        self._ingest(runner, out, fixture)
        run_ok(runner, ["filter", "--out-dir", str(out),
                        "--images-manifest", str(fixture["manifest"])])
        run_ok(runner, ["relabel", "--out-dir", str(out),
                        "--llm-endpoint", llm.url])
        run_ok(runner, ["curate", "--out-dir", str(out),
                        "--embeddings", str(fixture["embeddings"]),
                        "--seed", "0"])
        _, curated = read_artifact(out / "curated.jsonl", "curate")
        assert 0 < len(curated) <= 20
        run_ok(runner, ["render", "--out-dir", str(out),
                        "--images-manifest", str(fixture["manifest"])])
        for r in curated:
            assert (out / "tiles" / f"{r['image_id']}.png").exists()
        run_ok(runner, ["caption", "--out-dir", str(out),
                        "--images-manifest", str(fixture["manifest"]),
                        "--vlm-endpoint", vlm.url])
        captions = (out / "captions.jsonl").read_text().splitlines()
        assert len(captions) == len(curated)
        n_vlm = len(vlm.requests)
        # resumable: rerun issues no new caption requests
        run_ok(runner, ["caption", "--out-dir", str(out),
                        "--images-manifest", str(fixture["manifest"]),
                        "--vlm-endpoint", vlm.url])
        assert len(vlm.requests) == n_vlm
        run_ok(runner, [
            "mix", "--out-dir", str(out),
            "--component", str(out / "captions.jsonl"),
            "--component", str(out / "captions.jsonl"),
            "--target", "10", "--seed", "0",
        ])
        manifest = json.loads((out / "mixture_manifest.json").read_text())
        assert [c["contributed"] for c in manifest["components"]] == [10, 10]
        assert len((out / "mixed.jsonl").read_text().splitlines()) == 20


class TestEvaluateAndReport:
    def _dataset(self, path):
        samples = [
            {"id": f"s{i}", "image_path": "", "task": "classify",
             "gold": g, "options": ["Beach", "Forest"]}
            for i, g in enumerate(["Beach", "Forest"])
        ]
        with open(path, "w") as f:
            for s in samples:
                f.write(json.dumps(s) + "\n")
        return path

    def test_evaluate_writes_report(self, runner, tmp_path, endpoint):
        out = tmp_path / "out"
        ds = self._dataset(tmp_path / "aid.jsonl")
        replies = iter(["Beach", "Forest"])
        endpoint.set_script(lambda p: (200, chat_body(next(replies))))
        run_ok(runner, [
            "evaluate", "--out-dir", str(out), "--benchmark", "aid",
            "--dataset", str(ds), "--model-endpoint", endpoint.url,
            "--model-name", "good",
        ])
        payload = json.loads((out / "report_aid_good.json").read_text())
        assert payload["per_task"]["classify"]["score"] == 1.0

    def test_report_ranks_models(self, runner, tmp_path, endpoint_factory):
        out = tmp_path / "out"
        ds = self._dataset(tmp_path / "aid.jsonl")
        for name, answers in (("good", ["Beach", "Forest"]),
                              ("bad", ["Forest", "Beach"])):
            ep = endpoint_factory()
            replies = iter(answers)
            ep.set_script(lambda p, r=replies: (200, chat_body(next(r))))
            run_ok(runner, [
                "evaluate", "--out-dir", str(out), "--benchmark", "aid",
                "--dataset", str(ds), "--model-endpoint", ep.url,
                "--model-name", name,
            ])
        run_ok(runner, [
            "report", "--out-dir", str(out),
            "--report", str(out / "report_aid_good.json"),
            "--report", str(out / "report_aid_bad.json"),
        ])
        rows = (out / "ranks.csv").read_text().splitlines()
        assert rows[0] == "model,fine_tuning,generalization,overall"
        assert rows[1].startswith("good,")

    def test_report_refuses_conflicting_digests(self, runner, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        for name, digest in (("a", "d1"), ("b", "d2")):
            (out / f"r_{name}.json").write_text(json.dumps({
                "benchmark": "aid", "model": name, "config_digest": digest,
                "per_task": {"classify": {"metric": "f1", "score": 0.5}},
                "aggregate": None,
            }))
        result = runner.invoke(main, [
            "report", "--out-dir", str(out),
            "--report", str(out / "r_a.json"),
            "--report", str(out / "r_b.json"),
        ])
        assert result.exit_code == 2
        assert "conflicting" in result.output

    def test_evaluate_endpoint_down_exit_3(self, runner, tmp_path, endpoint):
        out = tmp_path / "out"
        ds = self._dataset(tmp_path / "aid.jsonl")
        endpoint.set_script(lambda p: (400, {}))
        result = runner.invoke(main, [
            "evaluate", "--out-dir", str(out), "--benchmark", "aid",
            "--dataset", str(ds), "--model-endpoint", endpoint.url,
        ])
        assert result.exit_code == 3
