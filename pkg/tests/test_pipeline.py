import json
import socket

import pytest

from promptscreen.catalog import generate_catalog
from promptscreen.cli import main as cli_main
from promptscreen.dataset import CorpusSplit, LabeledCorpus
from promptscreen.errors import ArtifactMissing, ConfigError, EmptyOOS, UnknownPrompt
from promptscreen.inference import BackendConfig, MockProfile
from promptscreen.metrics import MetricSet, load_metrics_csv
from promptscreen.pipeline import (
    PipelineConfig,
    RunPaths,
    emit_reports,
    load_manifest,
    run_pipeline,
    validate_oos,
)
from promptscreen.selection import RankedPrompt, Recommendation, SelectionCriteria
from promptscreen.synthetic import bundled_corpus_path

from conftest import balanced_corpus


def base_config(tmp_path, **extra):
    data = {
        "corpus_path": str(bundled_corpus_path()),
        "seed": 42,
        "output_dir": str(tmp_path / "out"),
    }
    data.update(extra)
    return data


def write_config(tmp_path, name="config.json", **extra):
    path = tmp_path / name
    path.write_text(json.dumps(base_config(tmp_path, **extra), indent=2))
    return path


# --- configuration ----------------------------------------------------------

def test_config_hash_ignores_key_order_and_whitespace(tmp_path):
    data = base_config(tmp_path, runs=1, top_k=5)
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(data, indent=4))
    b.write_text(json.dumps({k: data[k] for k in reversed(list(data))}, separators=(",", ":")))
    cfg_a = PipelineConfig.from_file(a)
    cfg_b = PipelineConfig.from_file(b)
    assert cfg_a.config_hash() == cfg_b.config_hash()


def test_config_hash_ignores_execution_knobs(tmp_path):
    cfg_a = PipelineConfig.from_dict(
        base_config(tmp_path, backend={"parallelism": 1, "timeout_ms": 1000}))
    cfg_b = PipelineConfig.from_dict(
        base_config(tmp_path, backend={"parallelism": 8, "timeout_ms": 9000,
                                       "max_retries": 5}))
    assert cfg_a.config_hash() == cfg_b.config_hash()
    cfg_c = PipelineConfig.from_dict({**base_config(tmp_path), "seed": 43})
    assert cfg_c.config_hash() != cfg_a.config_hash()


def test_config_output_dir_not_hashed(tmp_path):
    cfg_a = PipelineConfig.from_dict({**base_config(tmp_path), "output_dir": "x"})
    cfg_b = PipelineConfig.from_dict({**base_config(tmp_path), "output_dir": "y"})
    assert cfg_a.config_hash() == cfg_b.config_hash()


def test_config_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="frobnicate"):
        PipelineConfig.from_dict(base_config(tmp_path, frobnicate=1))
    with pytest.raises(ConfigError, match="sample_plan"):
        PipelineConfig.from_dict(base_config(tmp_path, sample_plan={"fraction": 0.2}))


def test_config_missing_corpus_path():
    with pytest.raises(ConfigError, match="corpus_path"):
        PipelineConfig.from_dict({"seed": 1})


def test_config_repeated_run_needs_multiple_runs(tmp_path):
    with pytest.raises(ConfigError, match="repeated_run"):
        PipelineConfig.from_dict(
            base_config(tmp_path, robustness={"slice_kind": "repeated_run"}))
    cfg = PipelineConfig.from_dict(
        base_config(tmp_path, runs=3, robustness={"slice_kind": "repeated_run"}))
    assert cfg.slice_kind == "repeated_run"


def test_config_seed_derivation_is_stable(tmp_path):
    cfg = PipelineConfig.from_dict(base_config(tmp_path))
    again = PipelineConfig.from_dict(base_config(tmp_path))
    assert cfg.seeds() == again.seeds()
    assert cfg.sample_plan.seed != cfg.backend.seed  # independent streams


# --- full runs --------------------------------------------------------------

def test_run_pipeline_happy_path(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path))
    manifest = run_pipeline(config)
    assert manifest.all_done
    paths = RunPaths(config.output_dir)
    # manifest completeness: exactly the on-disk artifacts, digests correct
    from promptscreen.hashutil import sha256_file
    on_disk = {
        p.relative_to(paths.out_dir).as_posix()
        for p in paths.out_dir.rglob("*")
        if p.is_file() and p.name not in ("manifest.json", "run_info.json")
    }
    assert set(manifest.artifacts) == on_disk
    for rel, digest in manifest.artifacts.items():
        assert sha256_file(paths.out_dir / rel) == digest
    # every stage output is digest-listed
    for stage in manifest.stage_status:
        for path in paths.stage_outputs(stage):
            assert path.relative_to(paths.out_dir).as_posix() in manifest.artifacts


def test_run_pipeline_resume_is_noop(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path))
    first = run_pipeline(config)
    again = run_pipeline(config)
    assert first == again


def test_run_pipeline_rejects_mixed_output_dir(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path))
    run_pipeline(config)
    other = PipelineConfig.from_dict({**base_config(tmp_path), "seed": 7})
    with pytest.raises(ConfigError, match="different"):
        run_pipeline(other)


def test_stage_isolation_reproduces_bytes(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path))
    run_pipeline(config)
    paths = RunPaths(config.output_dir)
    before = {
        p.relative_to(paths.out_dir).as_posix(): p.read_bytes()
        for p in paths.out_dir.rglob("*") if p.is_file() and p.name != "run_info.json"
    }
    # drop selection and reports outputs, rerun, everything must match
    for path in paths.stage_outputs("selection") + paths.stage_outputs("reports"):
        path.unlink()
    run_pipeline(config)
    after = {
        p.relative_to(paths.out_dir).as_posix(): p.read_bytes()
        for p in paths.out_dir.rglob("*") if p.is_file() and p.name != "run_info.json"
    }
    assert before == after


def _free_port():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    return port


def test_run_pipeline_backend_failure_marks_downstream_pending(tmp_path):
    config = PipelineConfig.from_dict(base_config(
        tmp_path,
        backend={"kind": "http", "endpoint_url": f"http://127.0.0.1:{_free_port()}/v1",
                 "model_id": "m", "max_retries": 0, "timeout_ms": 2000,
                 "backoff_base_ms": 1},
    ))
    manifest = run_pipeline(config)
    assert manifest.stage_status["sample"] == "done"
    assert manifest.stage_status["catalog"] == "done"
    assert manifest.stage_status["inference_is"] == "failed"
    for stage in ("metrics", "selection", "validation", "reports"):
        assert manifest.stage_status[stage] == "pending"
    assert manifest.stage_error["error"] == "BackendDown"
    # manifest persisted with the diagnostic
    reloaded = load_manifest(RunPaths(config.output_dir).manifest)
    assert reloaded.stage_error["stage"] == "inference_is"


def test_generalization_delta_identity(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path))
    run_pipeline(config)
    paths = RunPaths(config.output_dir)
    report = json.loads(paths.generalization.read_text())
    is_rows = {r["prompt_id"]: r for r in load_metrics_csv(paths.metrics_is)}
    oos_rows = {r["prompt_id"]: r for r in load_metrics_csv(paths.metrics_oos)}
    pid = report["prompt_id"]
    assert report["delta_f1"] == oos_rows[pid]["f1"] - is_rows[pid]["f1"]
    assert report["delta_bias"] == oos_rows[pid]["bias"] - is_rows[pid]["bias"]
    assert report["delta_sigma"] == oos_rows[pid]["sigma_f1"] - is_rows[pid]["sigma_f1"]
    assert report["abs_delta_f1"] == abs(report["delta_f1"])


def test_validate_all_prompts_mode(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path, validate_all_prompts=True))
    manifest = run_pipeline(config)
    assert manifest.all_done
    paths = RunPaths(config.output_dir)
    oos_rows = load_metrics_csv(paths.metrics_oos)
    assert len(oos_rows) == 28
    lines = paths.report_generalization.read_text().strip().splitlines()
    assert len(lines) == 1 + 7  # header + one row per family


def test_default_oos_validation_covers_only_chosen(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path))
    run_pipeline(config)
    paths = RunPaths(config.output_dir)
    oos_rows = load_metrics_csv(paths.metrics_oos)
    assert len(oos_rows) == 1
    lines = paths.report_generalization.read_text().strip().splitlines()
    assert len(lines) == 2


# --- validate_oos edge cases --------------------------------------------------

def _dummy_recommendation(prompt_id="DI-1"):
    ms = MetricSet(accuracy=0.9, precision=0.9, recall=0.9, f1=0.9,
                   macro_f1=0.9, bias=0.0)
    chosen = RankedPrompt(prompt_id=prompt_id, metrics=ms, sigma_f1=0.01,
                          rank=1, eligible=True, exclusion_reasons=())
    return Recommendation(chosen=chosen, runners_up=(), rationale="r",
                          criteria_used=SelectionCriteria())


def test_validate_oos_empty_split():
    catalog = generate_catalog()
    split = CorpusSplit(balanced_corpus(2, 2), LabeledCorpus(()))
    backend = BackendConfig(kind="mock", mock_profile=MockProfile.default())
    with pytest.raises(EmptyOOS):
        validate_oos(_dummy_recommendation(), catalog, split, backend)


def test_validate_oos_unknown_prompt():
    catalog = generate_catalog(families=["RP"])
    split = CorpusSplit(balanced_corpus(2, 2), balanced_corpus(4, 4, prefix="o"))
    backend = BackendConfig(kind="mock", mock_profile=MockProfile.default())
    with pytest.raises(UnknownPrompt):
        validate_oos(_dummy_recommendation("DI-1"), catalog, split, backend)


# --- reports ------------------------------------------------------------------

def test_emit_reports_requires_artifacts(tmp_path):
    with pytest.raises(ArtifactMissing):
        emit_reports(tmp_path)


def test_summary_contents(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path))
    run_pipeline(config)
    paths = RunPaths(config.output_dir)
    summary = paths.summary.read_text()
    assert "| Prompt ID | Approach | F1 | Accuracy | Precision / Recall |" in summary
    lines = summary.splitlines()
    start = lines.index("| Prompt ID | Approach | F1 | Accuracy | Precision / Recall |")
    table_rows = []
    for line in lines[start + 2:]:  # skip header and separator
        if not line.startswith("|"):
            break
        table_rows.append(line)
    assert len(table_rows) == 5
    assert "macro-F1" in summary
    rec = json.loads(paths.recommendation_json.read_text())
    assert rec["chosen"]["prompt_id"] in summary
    combined = load_metrics_csv(paths.report_metrics)
    assert {r["split"] for r in combined} == {"is", "oos"}


def test_recommendation_files(tmp_path):
    config = PipelineConfig.from_dict(base_config(tmp_path))
    run_pipeline(config)
    paths = RunPaths(config.output_dir)
    payload = json.loads(paths.recommendation_json.read_text())
    assert set(payload) == {"chosen", "runners_up", "rationale", "criteria_used",
                            "input_hash"}
    from promptscreen.hashutil import sha256_file
    assert payload["input_hash"] == sha256_file(paths.metrics_is)
    md = paths.recommendation_md.read_text()
    assert payload["chosen"]["prompt_id"] in md


# --- cli ----------------------------------------------------------------------

def test_cli_run_and_stagewise(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli_main(["run", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "reports        done" in out

    # stage-wise rerun over the same artifacts
    assert cli_main(["evaluate", "--config", str(cfg)]) == 0
    assert cli_main(["select", "--config", str(cfg)]) == 0
    assert cli_main(["report", "--config", str(cfg)]) == 0


def test_cli_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1}')
    assert cli_main(["run", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_exit_code_backend_down(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        backend={"kind": "http", "endpoint_url": f"http://127.0.0.1:{_free_port()}/v1",
                 "model_id": "m", "max_retries": 0, "timeout_ms": 2000,
                 "backoff_base_ms": 1},
    )
    assert cli_main(["run", "--config", str(cfg)]) == 3


def test_cli_fail_on_delta(tmp_path):
    cfg = write_config(tmp_path)
    assert cli_main(["run", "--config", str(cfg), "--fail-on-delta", "1.0"]) == 0
    # bundled demo run has a visible IS->OOS gap; a tiny threshold must trip
    assert cli_main(["validate", "--config", str(cfg), "--fail-on-delta", "0.0001"]) == 4


def test_cli_catalog_tools(tmp_path, capsys):
    assert cli_main(["catalog", "list"]) == 0
    assert "28 variants" in capsys.readouterr().out
    out_file = tmp_path / "catalog.json"
    assert cli_main(["catalog", "export", "--out", str(out_file)]) == 0
    capsys.readouterr()
    assert cli_main(["catalog", "validate", str(out_file)]) == 0
    assert "OK" in capsys.readouterr().out


def test_cli_infer_requires_upstream(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli_main(["infer", "--split", "is", "--config", str(cfg)]) == 1
    assert "missing artifact" in capsys.readouterr().err
    assert cli_main(["sample", "--config", str(cfg)]) == 0
    assert cli_main(["catalog", "--config", str(cfg)]) == 0
    assert cli_main(["infer", "--split", "is", "--config", str(cfg)]) == 0
