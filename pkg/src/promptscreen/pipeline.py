"""Stage orchestration, reproducibility manifests, and report generation.

A run executes seven stages in order, each reading only the previous
stages' persisted artifacts:

    sample        corpus -> split/{in_sample,out_of_sample}.jsonl
    catalog       -> catalog.json
    inference_is  -> records/records_is.jsonl
    metrics       -> metrics/{metrics_is.csv,consistency.csv,robustness_is.json}
    selection     -> recommendation.json / recommendation.md
    validation    -> records/records_oos.jsonl, metrics/metrics_oos.csv,
                     metrics/generalization.json
    reports       -> reports/{summary.md,metrics.csv,consistency.csv,
                     generalization.csv}

Stages whose outputs already exist are skipped, so deleting a downstream
artifact and re-running resumes from the earliest missing stage. manifest.json
digests every artifact; with the mock backend a fixed configuration
reproduces every byte regardless of parallelism. Wall-clock timestamps live
in run_info.json, which is deliberately left out of the digest list so
manifests stay byte-identical across reruns.
"""

from __future__ import annotations

import datetime as _dt
import json
import time
from dataclasses import dataclass
from pathlib import Path

from ._version import __version__
from .catalog import (
    FAMILY_DISPLAY,
    PromptCatalog,
    family_of_prompt_id,
    generate_catalog,
    load_catalog,
    write_catalog,
)
from .dataset import (
    CorpusSplit,
    LabeledCorpus,
    SamplePlan,
    build_in_sample,
    load_corpus,
    partition_k,
    write_split,
)
from .errors import (
    ArtifactMissing,
    ConfigError,
    EmptyOOS,
    PromptScreenError,
    UnknownPrompt,
)
from .hashutil import canonical_json, derive_seed, sha256_file, sha256_text
from .inference import (
    BackendConfig,
    MockProfile,
    execute_batch,
    load_records,
    write_records,
)
from .metrics import (
    MetricSet,
    confusion,
    consistency,
    load_metrics_csv,
    metric_set,
    robustness,
    write_consistency_csv,
    write_metrics_csv,
)
from .selection import (
    Recommendation,
    RankedPrompt,
    SelectionCriteria,
    rank_and_recommend,
    write_recommendation,
)

STAGES = ("sample", "catalog", "inference_is", "metrics", "selection",
          "validation", "reports")

# Knobs that change how a run executes but not what it computes; they are
# excluded from the config hash so reruns at different parallelism or with
# different retry budgets still count as the same configuration.
_EXEC_ONLY_BACKEND_KEYS = ("parallelism", "timeout_ms", "max_retries", "backoff_base_ms")


# --- configuration ----------------------------------------------------------

_TOP_LEVEL_KEYS = {
    "corpus_path", "corpus_format", "seed", "runs", "output_dir", "top_k",
    "validate_all_prompts", "sample_plan", "catalog", "backend",
    "mock_profile", "robustness", "criteria",
}
_SAMPLE_KEYS = {"in_sample_fraction", "diversity_weight", "seed"}
_CATALOG_KEYS = {"families", "per_family", "indices"}
_BACKEND_KEYS = {"kind", "endpoint_url", "model_id", "temperature",
                 "max_output_tokens", "timeout_ms", "max_retries",
                 "parallelism", "seed", "backoff_base_ms"}
_PROFILE_KEYS = {"accuracy", "positive_rate_shift", "oos_drift"}
_ROBUSTNESS_KEYS = {"k", "slice_kind"}
_CRITERIA_KEYS = {"bias_max", "sigma_max", "min_recall"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: str
    output_dir: str
    seed: int = 0
    runs: int = 1
    top_k: int = 5
    validate_all_prompts: bool = False
    corpus_format: str | None = None
    sample_plan: SamplePlan = SamplePlan()
    catalog_families: tuple | None = None
    catalog_per_family: int = 4
    catalog_indices: tuple | None = None
    backend: BackendConfig = BackendConfig()
    robustness_k: int = 3
    slice_kind: str = "partition"
    criteria: SelectionCriteria = SelectionCriteria()
    base_dir: str = "."

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(data, _TOP_LEVEL_KEYS, "config")
        if "corpus_path" not in data:
            raise ConfigError("config is missing corpus_path")

        master = data.get("seed", 0)
        if not isinstance(master, int):
            raise ConfigError("seed must be an integer")

        sample_raw = data.get("sample_plan", {})
        _check_keys(sample_raw, _SAMPLE_KEYS, "sample_plan")
        catalog_raw = data.get("catalog", {})
        _check_keys(catalog_raw, _CATALOG_KEYS, "catalog")
        backend_raw = dict(data.get("backend", {}))
        _check_keys(backend_raw, _BACKEND_KEYS, "backend")
        robustness_raw = data.get("robustness", {})
        _check_keys(robustness_raw, _ROBUSTNESS_KEYS, "robustness")
        criteria_raw = data.get("criteria", {})
        _check_keys(criteria_raw, _CRITERIA_KEYS, "criteria")

        profile_raw = data.get("mock_profile")
        profile = None
        if profile_raw is not None:
            _check_keys(profile_raw, _PROFILE_KEYS, "mock_profile")
            try:
                profile = MockProfile(
                    accuracy=dict(profile_raw.get("accuracy", {})),
                    positive_rate_shift=dict(profile_raw.get("positive_rate_shift", {})),
                    oos_drift=profile_raw.get("oos_drift", 0.0),
                )
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"invalid mock_profile: {exc}") from exc

        try:
            plan = SamplePlan(
                in_sample_fraction=sample_raw.get("in_sample_fraction", 0.2),
                diversity_weight=sample_raw.get("diversity_weight", 1.0),
                seed=sample_raw.get("seed", derive_seed(master, "sample")),
            )
            backend_raw.setdefault("seed", derive_seed(master, "inference"))
            if backend_raw.get("kind", "mock") == "mock":
                backend_raw["mock_profile"] = profile if profile is not None else MockProfile.default()
            backend = BackendConfig(**backend_raw)
            criteria = SelectionCriteria(
                bias_max=criteria_raw.get("bias_max", 0.45),
                sigma_max=criteria_raw.get("sigma_max", 0.10),
                min_recall=criteria_raw.get("min_recall", 0.0),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

        families = catalog_raw.get("families")
        indices = catalog_raw.get("indices")
        config = cls(
            corpus_path=data["corpus_path"],
            corpus_format=data.get("corpus_format"),
            output_dir=data.get("output_dir", "promptscreen_out"),
            seed=master,
            runs=data.get("runs", 1),
            top_k=data.get("top_k", 5),
            validate_all_prompts=bool(data.get("validate_all_prompts", False)),
            sample_plan=plan,
            catalog_families=tuple(families) if families is not None else None,
            catalog_per_family=catalog_raw.get("per_family", 4),
            catalog_indices=tuple(indices) if indices is not None else None,
            backend=backend,
            robustness_k=robustness_raw.get("k", 3),
            slice_kind=robustness_raw.get("slice_kind", "partition"),
            criteria=criteria,
            base_dir=base_dir,
        )
        config.validate()
        return config

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path.name}: invalid JSON ({exc.msg})") from exc
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key == "backend_kind":
                data.setdefault("backend", {})["kind"] = value
            else:
                data[key] = value
        return cls.from_dict(data, base_dir=str(path.parent))

    def validate(self) -> None:
        if self.runs < 1:
            raise ConfigError("runs must be positive")
        if self.top_k < 1:
            raise ConfigError("top_k must be positive")
        if self.robustness_k < 2:
            raise ConfigError("robustness.k must be >= 2")
        if self.slice_kind not in ("partition", "repeated_run"):
            raise ConfigError(f"unknown slice_kind {self.slice_kind!r}")
        if self.slice_kind == "repeated_run" and self.runs < 2:
            raise ConfigError("slice_kind repeated_run requires runs >= 2")
        if self.backend.kind == "mock" and self.backend.mock_profile is None:
            raise ConfigError("mock backend requires a mock profile")
        if not (2 <= self.catalog_per_family <= 4):
            raise ConfigError("catalog.per_family must be in 2..4")

    def resolved_corpus_path(self) -> Path:
        p = Path(self.corpus_path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def canonical_dict(self) -> dict:
        backend = {
            "kind": self.backend.kind,
            "endpoint_url": self.backend.endpoint_url,
            "model_id": self.backend.model_id,
            "temperature": self.backend.temperature,
            "max_output_tokens": self.backend.max_output_tokens,
            "seed": self.backend.seed,
        }
        profile = self.backend.mock_profile
        return {
            "corpus_path": self.corpus_path,
            "corpus_format": self.corpus_format,
            "seed": self.seed,
            "runs": self.runs,
            "top_k": self.top_k,
            "validate_all_prompts": self.validate_all_prompts,
            "sample_plan": {
                "in_sample_fraction": self.sample_plan.in_sample_fraction,
                "diversity_weight": self.sample_plan.diversity_weight,
                "seed": self.sample_plan.seed,
            },
            "catalog": {
                "families": list(self.catalog_families) if self.catalog_families else None,
                "per_family": self.catalog_per_family,
                "indices": list(self.catalog_indices) if self.catalog_indices else None,
            },
            "backend": backend,
            "mock_profile": profile.to_dict() if profile is not None else None,
            "robustness": {"k": self.robustness_k, "slice_kind": self.slice_kind},
            "criteria": self.criteria.to_dict(),
        }

    def config_hash(self) -> str:
        return sha256_text(canonical_json(self.canonical_dict()))

    def seeds(self) -> dict:
        return {
            "master": self.seed,
            "sample": self.sample_plan.seed,
            "inference": self.backend.seed,
            "partitions_is": derive_seed(self.seed, "partitions_is"),
            "partitions_oos": derive_seed(self.seed, "partitions_oos"),
        }


# --- artifacts layout -------------------------------------------------------

class RunPaths:
    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.manifest = self.out_dir / "manifest.json"
        self.run_info = self.out_dir / "run_info.json"
        self.config_canonical = self.out_dir / "config_canonical.json"
        self.split_dir = self.out_dir / "split"
        self.in_sample = self.split_dir / "in_sample.jsonl"
        self.out_of_sample = self.split_dir / "out_of_sample.jsonl"
        self.split_manifest = self.split_dir / "split_manifest.json"
        self.catalog = self.out_dir / "catalog.json"
        self.records_is = self.out_dir / "records" / "records_is.jsonl"
        self.records_oos = self.out_dir / "records" / "records_oos.jsonl"
        self.metrics_is = self.out_dir / "metrics" / "metrics_is.csv"
        self.metrics_oos = self.out_dir / "metrics" / "metrics_oos.csv"
        self.robustness_is = self.out_dir / "metrics" / "robustness_is.json"
        self.robustness_oos = self.out_dir / "metrics" / "robustness_oos.json"
        self.consistency = self.out_dir / "metrics" / "consistency.csv"
        self.generalization = self.out_dir / "metrics" / "generalization.json"
        self.recommendation_json = self.out_dir / "recommendation.json"
        self.recommendation_md = self.out_dir / "recommendation.md"
        self.reports_dir = self.out_dir / "reports"
        self.summary = self.reports_dir / "summary.md"
        self.report_metrics = self.reports_dir / "metrics.csv"
        self.report_consistency = self.reports_dir / "consistency.csv"
        self.report_generalization = self.reports_dir / "generalization.csv"

    def stage_outputs(self, stage: str) -> list:
        return {
            "sample": [self.in_sample, self.out_of_sample, self.split_manifest],
            "catalog": [self.catalog],
            "inference_is": [self.records_is],
            "metrics": [self.metrics_is, self.consistency, self.robustness_is],
            "selection": [self.recommendation_json, self.recommendation_md],
            "validation": [self.records_oos, self.metrics_oos,
                           self.robustness_oos, self.generalization],
            "reports": [self.summary, self.report_metrics,
                        self.report_consistency, self.report_generalization],
        }[stage]

    # volatile or self-referential files that stay out of the digest list
    def undigested(self) -> set:
        return {self.manifest, self.run_info}


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _write_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ArtifactMissing(f"missing artifact {path} ({hint})")
    return path


# --- manifest & reports types -----------------------------------------------

@dataclass(frozen=True)
class RunManifest:
    tool_version: str
    config_hash: str
    seeds: dict
    stage_status: dict
    artifacts: dict
    stage_error: dict | None = None

    def to_dict(self) -> dict:
        payload = {
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "stage_status": self.stage_status,
            "artifacts": self.artifacts,
        }
        if self.stage_error is not None:
            payload["stage_error"] = self.stage_error
        return payload

    @property
    def all_done(self) -> bool:
        return all(v == "done" for v in self.stage_status.values())


@dataclass(frozen=True)
class GeneralizationReport:
    prompt_id: str
    in_sample: MetricSet
    in_sample_sigma_f1: float
    out_of_sample: MetricSet
    out_of_sample_sigma_f1: float

    @property
    def delta_f1(self) -> float:
        return self.out_of_sample.f1 - self.in_sample.f1

    @property
    def delta_bias(self) -> float:
        return self.out_of_sample.bias - self.in_sample.bias

    @property
    def delta_sigma(self) -> float:
        return self.out_of_sample_sigma_f1 - self.in_sample_sigma_f1

    @property
    def abs_delta_f1(self) -> float:
        return abs(self.delta_f1)

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "in_sample": {**self.in_sample.to_dict(), "sigma_f1": self.in_sample_sigma_f1},
            "out_of_sample": {**self.out_of_sample.to_dict(),
                              "sigma_f1": self.out_of_sample_sigma_f1},
            "delta_f1": self.delta_f1,
            "delta_bias": self.delta_bias,
            "delta_sigma": self.delta_sigma,
            "abs_delta_f1": self.abs_delta_f1,
        }


# --- per-prompt metric computation ------------------------------------------

def prompt_metric_rows(records, corpus: LabeledCorpus, split_name: str,
                       k: int, slice_kind: str, partition_seed: int,
                       runs: int = 1):
    """Per-prompt metric rows plus robustness detail for one record set.

    Slices are stratified partitions of the corpus (slice_kind "partition")
    or the per-run record groups (slice_kind "repeated_run").
    """
    gold = corpus.gold_map()
    by_prompt = {}
    for rec in records:
        by_prompt.setdefault(rec.prompt_id, []).append(rec)

    partitions = None
    if slice_kind == "partition":
        partitions = partition_k(corpus, k, partition_seed).partitions

    rows, detail = [], {}
    for prompt_id in sorted(by_prompt):
        recs = by_prompt[prompt_id]
        counts = confusion(recs, gold)
        ms = metric_set(counts)
        if slice_kind == "partition":
            f1s = []
            for part in partitions:
                ids = set(part)
                f1s.append(metric_set(confusion([r for r in recs if r.transcript_id in ids], gold)).f1)
        else:
            f1s = [
                metric_set(confusion([r for r in recs if r.run_index == i], gold)).f1
                for i in range(runs)
            ]
        rob = robustness(f1s, slice_kind)
        rows.append({
            "prompt_id": prompt_id,
            "family": family_of_prompt_id(prompt_id).value,
            "split": split_name,
            "accuracy": ms.accuracy,
            "precision": ms.precision,
            "recall": ms.recall,
            "f1": ms.f1,
            "macro_f1": ms.macro_f1,
            "bias": ms.bias,
            "sigma_f1": rob.sigma_f1,
            "n_slices": rob.n,
            "invalid_rate": counts.invalid_count / counts.total,
        })
        detail[prompt_id] = {
            "f1_per_slice": list(rob.f1_per_slice),
            "mean_f1": rob.mean_f1,
            "sigma_f1": rob.sigma_f1,
            "n": rob.n,
            "slice_kind": rob.slice_kind,
        }
    return rows, detail


def _metric_rows_to_tuples(rows):
    out = []
    for row in rows:
        ms = MetricSet(
            accuracy=row["accuracy"], precision=row["precision"], recall=row["recall"],
            f1=row["f1"], macro_f1=row["macro_f1"], bias=row["bias"],
        )
        out.append((row["prompt_id"], ms, row["sigma_f1"]))
    return out


# --- out-of-sample validation -----------------------------------------------

def _oos_evaluation(recommendation: Recommendation, catalog: PromptCatalog,
                    split: CorpusSplit, backend: BackendConfig, k: int,
                    slice_kind: str, partition_seed: int, runs: int,
                    validate_all: bool):
    oos = split.out_of_sample
    if len(oos) == 0:
        raise EmptyOOS("out-of-sample corpus is empty")
    chosen_id = recommendation.chosen.prompt_id
    chosen_variant = catalog.get(chosen_id)
    if chosen_variant is None:
        raise UnknownPrompt(f"chosen prompt {chosen_id!r} is not in the catalog")
    target = catalog if validate_all else PromptCatalog((chosen_variant,))

    records = execute_batch(target, oos, backend, runs=runs, is_oos=True)
    rows, detail = prompt_metric_rows(records, oos, "oos", k, slice_kind,
                                      partition_seed, runs)
    chosen_row = next(r for r in rows if r["prompt_id"] == chosen_id)
    report = GeneralizationReport(
        prompt_id=chosen_id,
        in_sample=recommendation.chosen.metrics,
        in_sample_sigma_f1=recommendation.chosen.sigma_f1,
        out_of_sample=MetricSet(
            accuracy=chosen_row["accuracy"], precision=chosen_row["precision"],
            recall=chosen_row["recall"], f1=chosen_row["f1"],
            macro_f1=chosen_row["macro_f1"], bias=chosen_row["bias"],
        ),
        out_of_sample_sigma_f1=chosen_row["sigma_f1"],
    )
    return report, records, rows, detail


def validate_oos(recommendation: Recommendation, catalog: PromptCatalog,
                 split: CorpusSplit, backend: BackendConfig, k: int = 3,
                 slice_kind: str = "partition", partition_seed: int = 0,
                 runs: int = 1, validate_all: bool = False) -> GeneralizationReport:
    """Run the chosen prompt (optionally the whole catalog) on the
    out-of-sample corpus and report the in-sample -> out-of-sample shift."""
    report, _, _, _ = _oos_evaluation(
        recommendation, catalog, split, backend, k, slice_kind,
        partition_seed, runs, validate_all,
    )
    return report


# --- stages -----------------------------------------------------------------

def _stage_sample(config: PipelineConfig, paths: RunPaths) -> None:
    corpus = load_corpus(config.resolved_corpus_path(), config.corpus_format)
    split = build_in_sample(corpus, config.sample_plan)
    write_split(split, paths.split_dir, config.sample_plan)


def _stage_catalog(config: PipelineConfig, paths: RunPaths) -> None:
    catalog = generate_catalog(
        families=config.catalog_families,
        per_family=config.catalog_per_family,
        indices=config.catalog_indices,
    )
    write_catalog(catalog, paths.catalog)


def _stage_inference_is(config: PipelineConfig, paths: RunPaths) -> None:
    catalog = load_catalog(_require(paths.catalog, "run the catalog stage first"))
    corpus = load_corpus(_require(paths.in_sample, "run the sample stage first"))
    records = execute_batch(catalog, corpus, config.backend, runs=config.runs, is_oos=False)
    write_records(records, paths.records_is)


def _stage_metrics(config: PipelineConfig, paths: RunPaths) -> None:
    records = load_records(_require(paths.records_is, "run the inference stage first"))
    corpus = load_corpus(_require(paths.in_sample, "run the sample stage first"))
    rows, detail = prompt_metric_rows(
        records, corpus, "is", config.robustness_k, config.slice_kind,
        derive_seed(config.seed, "partitions_is"), config.runs,
    )
    write_metrics_csv(rows, paths.metrics_is)
    _write_json(paths.robustness_is, detail)

    run0 = {}
    for rec in records:
        if rec.run_index == 0:
            run0.setdefault(rec.prompt_id, {})[rec.transcript_id] = rec.parsed
    write_consistency_csv(consistency(run0), paths.consistency)


def _stage_selection(config: PipelineConfig, paths: RunPaths) -> None:
    csv_path = _require(paths.metrics_is, "run the metrics stage first")
    rows = load_metrics_csv(csv_path)
    _, recommendation = rank_and_recommend(
        _metric_rows_to_tuples(rows), config.criteria, k=config.top_k
    )
    write_recommendation(
        recommendation, paths.recommendation_json, paths.recommendation_md,
        input_hash=sha256_file(csv_path),
    )


def load_recommendation(path) -> Recommendation:
    data = json.loads(Path(path).read_text(encoding="utf-8"))

    def entry(row):
        return RankedPrompt(
            prompt_id=row["prompt_id"],
            metrics=MetricSet(**row["metrics"]),
            sigma_f1=row["sigma_f1"],
            rank=row["rank"],
            eligible=row["eligible"],
            exclusion_reasons=tuple(row["exclusion_reasons"]),
        )

    return Recommendation(
        chosen=entry(data["chosen"]),
        runners_up=tuple(entry(r) for r in data["runners_up"]),
        rationale=data["rationale"],
        criteria_used=SelectionCriteria(**data["criteria_used"]),
    )


def _stage_validation(config: PipelineConfig, paths: RunPaths) -> None:
    recommendation = load_recommendation(
        _require(paths.recommendation_json, "run the selection stage first")
    )
    catalog = load_catalog(_require(paths.catalog, "run the catalog stage first"))
    split = CorpusSplit(
        in_sample=load_corpus(_require(paths.in_sample, "run the sample stage first")),
        out_of_sample=load_corpus(_require(paths.out_of_sample, "run the sample stage first")),
    )
    report, records, rows, detail = _oos_evaluation(
        recommendation, catalog, split, config.backend, config.robustness_k,
        config.slice_kind, derive_seed(config.seed, "partitions_oos"),
        config.runs, config.validate_all_prompts,
    )
    write_records(records, paths.records_oos)
    write_metrics_csv(rows, paths.metrics_oos)
    _write_json(paths.robustness_oos, detail)
    _write_json(paths.generalization, report.to_dict())


def _stage_reports(config: PipelineConfig, paths: RunPaths) -> None:
    emit_reports(paths.out_dir, top_k=config.top_k)


_STAGE_FUNCS = {
    "sample": _stage_sample,
    "catalog": _stage_catalog,
    "inference_is": _stage_inference_is,
    "metrics": _stage_metrics,
    "selection": _stage_selection,
    "validation": _stage_validation,
    "reports": _stage_reports,
}


def run_stage(config: PipelineConfig, stage: str) -> None:
    """Execute a single stage against the configured output directory."""
    if stage not in _STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}")
    _STAGE_FUNCS[stage](config, RunPaths(config.output_dir))


# --- reports ----------------------------------------------------------------

def emit_reports(out_dir, top_k: int = 5) -> list:
    """Assemble the report bundle from persisted stage artifacts.

    Writes reports/{metrics.csv,consistency.csv,generalization.csv,summary.md}
    and raises ArtifactMissing when a referenced artifact is absent.
    """
    paths = RunPaths(out_dir)
    metrics_is = load_metrics_csv(_require(paths.metrics_is, "metrics stage output"))
    metrics_oos = load_metrics_csv(_require(paths.metrics_oos, "validation stage output"))
    _require(paths.consistency, "metrics stage output")
    _require(paths.recommendation_json, "selection stage output")
    generalization = json.loads(
        _require(paths.generalization, "validation stage output").read_text(encoding="utf-8")
    )
    recommendation = json.loads(paths.recommendation_json.read_text(encoding="utf-8"))

    paths.reports_dir.mkdir(parents=True, exist_ok=True)

    combined = sorted(metrics_is + metrics_oos, key=lambda r: (r["prompt_id"], r["split"]))
    write_metrics_csv(combined, paths.report_metrics)
    paths.report_consistency.write_bytes(paths.consistency.read_bytes())
    _write_generalization_csv(metrics_is, metrics_oos, paths.report_generalization)
    _write_summary_md(paths, metrics_is, metrics_oos, recommendation,
                      generalization, top_k)
    return [paths.report_metrics, paths.report_consistency,
            paths.report_generalization, paths.summary]


def _write_generalization_csv(metrics_is, metrics_oos, path: Path) -> None:
    """Family-level in-sample vs out-of-sample comparison over the prompts
    that were evaluated on both splits."""
    import csv as _csv

    oos_by_id = {row["prompt_id"]: row for row in metrics_oos}
    is_by_id = {row["prompt_id"]: row for row in metrics_is}
    shared = [pid for pid in oos_by_id if pid in is_by_id]
    families = sorted({oos_by_id[pid]["family"] for pid in shared})

    def mean(values):
        values = list(values)
        return sum(values) / len(values)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow([
            "family", "n_prompts", "is_f1", "oos_f1", "delta_f1",
            "is_bias", "oos_bias", "delta_bias",
            "is_sigma_f1", "oos_sigma_f1", "delta_sigma_f1",
        ])
        for family in families:
            ids = sorted(pid for pid in shared if oos_by_id[pid]["family"] == family)
            is_f1 = mean(is_by_id[p]["f1"] for p in ids)
            oos_f1 = mean(oos_by_id[p]["f1"] for p in ids)
            is_bias = mean(is_by_id[p]["bias"] for p in ids)
            oos_bias = mean(oos_by_id[p]["bias"] for p in ids)
            is_sigma = mean(is_by_id[p]["sigma_f1"] for p in ids)
            oos_sigma = mean(oos_by_id[p]["sigma_f1"] for p in ids)
            writer.writerow([
                family, len(ids), is_f1, oos_f1, oos_f1 - is_f1,
                is_bias, oos_bias, oos_bias - is_bias,
                is_sigma, oos_sigma, oos_sigma - is_sigma,
            ])


def _family_label(family_code: str) -> str:
    family = family_of_prompt_id(f"{family_code}-1")
    return f"{FAMILY_DISPLAY[family]} ({family.value})"


def _write_summary_md(paths: RunPaths, metrics_is, metrics_oos,
                      recommendation: dict, generalization: dict,
                      top_k: int) -> None:
    split_info = json.loads(paths.split_manifest.read_text(encoding="utf-8"))
    chosen = recommendation["chosen"]

    ranked = sorted(metrics_is, key=lambda r: (-r["f1"], r["bias"], r["sigma_f1"], r["prompt_id"]))
    top = ranked[:max(top_k, 5)]

    lines = [
        "# Evaluation summary",
        "",
        f"- chosen prompt: **{chosen['prompt_id']}**",
        f"- in-sample counts: {split_info['in_sample_counts']}",
        f"- out-of-sample counts: {split_info['out_of_sample_counts']}",
        f"- selection criteria: {recommendation['criteria_used']}",
        "",
        "## Top prompts (in-sample)",
        "",
        "| Prompt ID | Approach | F1 | Accuracy | Precision / Recall |",
        "|---|---|---|---|---|",
    ]
    for row in top:
        lines.append(
            f"| {row['prompt_id']} | {_family_label(row['family'])} "
            f"| {row['f1']:.3f} | {row['accuracy']:.3f} "
            f"| {row['precision']:.2f} / {row['recall']:.2f} |"
        )

    mean_macro_is = sum(r["macro_f1"] for r in metrics_is) / len(metrics_is)
    lines += [
        "",
        "## Macro-F1",
        "",
        f"- mean macro-F1 across all prompts (in-sample): {mean_macro_is:.3f}",
        f"- chosen prompt macro-F1 (out-of-sample): "
        f"{generalization['out_of_sample']['macro_f1']:.3f}",
    ]
    if len(metrics_oos) > 1:
        mean_macro_oos = sum(r["macro_f1"] for r in metrics_oos) / len(metrics_oos)
        lines.append(
            f"- mean macro-F1 across validated prompts (out-of-sample): {mean_macro_oos:.3f}"
        )

    lines += [
        "",
        "## Generalization (chosen prompt, in-sample vs out-of-sample)",
        "",
        "| Metric | In-sample | Out-of-sample | Delta |",
        "|---|---|---|---|",
        f"| F1 | {generalization['in_sample']['f1']:.3f} "
        f"| {generalization['out_of_sample']['f1']:.3f} "
        f"| {generalization['delta_f1']:+.3f} |",
        f"| Bias | {generalization['in_sample']['bias']:.3f} "
        f"| {generalization['out_of_sample']['bias']:.3f} "
        f"| {generalization['delta_bias']:+.3f} |",
        f"| sigma_F1 | {generalization['in_sample']['sigma_f1']:.3f} "
        f"| {generalization['out_of_sample']['sigma_f1']:.3f} "
        f"| {generalization['delta_sigma']:+.3f} |",
        "",
        "## Selection rationale",
        "",
        recommendation["rationale"],
        "",
    ]
    _atomic_write_text(paths.summary, "\n".join(lines))


# --- run orchestration ------------------------------------------------------

def _collect_artifacts(paths: RunPaths) -> dict:
    skip = paths.undigested()
    artifacts = {}
    for file in sorted(paths.out_dir.rglob("*")):
        if file.is_file() and file not in skip and not file.name.endswith(".tmp"):
            artifacts[file.relative_to(paths.out_dir).as_posix()] = sha256_file(file)
    return artifacts


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Execute all stages in order, resuming over existing artifacts.

    Returns the manifest in all cases; a failed stage is recorded with its
    diagnostic and downstream stages stay pending. Raises ConfigError before
    any stage runs if the configuration is invalid or the output directory
    already holds a different configuration's run.
    """
    config.validate()
    paths = RunPaths(config.output_dir)
    paths.out_dir.mkdir(parents=True, exist_ok=True)
    cfg_hash = config.config_hash()

    if paths.manifest.exists():
        previous = json.loads(paths.manifest.read_text(encoding="utf-8"))
        if previous.get("config_hash") != cfg_hash:
            raise ConfigError(
                f"output dir {paths.out_dir} holds a run with a different "
                "configuration; use a fresh directory"
            )

    _atomic_write_text(
        paths.config_canonical,
        json.dumps(config.canonical_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
    )

    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    status = {stage: "pending" for stage in STAGES}
    stage_error = None
    stage_seconds = {}
    for stage in STAGES:
        begin = time.perf_counter()
        try:
            if not all(p.exists() for p in paths.stage_outputs(stage)):
                _STAGE_FUNCS[stage](config, paths)
            status[stage] = "done"
        except (PromptScreenError, OSError) as exc:
            status[stage] = "failed"
            stage_error = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
        finally:
            stage_seconds[stage] = round(time.perf_counter() - begin, 6)
        if stage_error is not None:
            break

    manifest = RunManifest(
        tool_version=__version__,
        config_hash=cfg_hash,
        seeds=config.seeds(),
        stage_status=status,
        artifacts=_collect_artifacts(paths),
        stage_error=stage_error,
    )
    _atomic_write_text(
        paths.manifest,
        json.dumps(manifest.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
    )
    _atomic_write_text(
        paths.run_info,
        json.dumps(
            {
                "started_at": started,
                "finished_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "stage_seconds": stage_seconds,
                "parallelism": config.backend.parallelism,
            },
            sort_keys=True, indent=2,
        ) + "\n",
    )
    return manifest


def load_manifest(path) -> RunManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(
        tool_version=data["tool_version"],
        config_hash=data["config_hash"],
        seeds=data["seeds"],
        stage_status=data["stage_status"],
        artifacts=data["artifacts"],
        stage_error=data.get("stage_error"),
    )
