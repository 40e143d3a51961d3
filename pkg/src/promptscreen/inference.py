"""Prompt execution against an LLM backend.

Two backends: an OpenAI-compatible chat-completions HTTP endpoint, and a
deterministic mock that draws predictions from a stable hash so whole runs
are bit-reproducible. Every (prompt, transcript, run) triple yields exactly
one record; failures surface as records with an `invalid` prediction rather
than silently disappearing.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import requests

from .catalog import PromptCatalog, family_of_prompt_id, render_prompt
from .dataset import GoldLabel, LabeledCorpus
from .errors import BackendDown, DuplicateId, EmptyInput, ProfileIncomplete
from .hashutil import unit_interval

TOKEN_ENV_VAR = "PROMPTSCREEN_API_TOKEN"
_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class Prediction(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    INVALID = "invalid"


@dataclass(frozen=True)
class MockProfile:
    """Synthetic backend behavior, keyed by strategy-family code.

    accuracy: probability of emitting the correct label per family.
    positive_rate_shift: additive shift of the probability of answering
      positive, applied after the accuracy draw is set up (clamped to [0,1]).
    oos_drift: extra error rate applied to out-of-sample items.
    """

    accuracy: dict
    positive_rate_shift: dict = field(default_factory=dict)
    oos_drift: float = 0.0

    def __post_init__(self):
        for fam, value in self.accuracy.items():
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"accuracy[{fam}] must be in [0,1], got {value}")
        for fam, value in self.positive_rate_shift.items():
            if not (-0.5 <= value <= 0.5):
                raise ValueError(f"positive_rate_shift[{fam}] must be in [-0.5,0.5]")
        if not (0.0 <= self.oos_drift <= 0.5):
            raise ValueError(f"oos_drift must be in [0,0.5], got {self.oos_drift}")

    @classmethod
    def default(cls, oos_drift: float = 0.0) -> "MockProfile":
        """Demo profile: direct and role-based prompts work best, long
        reasoning chains drift toward over-predicting the positive class."""
        return cls(
            accuracy={
                "DI": 0.92, "RP": 0.88, "CBP": 0.85, "SR": 0.83,
                "SC": 0.81, "CoT": 0.78, "ACP": 0.75,
            },
            positive_rate_shift={
                "DI": 0.02, "RP": 0.04, "CBP": 0.08, "SR": 0.05,
                "SC": 0.07, "CoT": 0.10, "ACP": 0.12,
            },
            oos_drift=oos_drift,
        )

    def to_dict(self) -> dict:
        return {
            "accuracy": dict(sorted(self.accuracy.items())),
            "positive_rate_shift": dict(sorted(self.positive_rate_shift.items())),
            "oos_drift": self.oos_drift,
        }


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"
    endpoint_url: str | None = None
    model_id: str = "mock-model"
    temperature: float = 0.0
    max_output_tokens: int = 64
    timeout_ms: int = 30000
    max_retries: int = 2
    parallelism: int = 4
    seed: int = 0
    backoff_base_ms: int = 500
    mock_profile: MockProfile | None = None

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ValueError(f"backend kind must be mock or http, got {self.kind!r}")
        if self.kind == "http" and not (self.endpoint_url and self.model_id):
            raise ValueError("http backend requires endpoint_url and model_id")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        for name in ("max_output_tokens", "timeout_ms", "parallelism"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def resolved_profile(self) -> MockProfile:
        return self.mock_profile if self.mock_profile is not None else MockProfile.default()


@dataclass(frozen=True)
class InferenceRecord:
    prompt_id: str
    transcript_id: str
    run_index: int
    raw_output: str
    parsed: Prediction
    latency_ms: float
    backend_meta: dict

    @property
    def sort_key(self):
        return (self.prompt_id, self.transcript_id, self.run_index)

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "transcript_id": self.transcript_id,
            "run_index": self.run_index,
            "raw_output": self.raw_output,
            "parsed": self.parsed.value,
            "latency_ms": self.latency_ms,
            "backend_meta": self.backend_meta,
        }


# --- label parsing ----------------------------------------------------------

_NEGATION_PHRASES = ("not depressed", "no depression", "no signs of depression", "negative")
_AFFIRMATION_PHRASES = ("depressed", "depression present", "positive", "yes")


def parse_label(raw_output: str) -> Prediction:
    """Extract the predicted label from raw model output.

    Rules applied in order, case-insensitively: the canonical LABEL
    directives first, then negation phrases, then affirmation phrases.
    Negation checks always run before affirmation checks so text like
    "not depressed" never matches the bare "depressed" substring.
    Anything that matches no rule is invalid.
    """
    low = raw_output.lower()
    if "label: not_depressed" in low:
        return Prediction.NEGATIVE
    if "label: depressed" in low:
        return Prediction.POSITIVE
    for phrase in _NEGATION_PHRASES:
        if phrase in low:
            return Prediction.NEGATIVE
    for phrase in _AFFIRMATION_PHRASES:
        if phrase in low:
            return Prediction.POSITIVE
    return Prediction.INVALID


# --- mock backend -----------------------------------------------------------

def mock_complete(
    prompt_id: str,
    transcript_id: str,
    gold: GoldLabel,
    is_oos: bool,
    profile: MockProfile,
    seed: int,
    run_index: int = 0,
) -> str:
    """Deterministic synthetic completion for one prompt-transcript pair.

    The draw comes from a stable hash of (seed, prompt_id, transcript_id,
    run_index), so results do not depend on call order or thread schedule.
    """
    family = family_of_prompt_id(prompt_id).value
    if family not in profile.accuracy:
        raise ProfileIncomplete(f"mock profile has no accuracy for family {family!r}")
    accuracy = profile.accuracy[family]
    if is_oos:
        accuracy -= profile.oos_drift
    accuracy = min(1.0, max(0.0, accuracy))
    shift = profile.positive_rate_shift.get(family, 0.0)

    p_positive = accuracy if gold is GoldLabel.POSITIVE else 1.0 - accuracy
    p_positive = min(1.0, max(0.0, p_positive + shift))
    draw = unit_interval(seed, "mock", prompt_id, transcript_id, run_index)
    if draw < p_positive:
        return "LABEL: DEPRESSED"
    return "LABEL: NOT_DEPRESSED"


def _mock_latency_ms(seed: int, prompt_id: str, transcript_id: str, run_index: int) -> float:
    # Synthetic but deterministic, so serialized records stay reproducible.
    return round(5.0 + 45.0 * unit_interval(seed, "latency", prompt_id, transcript_id, run_index), 3)


# --- http backend -----------------------------------------------------------

def _auth_headers() -> dict:
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(TOKEN_ENV_VAR, "").strip()
    if token:
        headers["Authorization"] = f"Bearer {token}"
    return headers


def _http_complete(rendered: str, backend: BackendConfig, task_key: tuple):
    """POST one chat-completions request with retry + exponential backoff.

    Returns (raw_output, latency_ms, meta, transport_failed). Latency sums
    the attempts' network time and excludes backoff sleeps.
    """
    body = {
        "model": backend.model_id,
        "messages": [{"role": "user", "content": rendered}],
        "temperature": backend.temperature,
        "max_tokens": backend.max_output_tokens,
    }
    timeout = backend.timeout_ms / 1000.0
    elapsed_ms = 0.0
    last_error = ""
    for attempt in range(backend.max_retries + 1):
        start = time.perf_counter()
        status = None
        try:
            resp = requests.post(
                backend.endpoint_url, json=body, headers=_auth_headers(), timeout=timeout
            )
            status = resp.status_code
            elapsed_ms += (time.perf_counter() - start) * 1000.0
            if status == 200:
                meta = {"model_id": backend.model_id, "retries": attempt}
                try:
                    payload = resp.json()
                    choice = payload["choices"][0]
                    content = choice["message"]["content"]
                    meta["finish_reason"] = choice.get("finish_reason", "")
                    return content, round(elapsed_ms, 3), meta, False
                except (ValueError, LookupError, TypeError) as exc:
                    meta["finish_reason"] = ""
                    meta["error"] = f"malformed response body: {exc}"
                    return resp.text, round(elapsed_ms, 3), meta, False
            last_error = f"HTTP {status}"
            if status not in _RETRYABLE_STATUSES:
                break
        except requests.RequestException as exc:
            elapsed_ms += (time.perf_counter() - start) * 1000.0
            last_error = f"{type(exc).__name__}: {exc}"
        if attempt < backend.max_retries:
            jitter = unit_interval(backend.seed, "jitter", *task_key, attempt)
            delay_ms = backend.backoff_base_ms * (2**attempt) + jitter * backend.backoff_base_ms * 0.1
            time.sleep(delay_ms / 1000.0)
    meta = {
        "model_id": backend.model_id,
        "retries": backend.max_retries,
        "finish_reason": "",
        "error": last_error,
    }
    return "", round(elapsed_ms, 3), meta, True


# --- batch execution --------------------------------------------------------

def execute_batch(
    catalog: PromptCatalog,
    corpus: LabeledCorpus,
    backend: BackendConfig,
    runs: int = 1,
    is_oos: bool = False,
) -> list:
    """Run every (variant, transcript, run) triple and return sorted records.

    The output always holds |catalog| * |corpus| * runs records, sorted by
    (prompt_id, transcript_id, run_index) regardless of completion order.
    HTTP transport failures are retried with exponential backoff, then kept
    as invalid records; BackendDown is raised only when every request fails
    at the transport level.
    """
    if len(catalog) == 0 or len(corpus) == 0:
        raise EmptyInput("catalog and corpus must both be nonempty")
    if runs < 1:
        raise ValueError("runs must be positive")

    profile = backend.resolved_profile() if backend.kind == "mock" else None
    tasks = [
        (variant, record, run_index)
        for variant in catalog.variants
        for record in corpus.records
        for run_index in range(runs)
    ]

    def run_one(task):
        variant, record, run_index = task
        tid = record.transcript.id
        if backend.kind == "mock":
            raw = mock_complete(
                variant.id, tid, record.label, is_oos, profile, backend.seed, run_index
            )
            rec = InferenceRecord(
                prompt_id=variant.id,
                transcript_id=tid,
                run_index=run_index,
                raw_output=raw,
                parsed=parse_label(raw),
                latency_ms=_mock_latency_ms(backend.seed, variant.id, tid, run_index),
                backend_meta={"model_id": backend.model_id, "retries": 0, "finish_reason": "stop"},
            )
            return rec, False
        rendered = render_prompt(variant, record.transcript)
        raw, latency_ms, meta, failed = _http_complete(rendered, backend, (variant.id, tid, run_index))
        rec = InferenceRecord(
            prompt_id=variant.id,
            transcript_id=tid,
            run_index=run_index,
            raw_output=raw,
            parsed=parse_label(raw) if not failed else Prediction.INVALID,
            latency_ms=latency_ms,
            backend_meta=meta,
        )
        return rec, failed

    workers = max(1, backend.parallelism)
    if workers == 1:
        outcomes = [run_one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, tasks))

    if backend.kind == "http" and outcomes and all(failed for _, failed in outcomes):
        raise BackendDown(
            f"all {len(outcomes)} requests to {backend.endpoint_url} failed "
            f"after {backend.max_retries} retries each"
        )

    records = sorted((rec for rec, _ in outcomes), key=lambda r: r.sort_key)
    if len({r.sort_key for r in records}) != len(records):
        raise DuplicateId("catalog contains duplicate variant ids")
    return records


# --- persistence ------------------------------------------------------------

def write_records(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def load_records(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            records.append(
                InferenceRecord(
                    prompt_id=row["prompt_id"],
                    transcript_id=row["transcript_id"],
                    run_index=row["run_index"],
                    raw_output=row["raw_output"],
                    parsed=Prediction(row["parsed"]),
                    latency_ms=row["latency_ms"],
                    backend_meta=row["backend_meta"],
                )
            )
    return records
