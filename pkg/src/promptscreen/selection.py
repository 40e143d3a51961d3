"""Prompt ranking and recommendation.

Ranking is F1-first with threshold gates rather than a weighted score:
prompts passing the bias, stability, and recall thresholds sort above the
rest, and within each group order is descending F1 with deterministic
tie-breaks (ascending bias, then sigma, then prompt id).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyEvaluation
from .metrics import MetricSet

DEFAULT_TOP_K = 5


@dataclass(frozen=True)
class SelectionCriteria:
    bias_max: float = 0.45
    sigma_max: float = 0.10
    min_recall: float = 0.0

    def __post_init__(self):
        for name in ("bias_max", "sigma_max", "min_recall"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0,1], got {value}")

    def to_dict(self) -> dict:
        return {"bias_max": self.bias_max, "sigma_max": self.sigma_max,
                "min_recall": self.min_recall}


@dataclass(frozen=True)
class RankedPrompt:
    prompt_id: str
    metrics: MetricSet
    sigma_f1: float
    rank: int
    eligible: bool
    exclusion_reasons: tuple

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "rank": self.rank,
            "eligible": self.eligible,
            "exclusion_reasons": list(self.exclusion_reasons),
            "sigma_f1": self.sigma_f1,
            "metrics": self.metrics.to_dict(),
        }


@dataclass(frozen=True)
class Recommendation:
    chosen: RankedPrompt
    runners_up: tuple
    rationale: str
    criteria_used: SelectionCriteria

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen.to_dict(),
            "runners_up": [r.to_dict() for r in self.runners_up],
            "rationale": self.rationale,
            "criteria_used": self.criteria_used.to_dict(),
        }


def _exclusion_reasons(metrics: MetricSet, sigma_f1: float,
                       criteria: SelectionCriteria,
                       ignore_sigma: bool = False,
                       ignore_bias: bool = False,
                       ignore_recall: bool = False) -> list:
    reasons = []
    if not ignore_bias and metrics.bias > criteria.bias_max:
        reasons.append(f"bias {metrics.bias:.4f} exceeds bias_max {criteria.bias_max}")
    if not ignore_sigma and sigma_f1 > criteria.sigma_max:
        reasons.append(f"sigma_f1 {sigma_f1:.4f} exceeds sigma_max {criteria.sigma_max}")
    if not ignore_recall and metrics.recall < criteria.min_recall:
        reasons.append(f"recall {metrics.recall:.4f} below min_recall {criteria.min_recall}")
    return reasons


def rank_prompts(metric_rows, criteria: SelectionCriteria) -> list:
    """Rank (prompt_id, MetricSet, sigma_f1) rows under the given criteria.

    Eligible prompts rank above ineligible ones; within each group order is
    descending F1, then ascending bias, sigma_f1, and prompt id. Ranks run
    1..N without gaps.
    """
    rows = list(metric_rows)
    if not rows:
        raise EmptyEvaluation("no metric rows to rank")

    annotated = []
    for prompt_id, metrics, sigma_f1 in rows:
        reasons = _exclusion_reasons(metrics, sigma_f1, criteria)
        annotated.append((prompt_id, metrics, sigma_f1, tuple(reasons)))
    annotated.sort(
        key=lambda row: (
            0 if not row[3] else 1,
            -row[1].f1,
            row[1].bias,
            row[2],
            row[0],
        )
    )
    return [
        RankedPrompt(
            prompt_id=prompt_id,
            metrics=metrics,
            sigma_f1=sigma_f1,
            rank=position,
            eligible=not reasons,
            exclusion_reasons=reasons,
        )
        for position, (prompt_id, metrics, sigma_f1, reasons) in enumerate(annotated, start=1)
    ]


# Relaxation order when nothing passes the gates: drop the stability gate,
# then the bias gate, then the recall floor. The last stage always yields a
# choice, so recommend() is total.
_RELAXATION_STAGES = (
    ((), ""),
    (("sigma",), "sigma_f1 threshold disabled"),
    (("sigma", "bias"), "sigma_f1 and bias thresholds disabled"),
    (("sigma", "bias", "recall"), "sigma_f1, bias, and recall thresholds disabled"),
)


def recommend(ranked, k: int = DEFAULT_TOP_K,
              criteria: SelectionCriteria | None = None) -> Recommendation:
    """Pick the best eligible prompt, relaxing gates only if none qualifies.

    `criteria` should be the same thresholds the ranking used; they drive the
    relaxation stages and are echoed in the rationale.
    """
    ranked = list(ranked)
    if not ranked:
        raise EmptyEvaluation("no ranked prompts to recommend from")
    if k < 1:
        raise ValueError("k must be positive")

    if criteria is None:
        criteria = SelectionCriteria()
    chosen = None
    relaxation_note = ""
    for ignored, note in _RELAXATION_STAGES:
        for entry in ranked:
            if entry.eligible or not _exclusion_reasons(
                entry.metrics, entry.sigma_f1, criteria,
                ignore_sigma="sigma" in ignored,
                ignore_bias="bias" in ignored,
                ignore_recall="recall" in ignored,
            ):
                chosen = entry
                relaxation_note = note
                break
        if chosen is not None:
            break

    runners_up = tuple(r for r in ranked if r.prompt_id != chosen.prompt_id)[: max(0, k - 1)]
    m = chosen.metrics
    rationale = (
        f"Selected {chosen.prompt_id}: F1 {m.f1:.3f} is the highest among "
        f"qualifying prompts, with bias {m.bias:.3f}, sigma_f1 {chosen.sigma_f1:.3f}, "
        f"and recall {m.recall:.3f} (thresholds: bias_max {criteria.bias_max}, "
        f"sigma_max {criteria.sigma_max}, min_recall {criteria.min_recall})."
    )
    if relaxation_note:
        rationale += f" No prompt met all thresholds; {relaxation_note} to guarantee a choice."
    if runners_up:
        rationale += " Runners-up: " + ", ".join(
            f"{r.prompt_id} (F1 {r.metrics.f1:.3f})" for r in runners_up
        ) + "."
    return Recommendation(
        chosen=chosen, runners_up=runners_up, rationale=rationale, criteria_used=criteria
    )


def rank_and_recommend(metric_rows, criteria: SelectionCriteria,
                       k: int = DEFAULT_TOP_K):
    """Convenience wrapper returning (ranked list, recommendation)."""
    ranked = rank_prompts(metric_rows, criteria)
    recommendation = recommend(ranked, k=k, criteria=criteria)
    return ranked, recommendation


def write_recommendation(recommendation: Recommendation, json_path, md_path,
                         input_hash: str) -> None:
    json_path, md_path = Path(json_path), Path(md_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    payload = recommendation.to_dict()
    payload["input_hash"] = input_hash
    json_path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )

    lines = [
        "# Prompt recommendation",
        "",
        f"**Chosen prompt:** {recommendation.chosen.prompt_id}",
        "",
        recommendation.rationale,
        "",
        "## Criteria",
        "",
    ]
    for key, value in recommendation.criteria_used.to_dict().items():
        lines.append(f"- {key}: {value}")
    lines += [
        "",
        "## Ranking",
        "",
        "| Rank | Prompt | F1 | Bias | sigma_F1 | Eligible |",
        "|---|---|---|---|---|---|",
    ]
    for entry in (recommendation.chosen,) + recommendation.runners_up:
        lines.append(
            f"| {entry.rank} | {entry.prompt_id} | {entry.metrics.f1:.3f} "
            f"| {entry.metrics.bias:.3f} | {entry.sigma_f1:.3f} "
            f"| {'yes' if entry.eligible else 'no'} |"
        )
    lines.append("")
    md_path.write_text("\n".join(lines), encoding="utf-8")
