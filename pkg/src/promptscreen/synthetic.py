"""Synthetic interview corpus generation.

Stand-in for restricted clinical interview data: seeded, label-correlated
transcript text with enough vocabulary spread that diversity-driven sampling
has something to choose between. A 50-record corpus generated here ships
with the package for demos and end-to-end tests.
"""

from __future__ import annotations

import random
from importlib import resources
from pathlib import Path

from .dataset import GoldLabel, LabeledCorpus, LabeledRecord, Transcript

BUNDLED_CORPUS_NAME = "sample_corpus_50.jsonl"

_POSITIVE_SENTENCES = [
    "I have been feeling very low for weeks now.",
    "Most mornings I cannot find a reason to get out of bed.",
    "Sleep does not come easily anymore and I wake up exhausted.",
    "I lost interest in the hobbies I used to love.",
    "Everything feels heavy, even small chores take all my energy.",
    "I keep canceling plans because being around people drains me.",
    "My appetite is gone and food tastes like nothing.",
    "I feel worthless most days and I cannot shake it.",
    "Concentrating at work has become almost impossible.",
    "Some days I just sit and stare at the wall for hours.",
    "I cry without knowing exactly why.",
    "The future looks blank to me, like there is nothing to plan for.",
]

_NEGATIVE_SENTENCES = [
    "Work has been busy lately but honestly quite satisfying.",
    "I spend most weekends hiking with friends or family.",
    "I sleep well and usually wake up before my alarm.",
    "Cooking new recipes has been a fun project this month.",
    "I joined a local volleyball league and love the games.",
    "My energy is good, I even started jogging in the mornings.",
    "I am planning a trip for the summer and it keeps me excited.",
    "Evenings are for reading or catching up with my sister.",
    "The garden is coming along nicely this season.",
    "I laugh a lot with my coworkers, the team is great.",
    "Things feel steady, no big complaints about my days.",
    "I picked up the guitar again and practice most nights.",
]

_FILLER_TOPICS = [
    "the weather has been changing a lot lately",
    "my commute takes about forty minutes each way",
    "we talked about the neighborhood and the new bakery",
    "the interviewer asked about my daily routine",
    "I mentioned my brother who lives out of state",
    "there was some construction noise outside during the talk",
    "I described what a typical tuesday looks like for me",
    "we discussed how long I have lived in this city",
]


def synthesize_corpus(
    n_records: int,
    seed: int,
    positive_fraction: float = 0.5,
) -> LabeledCorpus:
    """Generate a deterministic labeled corpus of interview-style texts."""
    if n_records < 2:
        raise ValueError("need at least 2 records")
    if not (0.0 < positive_fraction < 1.0):
        raise ValueError("positive_fraction must be in (0, 1)")
    rng = random.Random(seed)
    n_positive = round(n_records * positive_fraction)
    n_positive = min(max(n_positive, 1), n_records - 1)
    labels = [GoldLabel.POSITIVE] * n_positive + [GoldLabel.NEGATIVE] * (n_records - n_positive)
    rng.shuffle(labels)

    records = []
    for i, label in enumerate(labels):
        pool = _POSITIVE_SENTENCES if label is GoldLabel.POSITIVE else _NEGATIVE_SENTENCES
        n_core = rng.randint(3, 6)
        sentences = rng.sample(pool, n_core)
        sentences.insert(rng.randrange(len(sentences) + 1), rng.choice(_FILLER_TOPICS) + ".")
        # sprinkle per-record rare words so type-token ratios vary
        for _ in range(rng.randint(0, 3)):
            sentences.append(f"We also touched on topic{rng.randrange(400)} briefly.")
        rng.shuffle(sentences)
        records.append(
            LabeledRecord(Transcript(id=f"S{i:04d}", text=" ".join(sentences)), label)
        )
    return LabeledCorpus(tuple(records))


def bundled_corpus_path() -> Path:
    """Path of the 50-record corpus shipped with the package."""
    return Path(resources.files("promptscreen").joinpath("data", BUNDLED_CORPUS_NAME))
