"""Rare-label augmentation: keyword mining, teacher filtering, merging.

Finds candidate speeches for an under-represented label by phrase search
over the English translations, caps each keyword's haul with a seeded
reservoir, lets the teacher keep only true positives, and merges the
survivors into the training set without disturbing what is already there.
"""

from __future__ import annotations

import logging
import re
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .capschema import LabelSchema, PromptTemplate, SCHEMA, CapLabel, _resource_text
from .corpus import Speech
from .sampling import Reservoir, stratum_rng
from .teacher import (
    AnnotationFailure,
    LabeledExample,
    RetryPolicy,
    TeacherBackend,
    annotate_batch,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KeywordSpec:
    """Search plan for one target label."""

    target_label: CapLabel
    keywords: tuple[str, ...]
    cap_per_keyword: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        cleaned = tuple(kw.strip().lower() for kw in self.keywords)
        if not cleaned:
            raise ValueError("keyword list must not be empty")
        if any(not kw for kw in cleaned):
            raise ValueError("keywords must be nonempty after trimming")
        if self.cap_per_keyword < 0:
            raise ValueError("cap_per_keyword must be >= 0")
        object.__setattr__(self, "keywords", cleaned)


@dataclass
class MiningStats:
    scanned: int = 0
    skipped_no_text_en: int = 0
    per_keyword_matches: Counter = field(default_factory=Counter)
    candidates: int = 0


def mine_candidates(
    speeches: Iterable[Speech],
    spec: KeywordSpec,
    stats: MiningStats | None = None,
) -> list[Speech]:
    """Speeches whose text_en contains any keyword, capped per keyword.

    Matching is case-insensitive whole-phrase on word boundaries. Each
    keyword keeps at most cap_per_keyword uniformly sampled matches
    (seeded per keyword); the union is deduplicated by speech id, in
    keyword order. Speeches without text_en are skipped and counted.
    """
    if stats is None:
        stats = MiningStats()
    patterns = [
        (kw, re.compile(rf"\b{re.escape(kw)}\b")) for kw in spec.keywords
    ]
    pools = {
        kw: Reservoir(spec.cap_per_keyword, stratum_rng(spec.seed, f"kw:{kw}"))
        for kw in spec.keywords
    }
    for speech in speeches:
        stats.scanned += 1
        if not speech.text_en:
            stats.skipped_no_text_en += 1
            continue
        lowered = speech.text_en.lower()
        for kw, pattern in patterns:
            if pattern.search(lowered):
                stats.per_keyword_matches[kw] += 1
                pools[kw].offer(speech)
    out: list[Speech] = []
    seen: set[str] = set()
    for kw in spec.keywords:
        for speech in pools[kw].items:
            if speech.id not in seen:
                seen.add(speech.id)
                out.append(speech)
    stats.candidates = len(out)
    return out


@dataclass
class FilterReport:
    candidates: int = 0
    accepted: int = 0
    rejected: int = 0
    failures: list[AnnotationFailure] = field(default_factory=list)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.candidates if self.candidates else 0.0


def filter_by_teacher(
    candidates: Iterable[Speech],
    spec: KeywordSpec,
    backend: TeacherBackend,
    policy: RetryPolicy | None = None,
    template: PromptTemplate | None = None,
    schema: LabelSchema = SCHEMA,
    guidelines: str | None = None,
    workers: int = 8,
    window: int = 64,
    report: FilterReport | None = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> list[LabeledExample]:
    """Teacher-annotate candidates, keeping those labeled spec.target_label."""
    if report is None:
        report = FilterReport()
    kept: list[LabeledExample] = []
    for outcome in annotate_batch(
        candidates,
        backend,
        policy=policy,
        template=template,
        schema=schema,
        guidelines=guidelines,
        workers=workers,
        window=window,
        sleeper=sleeper,
    ):
        report.candidates += 1
        if isinstance(outcome, AnnotationFailure):
            report.failures.append(outcome)
        elif outcome.label == spec.target_label:
            report.accepted += 1
            kept.append(outcome)
        else:
            report.rejected += 1
    return kept


def merge_augmentation(
    train: list[LabeledExample], accepted: Iterable[LabeledExample]
) -> list[LabeledExample]:
    """Union of train and accepted, deduplicated by id; train wins conflicts."""
    labels_by_id = {ex.speech.id: ex.label for ex in train}
    out = list(train)
    for ex in accepted:
        held = labels_by_id.get(ex.speech.id)
        if held is None:
            labels_by_id[ex.speech.id] = ex.label
            out.append(ex)
        elif held != ex.label:
            logger.warning(
                "merge: keeping existing label %s for %s, dropping augmented %s",
                held.name,
                ex.speech.id,
                ex.label.name,
            )
    return out


_KEYWORD_HEADER = "label_code\tkeyword"


def read_keyword_tsv(
    lines: Iterable[str],
    schema: LabelSchema = SCHEMA,
    cap_per_keyword: int = 2000,
    seed: int = 0,
) -> list[KeywordSpec]:
    """Load `label_code<TAB>keyword` rows into one spec per label."""
    grouped: dict[int, list[str]] = {}
    order: list[int] = []
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line or (line_no == 1 and line == _KEYWORD_HEADER):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"keyword line {line_no}: expected 2 columns")
        code = int(parts[0])
        if code not in grouped:
            grouped[code] = []
            order.append(code)
        grouped[code].append(parts[1])
    return [
        KeywordSpec(
            target_label=schema.label_from_code(code),
            keywords=tuple(grouped[code]),
            cap_per_keyword=cap_per_keyword,
            seed=seed,
        )
        for code in order
    ]


def default_public_lands_spec(cap_per_keyword: int = 2000, seed: int = 0) -> KeywordSpec:
    """The shipped Public Lands keyword list; a starting point, not ground truth."""
    specs = read_keyword_tsv(
        _resource_text("public_lands_keywords.tsv").splitlines(),
        cap_per_keyword=cap_per_keyword,
        seed=seed,
    )
    (spec,) = specs
    return spec
