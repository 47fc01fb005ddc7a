"""Descriptive analyses over the assembled dataset.

All three analyses produce a parliament-by-topic matrix over the 21
policy labels (Other and Mix never appear as columns). Rows come out
sorted by parliament code, so input order never changes the result.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .assembly import EnrichedSpeech
from .capschema import SCHEMA, CapLabel, LabelSchema
from .corpus import Gender, Role

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalysisFilter:
    """Row filter applied before any analysis.

    Keeps speeches from the year window, drops chairpersons (their
    speeches are mostly procedural), and drops rows whose topic is
    Other or Mix.
    """

    year_min: int = 2017
    year_max: int = 2022
    drop_roles: frozenset[Role] = frozenset({Role.CHAIRPERSON})
    drop_topics: frozenset[str] = frozenset({"Other", "Mix"})

    def __post_init__(self) -> None:
        if self.year_min > self.year_max:
            raise ValueError("year_min must not exceed year_max")

    def keep(self, row: EnrichedSpeech) -> bool:
        if not self.year_min <= row.year <= self.year_max:
            return False
        if row.speaker_role in self.drop_roles:
            return False
        if row.topic.display in self.drop_topics:
            return False
        return True


def filter_rows(
    rows: Iterable[EnrichedSpeech],
    criteria: AnalysisFilter = AnalysisFilter(),
    dropped: Counter | None = None,
) -> Iterator[EnrichedSpeech]:
    """Apply the filter, optionally tallying why rows fell out."""
    for row in rows:
        if criteria.keep(row):
            yield row
        elif dropped is not None:
            if not criteria.year_min <= row.year <= criteria.year_max:
                dropped["year"] += 1
            elif row.speaker_role in criteria.drop_roles:
                dropped["role"] += 1
            else:
                dropped["topic"] += 1


@dataclass
class TopicMatrix:
    """Parliament rows by policy-label columns; None marks an empty cell."""

    labels: tuple[CapLabel, ...]
    parliaments: tuple[str, ...]
    values: tuple[tuple[float | None, ...], ...]

    def row(self, parliament: str) -> dict[str, float | None]:
        i = self.parliaments.index(parliament)
        return {lab.name: v for lab, v in zip(self.labels, self.values[i])}

    def write_tsv(self, out: IO[str]) -> None:
        out.write("parliament\t" + "\t".join(l.name for l in self.labels) + "\n")
        for parl, cells in zip(self.parliaments, self.values):
            rendered = ["" if v is None else repr(v) for v in cells]
            out.write(parl + "\t" + "\t".join(rendered) + "\n")


def _policy_labels(schema: LabelSchema) -> tuple[CapLabel, ...]:
    return tuple(schema.policy_labels())


def _matrix(
    schema: LabelSchema, per_parliament: dict[str, tuple[float | None, ...]]
) -> TopicMatrix:
    parliaments = tuple(sorted(per_parliament))
    return TopicMatrix(
        labels=_policy_labels(schema),
        parliaments=parliaments,
        values=tuple(per_parliament[p] for p in parliaments),
    )


def topic_distribution(
    rows: Iterable[EnrichedSpeech], schema: LabelSchema = SCHEMA
) -> TopicMatrix:
    """Share of each parliament's speeches per policy topic; rows sum to 1.

    Rows whose topic is not a policy label (stragglers the filter should
    have removed) are skipped. A parliament left with nothing is omitted
    from the matrix with a warning.
    """
    labels = _policy_labels(schema)
    counts: dict[str, Counter] = defaultdict(Counter)
    seen: set[str] = set()
    for row in rows:
        seen.add(row.parliament)
        if row.topic.kind != "cap" or row.topic.cap.code == 0:
            continue
        counts[row.parliament][row.topic.cap.code] += 1
    per_parliament = {}
    for parl in seen:
        total = sum(counts[parl].values())
        if total == 0:
            logger.warning("topic_distribution: no usable rows for %s, omitted", parl)
            continue
        per_parliament[parl] = tuple(
            counts[parl][lab.code] / total for lab in labels
        )
    return _matrix(schema, per_parliament)


def sentiment_by_topic(
    rows: Iterable[EnrichedSpeech],
    schema: LabelSchema = SCHEMA,
    dropped: Counter | None = None,
) -> TopicMatrix:
    """Mean speech-level sentiment score per parliament and topic.

    Rows without sentiment fields are skipped (and counted if asked).
    A cell with no contributing speeches stays empty rather than zero;
    zero would read as a real, very negative score.
    """
    labels = _policy_labels(schema)
    sums: dict[str, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    counts: dict[str, Counter] = defaultdict(Counter)
    for row in rows:
        if row.topic.kind != "cap" or row.topic.cap.code == 0:
            continue
        if row.sentiment_score_mean is None:
            if dropped is not None:
                dropped["no_sentiment"] += 1
            continue
        sums[row.parliament][row.topic.cap.code] += row.sentiment_score_mean
        counts[row.parliament][row.topic.cap.code] += 1
    per_parliament = {}
    for parl in counts:
        per_parliament[parl] = tuple(
            sums[parl][lab.code] / counts[parl][lab.code]
            if counts[parl][lab.code]
            else None
            for lab in labels
        )
    return _matrix(schema, per_parliament)


def gender_topic_difference(
    rows: Iterable[EnrichedSpeech],
    schema: LabelSchema = SCHEMA,
    dropped: Counter | None = None,
) -> TopicMatrix:
    """Female minus male topic shares per parliament; rows sum to zero.

    Speakers with unknown gender are dropped (and counted). A parliament
    with no rows for one of the two genders has no defined difference,
    so its row is omitted with a warning.
    """
    labels = _policy_labels(schema)
    counts: dict[str, dict[Gender, Counter]] = defaultdict(
        lambda: {Gender.FEMALE: Counter(), Gender.MALE: Counter()}
    )
    for row in rows:
        if row.topic.kind != "cap" or row.topic.cap.code == 0:
            continue
        if row.speaker_gender not in (Gender.FEMALE, Gender.MALE):
            if dropped is not None:
                dropped["unknown_gender"] += 1
            continue
        counts[row.parliament][row.speaker_gender][row.topic.cap.code] += 1
    per_parliament = {}
    for parl, by_gender in counts.items():
        totals = {g: sum(c.values()) for g, c in by_gender.items()}
        if not all(totals.values()):
            logger.warning(
                "gender_topic_difference: %s lacks rows for one gender, omitted",
                parl,
            )
            continue
        per_parliament[parl] = tuple(
            by_gender[Gender.FEMALE][lab.code] / totals[Gender.FEMALE]
            - by_gender[Gender.MALE][lab.code] / totals[Gender.MALE]
            for lab in labels
        )
    return _matrix(schema, per_parliament)
