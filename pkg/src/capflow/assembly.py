"""Dataset assembly: enriched speech rows and the three-file TSV layout.

Each parliament becomes `<parl>_speeches_text.tsv` (everything, including
the original and translated text), `<parl>_speeches.tsv` (the same rows
without the two text columns), and `<parl>_sentences.tsv` (sentence-level
sentiment). Writers are atomic and streaming; inputs must arrive sorted
by speech id so consistency can be checked in one pass.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

from .capschema import MIX, SCHEMA, FinalLabel, LabelSchema
from .corpus import (
    SENTENCE_COLUMNS,
    Gender,
    Role,
    SentenceSentiment,
    Sentiment3,
    Speech,
    escape_field,
    unescape_field,
)

logger = logging.getLogger(__name__)


class AssemblyError(Exception):
    pass


class NoSentences(AssemblyError):
    """Sentiment aggregation over an empty sentence list."""


class UnsortedInput(AssemblyError):
    """A stream that must be sorted by speech id is not."""


class DatasetConsistencyError(AssemblyError):
    """Speech and sentence files disagree about which ids exist."""


@dataclass(frozen=True)
class SentimentCuts:
    """Cut points that map a mean score on the 0-5 scale to three classes."""

    negative_below: float = 2.5
    positive_above: float = 3.5

    def __post_init__(self) -> None:
        if self.negative_below > self.positive_above:
            raise ValueError("negative_below must not exceed positive_above")

    def label(self, mean: float) -> Sentiment3:
        if mean < self.negative_below:
            return Sentiment3.NEGATIVE
        if mean > self.positive_above:
            return Sentiment3.POSITIVE
        return Sentiment3.NEUTRAL


def aggregate_speech_sentiment(
    sentences: list[SentenceSentiment], cuts: SentimentCuts = SentimentCuts()
) -> tuple[float, Sentiment3]:
    """Mean sentence score and its three-way label."""
    if not sentences:
        raise NoSentences("cannot aggregate zero sentences")
    mean = sum(s.score for s in sentences) / len(sentences)
    return mean, cuts.label(mean)


@dataclass(frozen=True)
class EnrichedSpeech:
    """A speech row of the final dataset.

    ``text`` and ``text_en`` are None when the row came from the no-text
    file. Sentiment fields are present together or not at all.
    """

    id: str
    parliament: str
    date: object
    speaker_id: str
    speaker_name: str
    speaker_gender: Gender
    speaker_role: Role
    party_id: str | None
    party_name: str | None
    party_status: str | None
    topic: FinalLabel
    topic_confidence: float
    text: str | None = None
    text_en: str | None = None
    sentiment_label: Sentiment3 | None = None
    sentiment_score_mean: float | None = None
    partyfacts_id: str | None = None
    vdem_country_id: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("id must be nonempty")
        if not isinstance(self.topic, FinalLabel):
            raise TypeError("topic must be a FinalLabel")
        if not 0.0 <= self.topic_confidence <= 1.0:
            raise ValueError("topic_confidence outside [0, 1]")
        if (self.sentiment_label is None) != (self.sentiment_score_mean is None):
            raise ValueError("sentiment fields must be present together")
        if self.sentiment_score_mean is not None and not (
            0.0 <= self.sentiment_score_mean <= 5.0
        ):
            raise ValueError("sentiment_score_mean outside [0, 5]")

    @property
    def year(self) -> int:
        return self.date.year


def enrich(
    speech: Speech,
    topic: FinalLabel,
    topic_confidence: float,
    sentences: list[SentenceSentiment] | None = None,
    cuts: SentimentCuts = SentimentCuts(),
) -> EnrichedSpeech:
    """Combine a speech, its final topic, and optional sentence sentiment."""
    sentiment_label = None
    sentiment_mean = None
    if sentences:
        sentiment_mean, sentiment_label = aggregate_speech_sentiment(sentences, cuts)
    return EnrichedSpeech(
        id=speech.id,
        parliament=speech.parliament,
        date=speech.date,
        speaker_id=speech.speaker_id,
        speaker_name=speech.speaker_name,
        speaker_gender=speech.speaker_gender,
        speaker_role=speech.speaker_role,
        party_id=speech.party_id,
        party_name=speech.party_name,
        party_status=speech.party_status,
        topic=topic,
        topic_confidence=topic_confidence,
        text=speech.text,
        text_en=speech.text_en,
        sentiment_label=sentiment_label,
        sentiment_score_mean=sentiment_mean,
    )


@dataclass
class JoinTable:
    """key -> external id, loaded from a two-column TSV with unique keys."""

    mapping: dict[str, str]

    @classmethod
    def from_tsv(cls, lines: Iterable[str]) -> "JoinTable":
        mapping: dict[str, str] = {}
        for line_no, line in enumerate(lines, start=1):
            line = line.rstrip("\n")
            if not line or (line_no == 1 and line == "key\tvalue"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"join table line {line_no}: expected 2 columns")
            key, value = parts
            if key in mapping:
                raise ValueError(f"join table line {line_no}: duplicate key {key!r}")
            mapping[key] = value
        return cls(mapping)

    def get(self, key: str | None) -> str | None:
        if key is None:
            return None
        return self.mapping.get(key)


def sample_partyfacts_table() -> JoinTable:
    """Tiny bundled party_id -> PartyFacts id table, for demos and tests."""
    from .capschema import _resource_text

    return JoinTable.from_tsv(_resource_text("partyfacts_sample.tsv").splitlines())


def sample_vdem_table() -> JoinTable:
    """Tiny bundled parliament -> V-Dem country id table."""
    from .capschema import _resource_text

    return JoinTable.from_tsv(_resource_text("vdem_sample.tsv").splitlines())


@dataclass
class JoinMissReport:
    total: int = 0
    partyfacts_misses: int = 0
    vdem_misses: int = 0


def join_external_ids(
    speech: EnrichedSpeech,
    partyfacts: JoinTable | None = None,
    vdem: JoinTable | None = None,
    misses: JoinMissReport | None = None,
) -> EnrichedSpeech:
    """Fill partyfacts_id (by party_id) and vdem_country_id (by parliament).

    Lookups that find nothing leave the field empty and count as misses.
    """
    if misses is not None:
        misses.total += 1
    partyfacts_id = speech.partyfacts_id
    vdem_id = speech.vdem_country_id
    if partyfacts is not None:
        partyfacts_id = partyfacts.get(speech.party_id)
        if partyfacts_id is None and misses is not None:
            misses.partyfacts_misses += 1
    if vdem is not None:
        vdem_id = vdem.get(speech.parliament)
        if vdem_id is None and misses is not None:
            misses.vdem_misses += 1
    return dataclasses.replace(
        speech, partyfacts_id=partyfacts_id, vdem_country_id=vdem_id
    )


# column layout of the assembled speech files; the no-text variant drops
# the last two columns
ENRICHED_COLUMNS = [
    "id",
    "parliament",
    "date",
    "speaker_id",
    "speaker_name",
    "speaker_gender",
    "speaker_role",
    "party_id",
    "party_name",
    "party_status",
    "partyfacts_id",
    "vdem_country_id",
    "topic",
    "topic_confidence",
    "sentiment_label",
    "sentiment_score_mean",
    "text_en",
    "text",
]
ENRICHED_COLUMNS_NO_TEXT = ENRICHED_COLUMNS[:-2]


def _enriched_row(speech: EnrichedSpeech) -> dict[str, str]:
    return {
        "id": speech.id,
        "parliament": speech.parliament,
        "date": speech.date.isoformat(),
        "speaker_id": speech.speaker_id,
        "speaker_name": speech.speaker_name,
        "speaker_gender": speech.speaker_gender.value,
        "speaker_role": speech.speaker_role.value,
        "party_id": speech.party_id or "",
        "party_name": speech.party_name or "",
        "party_status": speech.party_status or "",
        "partyfacts_id": speech.partyfacts_id or "",
        "vdem_country_id": speech.vdem_country_id or "",
        "topic": speech.topic.display,
        "topic_confidence": str(speech.topic_confidence),
        "sentiment_label": speech.sentiment_label.value if speech.sentiment_label else "",
        "sentiment_score_mean": (
            str(speech.sentiment_score_mean)
            if speech.sentiment_score_mean is not None
            else ""
        ),
        "text_en": speech.text_en or "",
        "text": speech.text or "",
    }


def _grouped_sentences(
    sentences: Iterable[SentenceSentiment],
) -> Iterator[tuple[str, list[SentenceSentiment]]]:
    """Group a (speech_id, sentence_index)-sorted stream by speech id."""
    group: list[SentenceSentiment] = []
    for s in sentences:
        if group and s.speech_id != group[-1].speech_id:
            yield group[-1].speech_id, group
            group = []
        if group:
            prev = group[-1]
            if s.sentence_index <= prev.sentence_index:
                raise UnsortedInput(
                    f"sentence indexes out of order for {s.speech_id!r}"
                )
            if s.speech_id < prev.speech_id:
                raise UnsortedInput("sentence stream not sorted by speech_id")
        group.append(s)
    if group:
        yield group[-1].speech_id, group


class _AtomicWriter:
    """Write to `<name>.tmp` in out_dir, renaming into place on success."""

    def __init__(self, out_dir: Path, name: str):
        self.final_path = out_dir / name
        self.tmp_path = out_dir / f".{name}.tmp"
        self.handle: IO[str] = open(self.tmp_path, "w", encoding="utf-8", newline="")

    def commit(self) -> int:
        self.handle.flush()
        size = self.handle.tell()
        self.handle.close()
        os.replace(self.tmp_path, self.final_path)
        return size

    def abort(self) -> None:
        try:
            self.handle.close()
        finally:
            if self.tmp_path.exists():
                self.tmp_path.unlink()


def emit_dataset(
    parliament: str,
    speeches: Iterable[EnrichedSpeech],
    sentences: Iterable[SentenceSentiment],
    out_dir: str | Path,
) -> dict:
    """Write the three dataset files for one parliament; returns a manifest.

    Both streams must be sorted by speech id (sentences also by index).
    A sentence whose speech is missing, or a speech claiming sentiment
    without sentences (or the reverse), aborts with
    DatasetConsistencyError; nothing half-written is left behind.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = {
        "with_text": f"{parliament}_speeches_text.tsv",
        "no_text": f"{parliament}_speeches.tsv",
        "sentences": f"{parliament}_sentences.tsv",
    }
    writers = {key: _AtomicWriter(out_dir, name) for key, name in names.items()}
    rows = {key: 0 for key in names}
    try:
        writers["with_text"].handle.write("\t".join(ENRICHED_COLUMNS) + "\n")
        writers["no_text"].handle.write("\t".join(ENRICHED_COLUMNS_NO_TEXT) + "\n")
        writers["sentences"].handle.write("\t".join(SENTENCE_COLUMNS) + "\n")
        groups = _grouped_sentences(sentences)
        pending: tuple[str, list[SentenceSentiment]] | None = next(groups, None)
        last_id: str | None = None
        for speech in speeches:
            if last_id is not None and speech.id <= last_id:
                raise UnsortedInput(
                    f"speech stream not strictly sorted at {speech.id!r}"
                )
            last_id = speech.id
            if speech.parliament != parliament:
                raise DatasetConsistencyError(
                    f"speech {speech.id!r} belongs to {speech.parliament!r}, "
                    f"not {parliament!r}"
                )
            while pending is not None and pending[0] < speech.id:
                raise DatasetConsistencyError(
                    f"sentences for unknown speech {pending[0]!r}"
                )
            row = _enriched_row(speech)
            writers["with_text"].handle.write(
                "\t".join(escape_field(row[c]) for c in ENRICHED_COLUMNS) + "\n"
            )
            rows["with_text"] += 1
            writers["no_text"].handle.write(
                "\t".join(escape_field(row[c]) for c in ENRICHED_COLUMNS_NO_TEXT) + "\n"
            )
            rows["no_text"] += 1
            if pending is not None and pending[0] == speech.id:
                if speech.sentiment_label is None:
                    raise DatasetConsistencyError(
                        f"speech {speech.id!r} has sentences but no sentiment fields"
                    )
                rows["sentences"] += write_sentence_sentiments_rows(
                    pending[1], writers["sentences"].handle
                )
                pending = next(groups, None)
            elif speech.sentiment_label is not None:
                raise DatasetConsistencyError(
                    f"speech {speech.id!r} carries sentiment but has no sentences"
                )
        if pending is not None:
            raise DatasetConsistencyError(
                f"sentences for unknown speech {pending[0]!r}"
            )
        manifest_files = {}
        for key in names:
            size = writers[key].commit()
            manifest_files[names[key]] = {"rows": rows[key], "bytes": size}
        return {"parliament": parliament, "files": manifest_files}
    except BaseException:
        for writer in writers.values():
            writer.abort()
        raise


def write_sentence_sentiments_rows(
    records: list[SentenceSentiment], out: IO[str]
) -> int:
    """Sentence rows without a header (emit_dataset writes its own)."""
    count = 0
    for r in records:
        cells = [
            escape_field(r.speech_id),
            str(r.sentence_index),
            r.label3.value,
            format(r.score, "g"),
            escape_field(r.sentence_text),
        ]
        out.write("\t".join(cells) + "\n")
        count += 1
    return count


def parse_enriched(
    source: Iterable[str], schema: LabelSchema = SCHEMA
) -> Iterator[EnrichedSpeech]:
    """Stream EnrichedSpeech rows from either assembled speech file.

    The with-text and no-text layouts are distinguished by their headers;
    rows from the no-text file come back with text and text_en as None.
    """
    import datetime as dt

    lines = iter(source)
    try:
        header = next(lines).rstrip("\n").split("\t")
    except StopIteration:
        raise ValueError("missing header row") from None
    if header != ENRICHED_COLUMNS and header != ENRICHED_COLUMNS_NO_TEXT:
        raise ValueError(f"unexpected dataset header: {header!r}")
    for line_no, line in enumerate(lines, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ValueError(
                f"line {line_no}: expected {len(header)} columns, got {len(cells)}"
            )
        row = {h: unescape_field(c) for h, c in zip(header, cells)}
        topic_cell = row["topic"]
        if topic_cell == MIX.display:
            topic = MIX
        else:
            topic = FinalLabel(kind="cap", cap=schema.label_from_name(topic_cell))
        mean_cell = row["sentiment_score_mean"]
        yield EnrichedSpeech(
            id=row["id"],
            parliament=row["parliament"],
            date=dt.date.fromisoformat(row["date"]),
            speaker_id=row["speaker_id"],
            speaker_name=row["speaker_name"],
            speaker_gender=Gender(row["speaker_gender"]),
            speaker_role=Role(row["speaker_role"]),
            party_id=row["party_id"] or None,
            party_name=row["party_name"] or None,
            party_status=row["party_status"] or None,
            topic=topic,
            topic_confidence=float(row["topic_confidence"]),
            text=row["text"] if "text" in row and row["text"] else None,
            text_en=row["text_en"] if "text_en" in row and row["text_en"] else None,
            sentiment_label=Sentiment3(row["sentiment_label"])
            if row["sentiment_label"]
            else None,
            sentiment_score_mean=float(mean_cell) if mean_cell else None,
            partyfacts_id=row["partyfacts_id"] or None,
            vdem_country_id=row["vdem_country_id"] or None,
        )
