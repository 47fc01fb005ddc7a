"""Streaming ingestion, validation and serialization of speech records.

The canonical interchange formats are speech-tsv (UTF-8, header row, one
record per line, tab-separated, with backslash escapes for tabs/newlines
inside fields) and speech-jsonl (one object per line, same field names).
Parsing is single-pass and yields records as they are read, so memory use
is independent of file size.
"""

from __future__ import annotations

import datetime as dt
import enum
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

log = logging.getLogger(__name__)


class Gender(enum.Enum):
    FEMALE = "female"
    MALE = "male"
    UNKNOWN = "unknown"


class Role(enum.Enum):
    REGULAR = "regular"
    CHAIRPERSON = "chairperson"
    GUEST = "guest"
    UNKNOWN = "unknown"


class Sentiment3(enum.Enum):
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"


# Unmapped source values fall back to UNKNOWN.
_GENDER_SYNONYMS = {
    "female": Gender.FEMALE,
    "f": Gender.FEMALE,
    "male": Gender.MALE,
    "m": Gender.MALE,
}
_ROLE_SYNONYMS = {
    "regular": Role.REGULAR,
    "mp": Role.REGULAR,
    "member": Role.REGULAR,
    "chairperson": Role.CHAIRPERSON,
    "chair": Role.CHAIRPERSON,
    "guest": Role.GUEST,
}


class CorpusError(Exception):
    pass


class DuplicateId(CorpusError):
    """A speech id occurred twice in one corpus file. Fatal."""

    def __init__(self, speech_id: str):
        super().__init__(f"duplicate speech id: {speech_id!r}")
        self.speech_id = speech_id


class TooManyErrors(CorpusError):
    """The malformed-row budget was exhausted."""


@dataclass(frozen=True)
class MalformedRow:
    line_no: int
    reason: str


@dataclass(frozen=True)
class ScoreOutOfRange:
    line_no: int
    score: float


class RowErrorLog:
    """Collects per-row defects up to a budget, then aborts the parse.

    Large corpora contain sporadic defects; collecting instead of failing
    keeps ingestion usable, while the budget stops silent mass corruption.
    """

    def __init__(self, max_errors: int = 100):
        self.max_errors = max_errors
        self.errors: list[MalformedRow | ScoreOutOfRange] = []

    def add(self, err: MalformedRow | ScoreOutOfRange) -> None:
        self.errors.append(err)
        log.warning("row error: %s", err)
        if len(self.errors) > self.max_errors:
            raise TooManyErrors(
                f"more than {self.max_errors} malformed rows; aborting"
            )

    def __len__(self) -> int:
        return len(self.errors)


@dataclass(frozen=True)
class Speech:
    """One parliamentary utterance with speaker/party/role/date metadata."""

    id: str
    parliament: str
    text: str
    date: dt.date
    speaker_id: str = ""
    speaker_name: str = ""
    speaker_gender: Gender = Gender.UNKNOWN
    speaker_role: Role = Role.UNKNOWN
    text_en: str | None = None
    party_id: str | None = None
    party_name: str | None = None
    party_status: str | None = None
    extras: dict[str, str] = field(default_factory=dict, compare=True)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("speech id must be nonempty")
        if not self.text.strip():
            raise ValueError(f"speech {self.id!r}: text empty after trimming")

    def __hash__(self) -> int:
        return hash(self.id)


@dataclass(frozen=True)
class SentenceSentiment:
    """Sentiment of one sentence of a speech, scored on the 0-5 scale."""

    speech_id: str
    sentence_index: int
    sentence_text: str
    score: float
    label3: Sentiment3

    def __post_init__(self) -> None:
        if self.sentence_index < 0:
            raise ValueError("sentence_index must be >= 0")
        if not (0.0 <= self.score <= 5.0):
            raise ValueError(f"score {self.score} outside [0, 5]")


SPEECH_COLUMNS = [
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
    "text_en",
    "text",
]

SENTENCE_COLUMNS = [
    "speech_id",
    "sentence_index",
    "sentiment_label",
    "sentiment_score",
    "sentence_text",
]


def escape_field(value: str) -> str:
    """Escape backslash, tab, newline and carriage return for TSV cells."""
    return (
        value.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def unescape_field(value: str) -> str:
    out = []
    i = 0
    n = len(value)
    while i < n:
        ch = value[i]
        if ch == "\\" and i + 1 < n:
            nxt = value[i + 1]
            if nxt == "\\":
                out.append("\\")
            elif nxt == "t":
                out.append("\t")
            elif nxt == "n":
                out.append("\n")
            elif nxt == "r":
                out.append("\r")
            else:
                out.append(ch)
                out.append(nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class _IdTracker:
    """Duplicate-id detector holding 64-bit digests instead of raw ids.

    Keeps per-row state small enough that multi-million-row files stream
    within a modest memory budget.
    """

    def __init__(self) -> None:
        self._seen: set[int] = set()

    def check(self, speech_id: str) -> None:
        digest = hashlib.blake2b(speech_id.encode("utf-8"), digest_size=8).digest()
        key = int.from_bytes(digest, "big")
        if key in self._seen:
            raise DuplicateId(speech_id)
        self._seen.add(key)


def _decode_lines(source: IO[bytes] | IO[str] | Iterable[str]) -> Iterator[str]:
    for raw in source:
        if isinstance(raw, bytes):
            yield raw.decode("utf-8")
        else:
            yield raw


def _parse_gender(value: str) -> Gender:
    return _GENDER_SYNONYMS.get(value.strip().lower(), Gender.UNKNOWN)


def _parse_role(value: str) -> Role:
    return _ROLE_SYNONYMS.get(value.strip().lower(), Role.UNKNOWN)


def _speech_from_fields(fields: dict[str, str], extras: dict[str, str]) -> Speech:
    date_s = fields.get("date", "")
    try:
        date = dt.date.fromisoformat(date_s)
    except ValueError:
        raise ValueError(f"bad date {date_s!r}") from None
    text = fields.get("text", "")
    if not text.strip():
        raise ValueError("missing or empty text")
    if not fields.get("id", ""):
        raise ValueError("missing id")
    return Speech(
        id=fields["id"],
        parliament=fields.get("parliament", ""),
        text=text,
        date=date,
        speaker_id=fields.get("speaker_id", ""),
        speaker_name=fields.get("speaker_name", ""),
        speaker_gender=_parse_gender(fields.get("speaker_gender", "")),
        speaker_role=_parse_role(fields.get("speaker_role", "")),
        text_en=fields.get("text_en") or None,
        party_id=fields.get("party_id") or None,
        party_name=fields.get("party_name") or None,
        party_status=fields.get("party_status") or None,
        extras=extras,
    )


def parse_speeches(
    source: IO[bytes] | IO[str] | Iterable[str],
    format: str = "speech-tsv",
    error_log: RowErrorLog | None = None,
    column_map: dict[str, str] | None = None,
) -> Iterator[Speech]:
    """Stream Speech records from a speech-tsv or speech-jsonl source.

    Malformed rows are collected into ``error_log`` (an internal one with
    the default budget when not supplied) and skipped; a duplicate id
    aborts immediately. ``column_map`` renames source columns to canonical
    field names ({source_column: canonical_field}), so tabular exports
    with different headers can be adapted without rewriting files.
    """
    if error_log is None:
        error_log = RowErrorLog()
    if format == "speech-tsv":
        yield from _parse_speech_tsv(source, error_log, column_map)
    elif format == "speech-jsonl":
        yield from _parse_speech_jsonl(source, error_log, column_map)
    else:
        raise ValueError(f"unknown format: {format!r}")


def _remap(name: str, column_map: dict[str, str] | None) -> str:
    if column_map and name in column_map:
        return column_map[name]
    return name


def _parse_speech_tsv(source, error_log: RowErrorLog, column_map) -> Iterator[Speech]:
    lines = _decode_lines(source)
    try:
        header_line = next(lines)
    except StopIteration:
        raise ValueError("missing header row") from None
    header = [_remap(h, column_map) for h in header_line.rstrip("\n").split("\t")]
    seen = _IdTracker()
    for line_no, line in enumerate(lines, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            error_log.add(
                MalformedRow(line_no, f"expected {len(header)} columns, got {len(cells)}")
            )
            continue
        row = {h: unescape_field(c) for h, c in zip(header, cells)}
        fields = {k: v for k, v in row.items() if k in SPEECH_COLUMNS}
        extras = {k: v for k, v in row.items() if k not in SPEECH_COLUMNS}
        try:
            speech = _speech_from_fields(fields, extras)
        except ValueError as e:
            error_log.add(MalformedRow(line_no, str(e)))
            continue
        seen.check(speech.id)
        yield speech


def _parse_speech_jsonl(source, error_log: RowErrorLog, column_map) -> Iterator[Speech]:
    seen = _IdTracker()
    for line_no, line in enumerate(_decode_lines(source), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not a JSON object")
        except ValueError as e:
            error_log.add(MalformedRow(line_no, f"bad JSON: {e}"))
            continue
        obj = {_remap(str(k), column_map): v for k, v in obj.items()}
        fields = {
            k: ("" if v is None else str(v)) for k, v in obj.items() if k in SPEECH_COLUMNS
        }
        extras = {k: str(v) for k, v in obj.items() if k not in SPEECH_COLUMNS}
        try:
            speech = _speech_from_fields(fields, extras)
        except ValueError as e:
            error_log.add(MalformedRow(line_no, str(e)))
            continue
        seen.check(speech.id)
        yield speech


def _speech_row(speech: Speech) -> dict[str, str]:
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
        "text_en": speech.text_en or "",
        "text": speech.text,
    }


def write_speeches(speeches: Iterable[Speech], out: IO[str]) -> int:
    """Write a speech-tsv file; returns the number of rows written.

    Extra columns are taken from the first record and must be identical
    across the stream (a header-row format cannot grow columns later).
    """
    count = 0
    extra_cols: list[str] | None = None
    for speech in speeches:
        if extra_cols is None:
            extra_cols = sorted(speech.extras)
            out.write("\t".join(SPEECH_COLUMNS + extra_cols) + "\n")
        if sorted(speech.extras) != extra_cols:
            raise ValueError(
                f"speech {speech.id!r}: extras columns differ from stream header"
            )
        row = _speech_row(speech)
        cells = [escape_field(row[c]) for c in SPEECH_COLUMNS]
        cells += [escape_field(speech.extras[c]) for c in extra_cols]
        out.write("\t".join(cells) + "\n")
        count += 1
    if extra_cols is None:
        out.write("\t".join(SPEECH_COLUMNS) + "\n")
    return count


def write_speeches_jsonl(speeches: Iterable[Speech], out: IO[str]) -> int:
    count = 0
    for speech in speeches:
        obj: dict[str, object] = _speech_row(speech)
        obj.update(speech.extras)
        out.write(json.dumps(obj, ensure_ascii=False) + "\n")
        count += 1
    return count


def parse_sentence_sentiments(
    source: IO[bytes] | IO[str] | Iterable[str],
    error_log: RowErrorLog | None = None,
) -> Iterator[SentenceSentiment]:
    """Stream sentence-level sentiment records, rejecting scores outside [0, 5]."""
    if error_log is None:
        error_log = RowErrorLog()
    lines = _decode_lines(source)
    try:
        header_line = next(lines)
    except StopIteration:
        raise ValueError("missing header row") from None
    header = header_line.rstrip("\n").split("\t")
    seen = _IdTracker()
    for line_no, line in enumerate(lines, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            error_log.add(
                MalformedRow(line_no, f"expected {len(header)} columns, got {len(cells)}")
            )
            continue
        row = {h: unescape_field(c) for h, c in zip(header, cells)}
        try:
            score = float(row["sentiment_score"])
        except (KeyError, ValueError):
            error_log.add(MalformedRow(line_no, "missing or non-numeric sentiment_score"))
            continue
        if not (0.0 <= score <= 5.0):
            error_log.add(ScoreOutOfRange(line_no, score))
            continue
        try:
            record = SentenceSentiment(
                speech_id=row["speech_id"],
                sentence_index=int(row["sentence_index"]),
                sentence_text=row.get("sentence_text", ""),
                score=score,
                label3=Sentiment3(row["sentiment_label"]),
            )
        except (KeyError, ValueError) as e:
            error_log.add(MalformedRow(line_no, str(e)))
            continue
        key = f"{record.speech_id}\x00{record.sentence_index}"
        try:
            seen.check(key)
        except DuplicateId:
            error_log.add(
                MalformedRow(
                    line_no,
                    f"duplicate sentence ({record.speech_id!r}, {record.sentence_index})",
                )
            )
            continue
        yield record


def write_sentence_sentiments(records: Iterable[SentenceSentiment], out: IO[str]) -> int:
    out.write("\t".join(SENTENCE_COLUMNS) + "\n")
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
