"""Readers for the annotation pipeline's file formats.

Two inputs exist: speech-tsv (header row, columns id, parliament, date,
speaker_id, speaker_name, speaker_gender, speaker_role, party_id,
party_name, party_status, text_en, text, extras appended after) and
annotations-tsv (speech_id, label_code, source, raw_response). Literal
backslash, tab, newline, and carriage return inside fields arrive as
``\\``-escapes. These readers are intentionally independent of the
pipeline package; the formats are the contract.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .schema import CAP_CODES, DO_NOT_KNOW, IOFailure, LabelOutsideSchema

logger = logging.getLogger(__name__)

SPEECH_COLUMNS = [
    "id", "parliament", "date", "speaker_id", "speaker_name", "speaker_gender",
    "speaker_role", "party_id", "party_name", "party_status", "text_en", "text",
]
ANNOTATION_COLUMNS = ["speech_id", "label_code", "source", "raw_response"]

_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def unescape_field(cell: str) -> str:
    if "\\" not in cell:
        return cell
    out = []
    i = 0
    while i < len(cell):
        ch = cell[i]
        if ch == "\\" and i + 1 < len(cell) and cell[i + 1] in _UNESCAPES:
            out.append(_UNESCAPES[cell[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


@dataclass(frozen=True)
class SpeechRow:
    id: str
    text: str
    text_en: str | None


def read_speeches(path: str | Path) -> Iterator[SpeechRow]:
    """Stream (id, text, text_en) from a speech-tsv file.

    Only the columns the trainer needs are materialized; the model is
    trained and served on the original-language ``text``, matching what
    the inference stage sends over the wire.
    """
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot open speeches file: {exc}") from exc
    with fh:
        header_line = fh.readline()
        if not header_line:
            raise IOFailure(f"{path}: empty file, expected a header row")
        header = header_line.rstrip("\n").split("\t")
        if header[: len(SPEECH_COLUMNS)] != SPEECH_COLUMNS:
            raise IOFailure(f"{path}: unexpected speech-tsv header {header[:12]!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) < len(SPEECH_COLUMNS):
                raise IOFailure(f"{path} line {line_no}: expected 12+ columns")
            text_en = unescape_field(cells[10])
            yield SpeechRow(
                id=unescape_field(cells[0]),
                text=unescape_field(cells[11]),
                text_en=text_en or None,
            )


def read_annotations(path: str | Path) -> dict[str, int]:
    """speech_id -> CAP code from an annotations-tsv file.

    DNK rows (a human annotator declining the item) are skipped with a
    log line; an unknown numeric code is a schema violation and fatal.
    """
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot open annotations file: {exc}") from exc
    labels: dict[str, int] = {}
    skipped = 0
    with fh:
        header_line = fh.readline()
        if not header_line:
            raise IOFailure(f"{path}: empty file, expected a header row")
        header = header_line.rstrip("\n").split("\t")
        if header[: len(ANNOTATION_COLUMNS)] != ANNOTATION_COLUMNS:
            raise IOFailure(f"{path}: unexpected annotations header {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) < 2:
                raise IOFailure(f"{path} line {line_no}: expected at least 2 columns")
            speech_id = unescape_field(cells[0])
            code_cell = cells[1].strip()
            if code_cell == DO_NOT_KNOW:
                skipped += 1
                continue
            try:
                code = int(code_cell)
            except ValueError:
                raise IOFailure(
                    f"{path} line {line_no}: label_code {code_cell!r} is not an integer"
                ) from None
            if code not in CAP_CODES:
                raise LabelOutsideSchema(code, f"{path} line {line_no}")
            labels[speech_id] = code
    if skipped:
        logger.info("%s: skipped %d do-not-know rows", path, skipped)
    return labels


def build_examples(
    speeches_path: str | Path, annotations_path: str | Path
) -> list[tuple[str, int]]:
    """Join speeches with their labels into (text, code) training pairs.

    Speeches without an annotation are ignored (the corpus is usually a
    superset); an annotation whose speech is missing means the two files
    do not belong together and is fatal.
    """
    labels = read_annotations(annotations_path)
    examples: list[tuple[str, int]] = []
    seen: set[str] = set()
    for row in read_speeches(speeches_path):
        code = labels.get(row.id)
        if code is not None:
            examples.append((row.text, code))
            seen.add(row.id)
    missing = set(labels) - seen
    if missing:
        some = ", ".join(sorted(missing)[:3])
        raise IOFailure(
            f"{len(missing)} annotated ids missing from {speeches_path} (e.g. {some})"
        )
    return examples
