"""Teacher-model annotation: backends, retries, parsing, accounting.

The backend interface is one blocking call per speech; annotate_batch
fans requests out over a thread pool with a bounded in-flight window and
re-sequences results to input order. A deterministic mock backend stands
in for the real HTTP service in tests and dry runs.
"""

from __future__ import annotations

import abc
import enum
import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass
from typing import IO, Callable, Iterable, Iterator, Mapping

import requests

from .capschema import (
    DO_NOT_KNOW,
    SCHEMA,
    AnnotatorLabel,
    CapLabel,
    LabelSchema,
    PromptTemplate,
    UnknownCode,
    UnknownName,
    build_teacher_prompt,
)
from .corpus import Speech, escape_field, unescape_field
from .parallel import bounded_map

logger = logging.getLogger(__name__)


class TeacherError(Exception):
    pass


class BackendUnavailable(TeacherError):
    """The backend cannot be reached at all; fatal once retries run out."""


class TransientBackendError(TeacherError):
    """A retryable per-request failure (rate limit, 5xx, timeout)."""


class Unparseable(TeacherError):
    def __init__(self, text: str):
        super().__init__(f"cannot extract a label from {text!r}")
        self.text = text


@dataclass(frozen=True)
class TeacherRequest:
    id: str
    prompt: str


@dataclass(frozen=True)
class TeacherResponse:
    id: str
    text: str | None = None
    error_kind: str | None = None
    detail: str | None = None

    @property
    def ok(self) -> bool:
        return self.error_kind is None and self.text is not None


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 8.0

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")

    def delay(self, attempt: int) -> float:
        return min(self.backoff_base * (2**attempt), self.backoff_cap)


class LabelSource(enum.Enum):
    TEACHER = "teacher"
    HUMAN = "human"
    GOLD = "gold"


@dataclass(frozen=True)
class LabeledExample:
    """A speech with a definite CAP label; Mix and do_not_know never occur here."""

    speech: Speech
    label: CapLabel
    source: LabelSource
    annotator_id: str
    raw_response: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.label, CapLabel):
            raise TypeError("label must be a CapLabel")


@dataclass(frozen=True)
class AnnotationFailure:
    speech_id: str
    reason: str


@dataclass
class CostEstimate:
    """Character-count proxy for token spend; reported, never enforced."""

    prompt_chars: int = 0
    response_chars: int = 0
    items: int = 0

    def add(self, prompt_chars: int, response_chars: int) -> None:
        self.prompt_chars += prompt_chars
        self.response_chars += response_chars
        self.items += 1

    @property
    def estimated_tokens(self) -> int:
        return (self.prompt_chars + self.response_chars) // 4


class TeacherBackend(abc.ABC):
    """One blocking completion per request; must tolerate concurrent calls."""

    @abc.abstractmethod
    def complete(self, request: TeacherRequest) -> TeacherResponse:
        raise NotImplementedError


class MockTeacherBackend(TeacherBackend):
    """Deterministic stand-in for the HTTP teacher.

    mode "constant" always answers ``constant_text``; "hash" derives a
    schema code from a keyed digest of the request id; "keyword" answers
    the code of the first (phrase, code) rule found in the prompt, else
    ``default_code``. Fault injection: ids in ``transient_failures`` fail
    that many times before succeeding, ids in ``refuse_ids`` always get a
    non-retryable error response, and ``down=True`` makes every call raise
    BackendUnavailable.
    """

    def __init__(
        self,
        mode: str = "hash",
        schema: LabelSchema = SCHEMA,
        constant_text: str = "0",
        rules: Iterable[tuple[str, int]] = (),
        default_code: int = 0,
        salt: str = "",
        transient_failures: Mapping[str, int] | None = None,
        refuse_ids: frozenset[str] | set[str] = frozenset(),
        down: bool = False,
    ):
        if mode not in ("constant", "hash", "keyword"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.schema = schema
        self.constant_text = constant_text
        self.rules = [(phrase.lower(), code) for phrase, code in rules]
        self.default_code = default_code
        self.salt = salt
        self.refuse_ids = set(refuse_ids)
        self.down = down
        self._remaining = dict(transient_failures or {})
        self._lock = threading.Lock()

    def label_code_for(self, speech_id: str) -> int:
        """The code hash mode will answer for this id (tests derive histograms)."""
        digest = hashlib.sha256(f"{self.salt}:{speech_id}".encode("utf-8")).digest()
        codes = self.schema.codes
        return codes[int.from_bytes(digest[:8], "big") % len(codes)]

    def complete(self, request: TeacherRequest) -> TeacherResponse:
        if self.down:
            raise BackendUnavailable("mock backend is down")
        with self._lock:
            left = self._remaining.get(request.id, 0)
            if left > 0:
                self._remaining[request.id] = left - 1
                raise TransientBackendError(f"injected failure for {request.id}")
        if request.id in self.refuse_ids:
            return TeacherResponse(id=request.id, error_kind="refused", detail="mock refusal")
        if self.mode == "constant":
            return TeacherResponse(id=request.id, text=self.constant_text)
        if self.mode == "keyword":
            # match against the speech body only (after the last "Speech:"
            # marker), so words in the label block don't trigger rules
            body = request.prompt.lower().rsplit("speech:", 1)[-1]
            for phrase, code in self.rules:
                if phrase in body:
                    return TeacherResponse(id=request.id, text=str(code))
            return TeacherResponse(id=request.id, text=str(self.default_code))
        return TeacherResponse(id=request.id, text=str(self.label_code_for(request.id)))


class HTTPTeacherBackend(TeacherBackend):
    """JSON-over-HTTP teacher client.

    POSTs {model, prompt} and expects {text}. Connection-level trouble
    raises BackendUnavailable; 429 and 5xx raise TransientBackendError so
    the retry loop can back off; other errors become per-item failures.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        token: str | None = None,
        timeout: float = 60.0,
        http=None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.token = token
        self.timeout = timeout
        self._http = http if http is not None else requests

    def complete(self, request: TeacherRequest) -> TeacherResponse:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = self._http.post(
                self.endpoint,
                json={"model": self.model, "prompt": request.prompt},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.Timeout as e:
            raise TransientBackendError(f"timeout: {e}") from e
        except requests.RequestException as e:
            raise BackendUnavailable(str(e)) from e
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            return TeacherResponse(
                id=request.id, error_kind="http", detail=f"HTTP {resp.status_code}"
            )
        try:
            payload = resp.json()
            text = payload["text"]
        except (ValueError, KeyError, TypeError):
            return TeacherResponse(
                id=request.id, error_kind="protocol", detail="no text field in response"
            )
        if not isinstance(text, str):
            return TeacherResponse(
                id=request.id, error_kind="protocol", detail="text field is not a string"
            )
        return TeacherResponse(id=request.id, text=text)


# edge characters a reply may wrap a label in; JSON structure ([], {})
# deliberately excluded so lists and objects go down the JSON path
_PUNCT_EDGE = " \t\r\n.,;:!?\"'`()"


def parse_teacher_response(text: str, schema: LabelSchema = SCHEMA) -> CapLabel:
    """Liberal extraction of a schema label from a model reply.

    Tried in order: a bare integer code, an exact label name (case
    blind), then a JSON object whose "label" field holds either form.
    Leading and trailing whitespace or punctuation never disqualify.
    """
    if not isinstance(text, str):
        raise Unparseable(repr(text))
    trimmed = text.strip(_PUNCT_EDGE)
    if re.fullmatch(r"[+-]?\d+", trimmed):
        try:
            return schema.label_from_code(int(trimmed))
        except UnknownCode:
            raise Unparseable(text) from None
    try:
        return schema.label_from_name(trimmed)
    except UnknownName:
        pass
    try:
        obj = json.loads(text.strip())
    except json.JSONDecodeError:
        raise Unparseable(text) from None
    if isinstance(obj, dict) and "label" in obj and not isinstance(obj["label"], bool):
        inner = obj["label"]
        if isinstance(inner, int):
            try:
                return schema.label_from_code(inner)
            except UnknownCode:
                raise Unparseable(text) from None
        if isinstance(inner, str):
            try:
                return parse_teacher_response(inner, schema)
            except Unparseable:
                raise Unparseable(text) from None
    raise Unparseable(text)


def _call_with_retry(
    backend: TeacherBackend,
    request: TeacherRequest,
    policy: RetryPolicy,
    sleeper: Callable[[float], None],
) -> TeacherResponse:
    for attempt in range(policy.attempts):
        last = attempt + 1 >= policy.attempts
        try:
            return backend.complete(request)
        except TransientBackendError as e:
            if last:
                return TeacherResponse(
                    id=request.id, error_kind="transient", detail=str(e)
                )
            logger.debug("retrying %s after transient error: %s", request.id, e)
        except BackendUnavailable:
            if last:
                raise
            logger.debug("retrying %s, backend unavailable", request.id)
        sleeper(policy.delay(attempt))
    raise AssertionError("unreachable")


def annotate_batch(
    speeches: Iterable[Speech],
    backend: TeacherBackend,
    policy: RetryPolicy | None = None,
    template: PromptTemplate | None = None,
    schema: LabelSchema = SCHEMA,
    guidelines: str | None = None,
    annotator_id: str = "teacher",
    workers: int = 8,
    window: int = 64,
    cost: CostEstimate | None = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> Iterator[LabeledExample | AnnotationFailure]:
    """Annotate a speech stream, yielding one outcome per input, in order.

    Prompts use text_en when present, otherwise the original text. Every
    speech yields exactly one LabeledExample or AnnotationFailure; only an
    unreachable backend (after the retry budget) aborts the stream.
    """
    policy = policy or RetryPolicy()

    def call(speech: Speech) -> tuple[Speech, int, TeacherResponse]:
        body = speech.text_en or speech.text
        prompt = build_teacher_prompt(
            body, template=template, schema=schema, guidelines=guidelines
        )
        response = _call_with_retry(
            backend, TeacherRequest(id=speech.id, prompt=prompt), policy, sleeper
        )
        return speech, len(prompt), response

    for speech, prompt_chars, response in bounded_map(
        call, speeches, workers=workers, window=window
    ):
        if cost is not None:
            cost.add(prompt_chars, len(response.text or ""))
        if response.id != speech.id:
            yield AnnotationFailure(speech.id, f"response id mismatch: {response.id!r}")
            continue
        if not response.ok:
            yield AnnotationFailure(
                speech.id, f"{response.error_kind}: {response.detail}"
            )
            continue
        try:
            label = parse_teacher_response(response.text, schema)
        except Unparseable:
            yield AnnotationFailure(speech.id, f"unparseable: {response.text[:80]!r}")
            continue
        yield LabeledExample(
            speech=speech,
            label=label,
            source=LabelSource.TEACHER,
            annotator_id=annotator_id,
            raw_response=response.text,
        )


ANNOTATION_COLUMNS = ["speech_id", "label_code", "source", "raw_response"]

DO_NOT_KNOW_CODE = "DNK"


@dataclass(frozen=True)
class AnnotationRow:
    """One line of an annotations-tsv file; label may be do_not_know."""

    speech_id: str
    label: AnnotatorLabel
    source: str
    raw_response: str | None = None


def write_annotations(examples: Iterable[LabeledExample], out: IO[str]) -> int:
    out.write("\t".join(ANNOTATION_COLUMNS) + "\n")
    count = 0
    for ex in examples:
        cells = [
            escape_field(ex.speech.id),
            str(ex.label.code),
            ex.source.value,
            escape_field(ex.raw_response or ""),
        ]
        out.write("\t".join(cells) + "\n")
        count += 1
    return count


def read_annotations(
    source: Iterable[str], schema: LabelSchema = SCHEMA
) -> Iterator[AnnotationRow]:
    """Parse annotations-tsv; label_code is a schema code or the DNK sentinel."""
    lines = iter(source)
    try:
        header = next(lines).rstrip("\n").split("\t")
    except StopIteration:
        raise ValueError("missing header row") from None
    if header[: len(ANNOTATION_COLUMNS)] != ANNOTATION_COLUMNS:
        raise ValueError(f"unexpected annotations header: {header!r}")
    for line_no, line in enumerate(lines, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) < 3:
            raise ValueError(f"line {line_no}: expected at least 3 columns")
        code_s = cells[1].strip()
        if code_s == DO_NOT_KNOW_CODE:
            label = DO_NOT_KNOW
        else:
            try:
                label = AnnotatorLabel(kind="cap", cap=schema.label_from_code(int(code_s)))
            except (ValueError, UnknownCode):
                raise ValueError(f"line {line_no}: bad label code {code_s!r}") from None
        raw = unescape_field(cells[3]) if len(cells) > 3 and cells[3] else None
        yield AnnotationRow(
            speech_id=unescape_field(cells[0]),
            label=label,
            source=cells[2],
            raw_response=raw,
        )
