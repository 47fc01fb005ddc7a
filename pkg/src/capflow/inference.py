"""Confidence-thresholded corpus classification through a student model.

The student is a pluggable backend speaking a tiny wire protocol: requests
are {"id", "text"} objects, replies are {"id", "label_code", "confidence"}.
Three backends ship: a deterministic mock, a spawned child process on
standard streams, and an HTTP client. Low-confidence predictions resolve
to Mix rather than being guessed.
"""

from __future__ import annotations

import abc
import hashlib
import json
import logging
import subprocess
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Iterator, Mapping

import requests

from .capschema import MIX, SCHEMA, CapLabel, FinalLabel, LabelSchema, UnknownCode
from .corpus import Speech
from .parallel import bounded_map
from .teacher import RetryPolicy

logger = logging.getLogger(__name__)


class StudentError(Exception):
    pass


class StudentUnavailable(StudentError):
    """The student cannot be reached; fatal once retries run out."""


class TransientStudentError(StudentError):
    """A retryable batch failure (rate limit, 5xx, timeout)."""


@dataclass(frozen=True)
class Prediction:
    speech_id: str
    label: CapLabel
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ThresholdPolicy:
    tau: float = 0.60

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau {self.tau} outside [0, 1]")


def resolve(pred: Prediction, policy: ThresholdPolicy) -> FinalLabel:
    """The predicted label if confidence reaches tau, else Mix (strict below)."""
    if pred.confidence >= policy.tau:
        return FinalLabel(kind="cap", cap=pred.label)
    return MIX


@dataclass(frozen=True)
class StudentReply:
    """One raw wire reply; validation happens in batch_classify."""

    id: str
    label_code: int
    confidence: float


@dataclass(frozen=True)
class ClassificationResult:
    speech_id: str
    final: FinalLabel
    confidence: float
    failed: bool = False


class StudentBackend(abc.ABC):
    """One blocking predict call per batch of (id, text) pairs."""

    @abc.abstractmethod
    def predict(self, batch: list[tuple[str, str]]) -> list[StudentReply]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class MockStudent(StudentBackend):
    """Deterministic stand-in student.

    mode "constant" answers (constant_code, constant_confidence) for every
    item; mode "hash" derives both label and a uniform-[0,1) confidence
    from a keyed digest of the id. ``scripted`` pins exact (code,
    confidence) replies per id and wins over either mode. Fault injection:
    ids in ``missing_ids`` are silently dropped from replies, ids in
    ``error_ids`` come back as errors, ``transient_failures`` makes the
    first N calls raise a retryable error, ``down`` makes every call fail
    fatally.
    """

    def __init__(
        self,
        mode: str = "hash",
        schema: LabelSchema = SCHEMA,
        constant_code: int = 0,
        constant_confidence: float = 0.7,
        salt: str = "",
        scripted: Mapping[str, tuple[int, float]] | None = None,
        missing_ids: frozenset[str] | set[str] = frozenset(),
        error_ids: frozenset[str] | set[str] = frozenset(),
        transient_failures: int = 0,
        down: bool = False,
    ):
        if mode not in ("constant", "hash"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.schema = schema
        self.constant_code = constant_code
        self.constant_confidence = constant_confidence
        self.salt = salt
        self.scripted = dict(scripted or {})
        self.missing_ids = set(missing_ids)
        self.error_ids = set(error_ids)
        self.down = down
        self._transient_left = transient_failures
        self._lock = threading.Lock()
        self.calls = 0

    def _digest(self, speech_id: str) -> bytes:
        return hashlib.sha256(f"{self.salt}:{speech_id}".encode("utf-8")).digest()

    def label_code_for(self, speech_id: str) -> int:
        if speech_id in self.scripted:
            return self.scripted[speech_id][0]
        if self.mode == "constant":
            return self.constant_code
        codes = self.schema.codes
        return codes[int.from_bytes(self._digest(speech_id)[:8], "big") % len(codes)]

    def confidence_for(self, speech_id: str) -> float:
        if speech_id in self.scripted:
            return self.scripted[speech_id][1]
        if self.mode == "constant":
            return self.constant_confidence
        return int.from_bytes(self._digest(speech_id)[8:16], "big") / 2**64

    def predict(self, batch: list[tuple[str, str]]) -> list[StudentReply]:
        if self.down:
            raise StudentUnavailable("mock student is down")
        with self._lock:
            self.calls += 1
            if self._transient_left > 0:
                self._transient_left -= 1
                raise TransientStudentError("injected transient failure")
        out = []
        for speech_id, _text in batch:
            if speech_id in self.missing_ids or speech_id in self.error_ids:
                continue
            out.append(
                StudentReply(
                    id=speech_id,
                    label_code=self.label_code_for(speech_id),
                    confidence=self.confidence_for(speech_id),
                )
            )
        return out


def _reply_from_obj(obj) -> StudentReply | None:
    """Decode one wire reply; None for per-item error or malformed rows."""
    if not isinstance(obj, dict) or not isinstance(obj.get("id"), str):
        return None
    if "error" in obj:
        logger.warning("student error for %s: %s", obj["id"], obj["error"])
        return None
    code = obj.get("label_code")
    conf = obj.get("confidence")
    if isinstance(code, bool) or not isinstance(code, int):
        return None
    if not isinstance(conf, (int, float)) or isinstance(conf, bool):
        return None
    return StudentReply(id=obj["id"], label_code=code, confidence=float(conf))


class SubprocessStudent(StudentBackend):
    """Student run as a child process, one JSON object per line each way.

    The child must reply line-buffered, one reply per request line, in
    request order or not; replies are matched by id. Any protocol-level
    corruption or early exit is treated as the student being gone.
    """

    def __init__(self, argv: list[str], cwd: str | None = None):
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
            cwd=cwd,
        )
        self._lock = threading.Lock()

    def predict(self, batch: list[tuple[str, str]]) -> list[StudentReply]:
        with self._lock:
            if self._proc.poll() is not None:
                raise StudentUnavailable(
                    f"student process exited with {self._proc.returncode}"
                )
            try:
                for speech_id, text in batch:
                    self._proc.stdin.write(
                        json.dumps({"id": speech_id, "text": text}, ensure_ascii=False)
                        + "\n"
                    )
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as e:
                raise StudentUnavailable(f"student pipe broke: {e}") from e
            replies = []
            for _ in batch:
                line = self._proc.stdout.readline()
                if not line:
                    raise StudentUnavailable("student closed its output stream")
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise StudentUnavailable(f"bad student reply: {line[:80]!r}") from e
                reply = _reply_from_obj(obj)
                if reply is not None:
                    replies.append(reply)
            return replies

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=10)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()


class HTTPStudent(StudentBackend):
    """HTTP student client: POST /predict with a JSON array body."""

    def __init__(
        self,
        base_url: str,
        token: str | None = None,
        timeout: float = 120.0,
        http=None,
    ):
        self.url = base_url.rstrip("/")
        if not self.url.endswith("/predict"):
            self.url += "/predict"
        self.token = token
        self.timeout = timeout
        self._http = http if http is not None else requests

    def predict(self, batch: list[tuple[str, str]]) -> list[StudentReply]:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = [{"id": speech_id, "text": text} for speech_id, text in batch]
        try:
            resp = self._http.post(
                self.url, json=body, headers=headers, timeout=self.timeout
            )
        except requests.Timeout as e:
            raise TransientStudentError(f"timeout: {e}") from e
        except requests.RequestException as e:
            raise StudentUnavailable(str(e)) from e
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientStudentError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise StudentUnavailable(f"HTTP {resp.status_code} from {self.url}")
        try:
            payload = resp.json()
        except ValueError as e:
            raise StudentUnavailable("student response is not JSON") from e
        if not isinstance(payload, list):
            raise StudentUnavailable("student response is not a JSON array")
        return [r for r in map(_reply_from_obj, payload) if r is not None]


@dataclass
class CoverageReport:
    total: int = 0
    kept: int = 0
    mix: int = 0
    failed: int = 0
    per_label_counts: Counter = field(default_factory=Counter)

    def add(self, result: ClassificationResult) -> None:
        self.total += 1
        if result.failed:
            self.failed += 1
        if result.final.kind == "cap":
            self.kept += 1
            self.per_label_counts[result.final.cap.code] += 1
        else:
            self.mix += 1

    @property
    def empty(self) -> bool:
        return self.total == 0

    @property
    def kept_fraction(self) -> float:
        return self.kept / self.total if self.total else 0.0

    @property
    def mix_fraction(self) -> float:
        return self.mix / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "mix": self.mix,
            "failed": self.failed,
            "kept_fraction": self.kept_fraction,
            "mix_fraction": self.mix_fraction,
            "empty": self.empty,
            "per_label_counts": {
                str(code): n for code, n in sorted(self.per_label_counts.items())
            },
        }


def coverage_report(results: Iterable[ClassificationResult]) -> CoverageReport:
    report = CoverageReport()
    for r in results:
        report.add(r)
    return report


def _batches(items: Iterable, size: int) -> Iterator[list]:
    batch: list = []
    for item in items:
        batch.append(item)
        if len(batch) >= size:
            yield batch
            batch = []
    if batch:
        yield batch


def _predict_with_retry(
    backend: StudentBackend,
    batch: list[tuple[str, str]],
    retry: RetryPolicy,
    sleeper: Callable[[float], None],
) -> list[StudentReply] | None:
    """Replies, or None when the batch burned its retry budget on transients."""
    for attempt in range(retry.attempts):
        last = attempt + 1 >= retry.attempts
        try:
            return backend.predict(batch)
        except TransientStudentError as e:
            if last:
                logger.warning("batch of %d failed after retries: %s", len(batch), e)
                return None
        except StudentUnavailable:
            if last:
                raise
        sleeper(retry.delay(attempt))
    raise AssertionError("unreachable")


def batch_classify(
    speeches: Iterable[Speech],
    student: StudentBackend,
    policy: ThresholdPolicy | None = None,
    retry: RetryPolicy | None = None,
    schema: LabelSchema = SCHEMA,
    batch_size: int = 32,
    workers: int = 1,
    report: CoverageReport | None = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> Iterator[ClassificationResult]:
    """Classify a speech stream, one result per input, in input order.

    The student sees the original-language text. Items the student fails
    to answer (or answers with an unknown code or out-of-range confidence)
    come back as Mix with confidence 0 and the failed flag set; only an
    unreachable student aborts. workers > 1 only makes sense for backends
    that allow concurrent predict calls (HTTP).
    """
    policy = policy or ThresholdPolicy()
    retry = retry or RetryPolicy()

    def run(batch: list[Speech]) -> tuple[list[Speech], list[StudentReply] | None]:
        wire = [(s.id, s.text) for s in batch]
        return batch, _predict_with_retry(student, wire, retry, sleeper)

    for batch, replies in bounded_map(
        run, _batches(speeches, batch_size), workers=workers, window=max(workers, 1)
    ):
        by_id: dict[str, StudentReply] = {}
        if replies is not None:
            for reply in replies:
                by_id[reply.id] = reply
        for speech in batch:
            reply = by_id.get(speech.id)
            result = None
            if reply is None:
                reason = "no reply" if replies is not None else "batch failed"
                logger.warning("classify: %s for %s, emitting Mix", reason, speech.id)
                result = ClassificationResult(speech.id, MIX, 0.0, failed=True)
            else:
                try:
                    label = schema.label_from_code(reply.label_code)
                    pred = Prediction(speech.id, label, reply.confidence)
                except (UnknownCode, ValueError) as e:
                    logger.warning("classify: bad reply for %s (%s), emitting Mix", speech.id, e)
                    result = ClassificationResult(speech.id, MIX, 0.0, failed=True)
                else:
                    result = ClassificationResult(
                        speech.id, resolve(pred, policy), pred.confidence
                    )
            if report is not None:
                report.add(result)
            yield result


PREDICTION_COLUMNS = ["speech_id", "label_code", "confidence"]


def write_predictions(results: Iterable[ClassificationResult], out: IO[str]) -> int:
    """predictions-tsv: speech_id, label code or Mix, confidence."""
    out.write("\t".join(PREDICTION_COLUMNS) + "\n")
    count = 0
    for r in results:
        cell = str(r.final.cap.code) if r.final.kind == "cap" else MIX.display
        out.write(f"{r.speech_id}\t{cell}\t{r.confidence}\n")
        count += 1
    return count


def read_predictions(
    lines: Iterable[str], schema: LabelSchema = SCHEMA
) -> Iterator[ClassificationResult]:
    it = iter(lines)
    try:
        header = next(it).rstrip("\n").split("\t")
    except StopIteration:
        raise ValueError("missing header row") from None
    if header != PREDICTION_COLUMNS:
        raise ValueError(f"unexpected predictions header: {header!r}")
    for line_no, line in enumerate(it, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != 3:
            raise ValueError(f"line {line_no}: expected 3 columns")
        speech_id, label_cell, conf_cell = cells
        try:
            confidence = float(conf_cell)
        except ValueError:
            raise ValueError(f"line {line_no}: bad confidence {conf_cell!r}") from None
        if label_cell.upper() == "MIX":
            final = MIX
        else:
            try:
                final = FinalLabel(
                    kind="cap", cap=schema.label_from_code(int(label_cell))
                )
            except (ValueError, UnknownCode):
                raise ValueError(
                    f"line {line_no}: bad label cell {label_cell!r}"
                ) from None
        yield ClassificationResult(speech_id, final, confidence)
