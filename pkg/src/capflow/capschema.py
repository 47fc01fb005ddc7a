"""Policy topic label universe, annotation guidelines, and teacher-prompt assembly.

The label schema is the 21 major policy topics of the Comparative Agendas
Project plus a residual ``Other`` category (22 labels total; the numbering
has historical gaps at 11 and 22). Two out-of-schema sentinels exist:
``Mix`` for low-confidence model output and ``do not know`` for human
annotators; neither is ever a training label.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path


class UnknownCode(KeyError):
    """Raised for a numeric code outside the label schema."""


class UnknownName(KeyError):
    """Raised for a label name outside the label schema."""


class UnresolvedPlaceholder(ValueError):
    """Raised when a prompt template uses an undefined or misses a required placeholder."""


@dataclass(frozen=True)
class CapLabel:
    code: int
    name: str
    description: str = ""

    # Equality/hashing by identity of the label, not its prose.
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CapLabel):
            return NotImplemented
        return self.code == other.code and self.name == other.name

    def __hash__(self) -> int:
        return hash((self.code, self.name))

    def __repr__(self) -> str:
        return f"CapLabel({self.code}, {self.name!r})"


@dataclass(frozen=True)
class FinalLabel:
    """Resolved output label of the pipeline: a schema label or the Mix sentinel."""

    kind: str  # "cap" | "mix"
    cap: CapLabel | None = None

    def __post_init__(self) -> None:
        if self.kind == "cap":
            if self.cap is None:
                raise ValueError("kind='cap' requires a cap label")
        elif self.kind == "mix":
            if self.cap is not None:
                raise ValueError("kind='mix' carries no cap label")
        else:
            raise ValueError(f"bad FinalLabel kind: {self.kind!r}")

    @property
    def display(self) -> str:
        return self.cap.name if self.cap is not None else "Mix"


@dataclass(frozen=True)
class AnnotatorLabel:
    """Label assigned by a human annotator: a schema label or 'do not know'."""

    kind: str  # "cap" | "do_not_know"
    cap: CapLabel | None = None

    def __post_init__(self) -> None:
        if self.kind == "cap":
            if self.cap is None:
                raise ValueError("kind='cap' requires a cap label")
        elif self.kind == "do_not_know":
            if self.cap is not None:
                raise ValueError("kind='do_not_know' carries no cap label")
        else:
            raise ValueError(f"bad AnnotatorLabel kind: {self.kind!r}")

    @property
    def display(self) -> str:
        return self.cap.name if self.cap is not None else "do_not_know"


MIX = FinalLabel(kind="mix")
DO_NOT_KNOW = AnnotatorLabel(kind="do_not_know")


class LabelSchema:
    """An immutable ordered set of CapLabels, indexed by code and by name."""

    def __init__(self, labels: list[CapLabel]):
        self.labels = tuple(labels)
        self._by_code = {l.code: l for l in self.labels}
        self._by_name = {l.name.lower(): l for l in self.labels}
        if len(self._by_code) != len(self.labels):
            raise ValueError("duplicate label codes in schema")
        if len(self._by_name) != len(self.labels):
            raise ValueError("duplicate label names in schema")

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label: CapLabel) -> bool:
        return self._by_code.get(label.code) == label

    @property
    def codes(self) -> list[int]:
        return [l.code for l in self.labels]

    def label_from_code(self, code: int) -> CapLabel:
        try:
            return self._by_code[code]
        except KeyError:
            raise UnknownCode(code) from None

    def label_from_name(self, name: str) -> CapLabel:
        """Case-insensitive exact name lookup."""
        try:
            return self._by_name[name.strip().lower()]
        except KeyError:
            raise UnknownName(name) from None

    def policy_labels(self) -> list[CapLabel]:
        """Schema minus the residual Other (code 0): the labels analyses report on."""
        return [l for l in self.labels if l.code != 0]

    @classmethod
    def from_tsv(cls, path: str | Path) -> "LabelSchema":
        return cls(_parse_schema_lines(Path(path).read_text(encoding="utf-8").splitlines()))


def _parse_schema_lines(lines) -> list[CapLabel]:
    labels = []
    for line in lines:
        line = line.rstrip("\n")
        if not line.strip():
            continue
        code_s, name, description = line.split("\t", 2)
        labels.append(CapLabel(int(code_s), name, description))
    return labels


def _resource_text(name: str) -> str:
    return (
        importlib_resources.files("capflow")
        .joinpath("resources", name)
        .read_text(encoding="utf-8")
    )


def default_schema() -> LabelSchema:
    """The built-in 22-label schema shipped with the package."""
    return LabelSchema(_parse_schema_lines(_resource_text("cap_labels.tsv").splitlines()))


# Module-level singleton; schemas are immutable and safe to share.
SCHEMA = default_schema()


def label_from_code(code: int, schema: LabelSchema = SCHEMA) -> CapLabel:
    return schema.label_from_code(code)


def label_from_name(name: str, schema: LabelSchema = SCHEMA) -> CapLabel:
    return schema.label_from_name(name)


_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")
_KNOWN_PLACEHOLDERS = {"label_block", "guidelines", "speech"}


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt text with {label_block}, {guidelines} and {speech} placeholders."""

    text: str

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        return cls(Path(path).read_text(encoding="utf-8"))


def default_template() -> PromptTemplate:
    return PromptTemplate(_resource_text("teacher_prompt.txt"))


def default_guidelines() -> str:
    return _resource_text("guidelines.txt").strip()


def label_block(schema: LabelSchema = SCHEMA) -> str:
    """One 'Name (code): description' line per schema label."""
    return "\n".join(f"{l.name} ({l.code}): {l.description}" for l in schema)


def build_teacher_prompt(
    speech_text: str,
    template: PromptTemplate | None = None,
    schema: LabelSchema = SCHEMA,
    guidelines: str | None = None,
) -> str:
    """Render the annotation prompt for one speech.

    Deterministic and idempotent for identical inputs. Raises
    UnresolvedPlaceholder if the template names an unknown placeholder or
    does not place the speech.
    """
    if template is None:
        template = default_template()
    names = set(_PLACEHOLDER_RE.findall(template.text))
    unknown = names - _KNOWN_PLACEHOLDERS
    if unknown:
        raise UnresolvedPlaceholder(f"unknown placeholder(s): {sorted(unknown)}")
    if "speech" not in names:
        raise UnresolvedPlaceholder("template does not place {speech}")
    values = {
        "label_block": label_block(schema),
        "guidelines": guidelines if guidelines is not None else default_guidelines(),
        "speech": speech_text,
    }
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template.text)
