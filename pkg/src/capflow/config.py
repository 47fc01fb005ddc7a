"""Pipeline configuration: an INI file, environment overrides, CLI flags.

Secrets (backend tokens) are taken from the environment only, never from
the config file, so they cannot leak into run manifests. Precedence is
flags over environment over file over defaults.
"""

from __future__ import annotations

import configparser
import os
import shlex
from dataclasses import dataclass
from pathlib import Path

ENV_TEACHER_TOKEN = "CAPFLOW_TEACHER_TOKEN"
ENV_TEACHER_ENDPOINT = "CAPFLOW_TEACHER_ENDPOINT"
ENV_STUDENT_ENDPOINT = "CAPFLOW_STUDENT_ENDPOINT"

# sentinel config value meaning "use the bundled sample table"
BUILTIN = "builtin"


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    corpora_dir: Path = Path("corpora")
    output_dir: Path = Path("out")
    keywords_file: str = BUILTIN
    partyfacts_file: str = BUILTIN
    vdem_file: str = BUILTIN

    train_per_corpus: int = 1000
    dev_per_corpus: int = 200
    test_per_label: int = 40
    seed: int = 0

    teacher_backend: str = "mock"
    teacher_mode: str = "hash"
    teacher_endpoint: str | None = None
    teacher_model: str = "teacher-llm"
    teacher_token: str | None = None
    teacher_workers: int = 8
    teacher_attempts: int = 3

    student_backend: str = "mock"
    student_mode: str = "hash"
    student_endpoint: str | None = None
    student_command: str | None = None
    student_batch_size: int = 32
    student_workers: int = 1

    tau: float = 0.60
    year_min: int = 2017
    year_max: int = 2022
    cap_per_keyword: int = 2000
    jobs: int | None = None

    def validate(self, require_corpora: bool = True) -> None:
        """Raise ConfigError listing every problem found, or return quietly.

        Subcommands that never touch the corpora directory (agree,
        evaluate) pass require_corpora=False.
        """
        problems = []
        if require_corpora and not self.corpora_dir.is_dir():
            problems.append(f"corpora_dir does not exist: {self.corpora_dir}")
        if self.teacher_backend not in ("mock", "http"):
            problems.append(f"unknown teacher backend {self.teacher_backend!r}")
        if self.student_backend not in ("mock", "http", "subprocess"):
            problems.append(f"unknown student backend {self.student_backend!r}")
        if self.teacher_backend == "http" and not self.teacher_endpoint:
            problems.append("teacher backend http needs an endpoint")
        if self.student_backend == "http" and not self.student_endpoint:
            problems.append("student backend http needs an endpoint")
        if self.student_backend == "subprocess" and not self.student_command:
            problems.append("student backend subprocess needs a command")
        if not 0.0 <= self.tau <= 1.0:
            problems.append(f"tau {self.tau} outside [0, 1]")
        if self.year_min > self.year_max:
            problems.append("year_min exceeds year_max")
        for name in ("train_per_corpus", "dev_per_corpus", "test_per_label",
                     "cap_per_keyword"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        for name, path in (("keywords_file", self.keywords_file),
                           ("partyfacts_file", self.partyfacts_file),
                           ("vdem_file", self.vdem_file)):
            if path not in (BUILTIN, "none") and not Path(path).is_file():
                problems.append(f"{name} does not exist: {path}")
        if problems:
            raise ConfigError("; ".join(problems))

    def parliaments(self) -> list[str]:
        """Corpus codes found in corpora_dir ({code}.tsv, sentences aside)."""
        codes = []
        for p in sorted(self.corpora_dir.glob("*.tsv")):
            if p.name.endswith(".sentences.tsv"):
                continue
            codes.append(p.stem)
        return codes

    def speech_file(self, parliament: str) -> Path:
        return self.corpora_dir / f"{parliament}.tsv"

    def sentence_file(self, parliament: str) -> Path:
        return self.corpora_dir / f"{parliament}.sentences.tsv"

    def build_teacher(self):
        from .teacher import HTTPTeacherBackend, MockTeacherBackend

        if self.teacher_backend == "mock":
            return MockTeacherBackend(mode=self.teacher_mode)
        return HTTPTeacherBackend(
            endpoint=self.teacher_endpoint,
            model=self.teacher_model,
            token=self.teacher_token,
        )

    def build_student(self):
        from .inference import HTTPStudent, MockStudent, SubprocessStudent

        if self.student_backend == "mock":
            return MockStudent(mode=self.student_mode)
        if self.student_backend == "subprocess":
            return SubprocessStudent(shlex.split(self.student_command))
        return HTTPStudent(base_url=self.student_endpoint)

    def keyword_specs(self):
        from .capschema import SCHEMA
        from .mining import default_public_lands_spec, read_keyword_tsv

        if self.keywords_file == "none":
            return []
        if self.keywords_file == BUILTIN:
            return [default_public_lands_spec(self.cap_per_keyword, self.seed)]
        with open(self.keywords_file, encoding="utf-8") as fh:
            return read_keyword_tsv(fh, SCHEMA, self.cap_per_keyword, self.seed)

    def join_tables(self):
        from .assembly import JoinTable, sample_partyfacts_table, sample_vdem_table

        def load(value, builtin):
            if value == "none":
                return None
            if value == BUILTIN:
                return builtin()
            with open(value, encoding="utf-8") as fh:
                return JoinTable.from_tsv(fh)

        return (
            load(self.partyfacts_file, sample_partyfacts_table),
            load(self.vdem_file, sample_vdem_table),
        )


_SECTIONS = {
    "paths": {
        "corpora_dir": ("corpora_dir", Path),
        "output_dir": ("output_dir", Path),
        "keywords_file": ("keywords_file", str),
        "partyfacts_file": ("partyfacts_file", str),
        "vdem_file": ("vdem_file", str),
    },
    "sampling": {
        "train_per_corpus": ("train_per_corpus", int),
        "dev_per_corpus": ("dev_per_corpus", int),
        "test_per_label": ("test_per_label", int),
        "seed": ("seed", int),
    },
    "teacher": {
        "backend": ("teacher_backend", str),
        "mode": ("teacher_mode", str),
        "endpoint": ("teacher_endpoint", str),
        "model": ("teacher_model", str),
        "workers": ("teacher_workers", int),
        "attempts": ("teacher_attempts", int),
    },
    "student": {
        "backend": ("student_backend", str),
        "mode": ("student_mode", str),
        "endpoint": ("student_endpoint", str),
        "command": ("student_command", str),
        "batch_size": ("student_batch_size", int),
        "workers": ("student_workers", int),
    },
    "inference": {"tau": ("tau", float)},
    "analysis": {
        "year_min": ("year_min", int),
        "year_max": ("year_max", int),
    },
    "mining": {"cap_per_keyword": ("cap_per_keyword", int)},
    "run": {"jobs": ("jobs", int)},
}


def load_config(path: str | Path | None, env: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig from an optional INI file plus the environment."""
    env = os.environ if env is None else env
    cfg = PipelineConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            keys = _SECTIONS.get(section)
            if keys is None:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in keys:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                attr, cast = keys[key]
                try:
                    setattr(cfg, attr, cast(raw))
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
    if env.get(ENV_TEACHER_ENDPOINT):
        cfg.teacher_endpoint = env[ENV_TEACHER_ENDPOINT]
    if env.get(ENV_STUDENT_ENDPOINT):
        cfg.student_endpoint = env[ENV_STUDENT_ENDPOINT]
    if env.get(ENV_TEACHER_TOKEN):
        cfg.teacher_token = env[ENV_TEACHER_TOKEN]
    return cfg
