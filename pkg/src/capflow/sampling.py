"""Reproducible sampling: stratified train/dev splits and balanced test sets.

Both samplers are reservoir-based so corpora stream through without ever
being memory-resident, and both derive their RNG state from a hash of the
seed plus the stratum key, so results do not depend on dict order or on
which corpora happen to share a file.
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

from .capschema import SCHEMA, LabelSchema, UnknownCode
from .corpus import Speech

if TYPE_CHECKING:
    from .teacher import LabeledExample

logger = logging.getLogger(__name__)


class SamplingError(Exception):
    pass


class InsufficientCorpus(SamplingError):
    """A corpus cannot cover the requested train+dev sizes."""

    def __init__(self, corpus: str, available: int, required: int):
        super().__init__(
            f"corpus {corpus!r} has {available} eligible speeches, need {required}"
        )
        self.corpus = corpus
        self.available = available
        self.required = required


@dataclass(frozen=True)
class SamplePlan:
    n_train_per_corpus: int = 1000
    n_dev_per_corpus: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_train_per_corpus < 0 or self.n_dev_per_corpus < 0:
            raise ValueError("sample sizes must be non-negative")


def stratum_rng(seed: int, key: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class Reservoir:
    """Algorithm R: a uniform sample of ``size`` items from a stream."""

    def __init__(self, size: int, rng: random.Random):
        self.size = size
        self.rng = rng
        self.items: list = []
        self.seen = 0

    def offer(self, item) -> None:
        self.seen += 1
        if len(self.items) < self.size:
            self.items.append(item)
        else:
            j = self.rng.randrange(self.seen)
            if j < self.size:
                self.items[j] = item


def corpus_sample(
    speeches: Iterable[Speech], plan: SamplePlan
) -> tuple[list[Speech], list[Speech]]:
    """Uniform per-corpus train/dev samples from a (possibly mixed) stream.

    Each corpus (speech.parliament) gets its own reservoir of
    n_train + n_dev speeches keyed by (seed, corpus); the reservoir is
    then shuffled and split. Output is concatenated in sorted corpus
    order, so a fixed seed gives byte-identical results.
    """
    k = plan.n_train_per_corpus + plan.n_dev_per_corpus
    if k == 0:
        return [], []
    reservoirs: dict[str, Reservoir] = {}
    for speech in speeches:
        if not speech.text.strip():
            continue
        pool = reservoirs.get(speech.parliament)
        if pool is None:
            pool = reservoirs[speech.parliament] = Reservoir(
                k, stratum_rng(plan.seed, speech.parliament)
            )
        pool.offer(speech)
    train: list[Speech] = []
    dev: list[Speech] = []
    for corpus in sorted(reservoirs):
        pool = reservoirs[corpus]
        if pool.seen < k:
            raise InsufficientCorpus(corpus, pool.seen, k)
        chosen = list(pool.items)
        pool.rng.shuffle(chosen)
        train.extend(chosen[: plan.n_train_per_corpus])
        dev.extend(chosen[plan.n_train_per_corpus : k])
    return train, dev


def balanced_test_sample(
    pool: Iterable["LabeledExample"],
    per_label: int,
    exclude_ids: set[str],
    seed: int,
    schema: LabelSchema = SCHEMA,
) -> list["LabeledExample"]:
    """Up to ``per_label`` examples per schema label, excluding known ids.

    Labels short of ``per_label`` after exclusion contribute everything
    they have; the shortfall is logged, not fatal. Output is grouped in
    schema label order and deterministic per seed.
    """
    if per_label == 0:
        return []
    reservoirs = {
        lab.code: Reservoir(per_label, stratum_rng(seed, f"label:{lab.code}"))
        for lab in schema
    }
    for example in pool:
        if example.speech.id in exclude_ids:
            continue
        try:
            reservoirs[example.label.code].offer(example)
        except KeyError:
            raise UnknownCode(example.label.code) from None
    out: list["LabeledExample"] = []
    for lab in schema:
        pool_for_label = reservoirs[lab.code]
        if len(pool_for_label.items) < per_label:
            logger.warning(
                "balanced sample: label %s (%d) has %d of %d requested",
                lab.name,
                lab.code,
                len(pool_for_label.items),
                per_label,
            )
        out.extend(pool_for_label.items)
    return out
