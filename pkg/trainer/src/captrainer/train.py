"""Fine-tuning loop, per-seed evaluation, and the run report.

One model is trained per seed. The classification head covers exactly the
label codes present in the training annotations (sorted numerically);
dev items whose gold label the model cannot emit simply score against
whatever it predicts. Texts longer than max_sequence_length are truncated
from the end, on the theory that parliamentary speeches put the topic up
front.
"""

import json
import logging
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from .data import build_examples
from .model import (
    BUILTIN_MODEL_ID,
    HashTokenizer,
    build_builtin,
    load_artifact,
    logits_fn,
    predict_batch,
    save_artifact,
    _load_hf,
)
from .schema import EmptyTrainingSet

logger = logging.getLogger(__name__)

VOCAB_SIZE = 8192


@dataclass(frozen=True)
class TrainConfig:
    base_model_id: str = BUILTIN_MODEL_ID
    learning_rate: float = 1e-5
    epochs: int = 3
    seeds: tuple[int, ...] = (1, 2, 3)
    max_sequence_length: int = 128
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class EvalReport:
    per_label_f1: dict[int, float]
    macro_f1: float
    n: int


def macro_f1(gold: list[int], pred: list[int], labels: list[int]) -> EvalReport:
    """Per-label and macro F1 over a fixed label list; 0/0 counts as 0."""
    per_label: dict[int, float] = {}
    for lab in labels:
        tp = sum(1 for g, p in zip(gold, pred) if g == lab and p == lab)
        fp = sum(1 for g, p in zip(gold, pred) if g != lab and p == lab)
        fn = sum(1 for g, p in zip(gold, pred) if g == lab and p != lab)
        denom = 2 * tp + fp + fn
        per_label[lab] = (2 * tp / denom) if denom else 0.0
    return EvalReport(
        per_label_f1=per_label,
        macro_f1=sum(per_label.values()) / len(labels),
        n=len(gold),
    )


def render_aggregate(values: list[float]) -> str:
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return f"{mean:.2f}±{sd:.2f}"


@dataclass
class TrainResult:
    labels: list[int]
    artifact_dirs: dict[int, Path]
    reports: dict[int, EvalReport] = field(default_factory=dict)

    @property
    def aggregate(self) -> str:
        return render_aggregate([r.macro_f1 for r in self.reports.values()])


def _train_one(
    examples: list[tuple[str, int]],
    labels: list[int],
    cfg: TrainConfig,
    seed: int,
):
    torch.manual_seed(seed)
    if cfg.base_model_id == BUILTIN_MODEL_ID:
        kind = "builtin"
        model = build_builtin(len(labels), cfg.max_sequence_length, VOCAB_SIZE)
        tokenizer = HashTokenizer(VOCAB_SIZE)
    else:
        kind = "hf"
        model, tokenizer = _load_hf(cfg.base_model_id, len(labels))
    model.train()
    forward = logits_fn(kind, model, tokenizer, cfg.max_sequence_length)
    index = {code: i for i, code in enumerate(labels)}
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    order = list(range(len(examples)))
    rng = random.Random(seed)
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            chunk = [examples[i] for i in order[start : start + cfg.batch_size]]
            texts = [t for t, _ in chunk]
            targets = torch.tensor([index[c] for _, c in chunk], dtype=torch.long)
            optimizer.zero_grad()
            loss = loss_fn(forward(texts), targets)
            loss.backward()
            optimizer.step()
            total += loss.detach().item()
        logger.info("seed %d epoch %d: mean loss %.4f", seed, epoch + 1, total)
    model.eval()
    return model, tokenizer, kind


def train(
    train_speeches: str | Path,
    train_annotations: str | Path,
    dev_speeches: str | Path,
    dev_annotations: str | Path,
    cfg: TrainConfig,
    out_dir: str | Path,
) -> TrainResult:
    """Train one model per seed; write artifacts and a run report.

    Returns the per-seed dev EvalReports plus the aggregate rendered as
    mean±sd over seeds.
    """
    torch.set_num_threads(1)  # keeps reductions ordered, hence runs repeatable
    train_ex = build_examples(train_speeches, train_annotations)
    if not train_ex:
        raise EmptyTrainingSet(f"no labeled training examples in {train_annotations}")
    dev_ex = build_examples(dev_speeches, dev_annotations)
    if not dev_ex:
        raise EmptyTrainingSet(f"no labeled dev examples in {dev_annotations}")
    labels = sorted({code for _, code in train_ex})
    out = Path(out_dir)
    result = TrainResult(labels=labels, artifact_dirs={})
    for seed in cfg.seeds:
        model, tokenizer, kind = _train_one(train_ex, labels, cfg, seed)
        seed_dir = save_artifact(
            out / f"seed_{seed}",
            model,
            kind,
            labels,
            cfg.max_sequence_length,
            cfg.base_model_id,
            seed,
            vocab_size=VOCAB_SIZE,
            tokenizer=tokenizer,
        )
        artifact = load_artifact(seed_dir)
        pred = []
        for start in range(0, len(dev_ex), cfg.batch_size):
            chunk = dev_ex[start : start + cfg.batch_size]
            pred.extend(code for code, _ in predict_batch(artifact, [t for t, _ in chunk]))
        report = macro_f1([c for _, c in dev_ex], pred, labels)
        result.reports[seed] = report
        result.artifact_dirs[seed] = seed_dir
        logger.info("seed %d: dev macro-F1 %.4f over %d items", seed, report.macro_f1, report.n)
    payload = {
        "base_model_id": cfg.base_model_id,
        "labels": labels,
        "seeds": {
            str(seed): {
                "macro_f1": rep.macro_f1,
                "per_label_f1": {str(c): f for c, f in rep.per_label_f1.items()},
                "n": rep.n,
            }
            for seed, rep in result.reports.items()
        },
        "aggregate_macro_f1": result.aggregate,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result
