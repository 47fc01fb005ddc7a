"""Model construction, artifacts, and batched prediction.

Two model kinds exist. The builtin ``tiny-hash-encoder-v1`` is a small
transformer encoder over hash-bucketed word ids: no vocabulary files, no
downloads, fully seed-deterministic, good enough to learn keyword-marked
classes. Any other base_model_id is treated as a ``transformers``
checkpoint (a local directory works offline); that path exists so a real
multilingual encoder can be dropped in on hardware that has one.

Artifact directory layout (one per seed):

    seed_<seed>/
        config.json   model kind, label list, dims, max_sequence_length
        weights.pt    state dict (builtin kind)
        hf/           saved checkpoint (transformers kind)
"""

import json
import re
from dataclasses import dataclass
from hashlib import blake2b
from pathlib import Path

import torch
from torch import nn

from .schema import ModelUnavailable

BUILTIN_MODEL_ID = "tiny-hash-encoder-v1"

_WORD = re.compile(r"[^\W_]+", re.UNICODE)


class HashTokenizer:
    """Words to stable hash buckets; id 0 is padding.

    Case-folded word tokens are mapped to 1..vocab_size-1 by a keyed
    blake2b digest, so any language tokenizes without a vocabulary file.
    Texts longer than max_len keep their first max_len tokens (tail
    truncation).
    """

    def __init__(self, vocab_size: int = 8192):
        self.vocab_size = vocab_size

    def encode(self, text: str, max_len: int) -> list[int]:
        ids = []
        for match in _WORD.finditer(text.lower()):
            digest = blake2b(match.group().encode("utf-8"), digest_size=8).digest()
            ids.append(1 + int.from_bytes(digest, "big") % (self.vocab_size - 1))
            if len(ids) >= max_len:
                break
        return ids


class TinyEncoder(nn.Module):
    """Two-layer transformer encoder with mean pooling and a linear head."""

    def __init__(
        self,
        vocab_size: int,
        num_labels: int,
        max_len: int,
        d_model: int = 64,
        nhead: int = 4,
        layers: int = 2,
        ff: int = 128,
    ):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, d_model, padding_idx=0)
        self.pos = nn.Embedding(max_len, d_model)
        layer = nn.TransformerEncoderLayer(
            d_model, nhead, ff, dropout=0.1, batch_first=True
        )
        # the nested-tensor fast path is prototype-stage and numerically
        # shape-dependent; plain dense attention keeps runs comparable
        self.encoder = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.head = nn.Linear(d_model, num_labels)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.embed(ids) + self.pos(positions)
        x = self.encoder(x, src_key_padding_mask=~mask)
        denom = mask.sum(dim=1, keepdim=True).clamp(min=1)
        pooled = (x * mask.unsqueeze(-1)).sum(dim=1) / denom
        return self.head(pooled)


@dataclass
class Artifact:
    """A loaded model plus everything needed to run it."""

    kind: str
    labels: list[int]
    max_len: int
    model: nn.Module
    tokenizer: object
    config: dict

    @property
    def num_labels(self) -> int:
        return len(self.labels)


def encode_batch(
    tokenizer: HashTokenizer, texts: list[str], max_len: int
) -> tuple[torch.Tensor, torch.Tensor]:
    encoded = [tokenizer.encode(t, max_len) or [0] for t in texts]
    width = max(len(e) for e in encoded)
    ids = torch.zeros((len(encoded), width), dtype=torch.long)
    mask = torch.zeros((len(encoded), width), dtype=torch.bool)
    for i, row in enumerate(encoded):
        ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        mask[i, : len(row)] = True
    return ids, mask


def build_builtin(num_labels: int, max_len: int, vocab_size: int = 8192) -> TinyEncoder:
    return TinyEncoder(vocab_size, num_labels, max_len)


def save_artifact(
    out_dir: str | Path,
    model: nn.Module,
    kind: str,
    labels: list[int],
    max_len: int,
    base_model_id: str,
    seed: int,
    vocab_size: int = 8192,
    tokenizer=None,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "kind": kind,
        "base_model_id": base_model_id,
        "labels": labels,
        "max_sequence_length": max_len,
        "seed": seed,
        "vocab_size": vocab_size,
    }
    if kind == "builtin":
        torch.save(model.state_dict(), out / "weights.pt")
    else:
        model.save_pretrained(out / "hf")
        tokenizer.save_pretrained(out / "hf")
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_artifact(artifact_dir: str | Path) -> Artifact:
    path = Path(artifact_dir)
    try:
        with open(path / "config.json", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ModelUnavailable(f"no artifact at {path}: {exc}") from exc
    labels = [int(c) for c in config["labels"]]
    max_len = int(config["max_sequence_length"])
    if config["kind"] == "builtin":
        model = build_builtin(len(labels), max_len, int(config["vocab_size"]))
        state = torch.load(path / "weights.pt", map_location="cpu", weights_only=True)
        model.load_state_dict(state)
        model.eval()
        tokenizer = HashTokenizer(int(config["vocab_size"]))
    else:
        model, tokenizer = _load_hf(str(path / "hf"), len(labels))
        model.eval()
    return Artifact(
        kind=config["kind"],
        labels=labels,
        max_len=max_len,
        model=model,
        tokenizer=tokenizer,
        config=config,
    )


@torch.no_grad()
def predict_batch(
    artifact: Artifact, texts: list[str]
) -> list[tuple[int, float]]:
    """(label_code, confidence) per text; confidence is the max softmax.

    Each text gets its own forward pass on purpose: padded-batch kernels
    reorder float reductions, so batching would make the line-by-line
    serving path and the bulk export path disagree in the last bits. At
    this model size per-item inference is cheap and the three paths stay
    exactly equivalent.
    """
    forward = logits_fn(
        artifact.kind, artifact.model, artifact.tokenizer, artifact.max_len
    )
    out = []
    for text in texts:
        probs = torch.softmax(forward([text])[0], dim=-1)
        conf, idx = probs.max(dim=-1)
        out.append((artifact.labels[int(idx)], float(conf)))
    return out


def _require_transformers():
    try:
        import transformers
    except ImportError as exc:
        raise ModelUnavailable(
            "base_model_id is not the builtin encoder and the transformers "
            "package is not installed; install captrainer[hf] or use "
            f"{BUILTIN_MODEL_ID!r}"
        ) from exc
    return transformers


def _hf_tokenizer(model_id: str):
    transformers = _require_transformers()
    try:
        return transformers.AutoTokenizer.from_pretrained(model_id)
    except Exception as exc:
        raise ModelUnavailable(f"cannot load tokenizer for {model_id!r}: {exc}") from exc


def _load_hf(model_id: str, num_labels: int):
    """A transformers checkpoint (hub name or local directory) plus tokenizer."""
    transformers = _require_transformers()
    try:
        model = transformers.AutoModelForSequenceClassification.from_pretrained(
            model_id, num_labels=num_labels, ignore_mismatched_sizes=True
        )
    except Exception as exc:
        raise ModelUnavailable(f"cannot load model {model_id!r}: {exc}") from exc
    return model, _hf_tokenizer(model_id)


def logits_fn(kind: str, model, tokenizer, max_len: int):
    """A texts -> logits closure; shared by the train loop and inference."""
    if kind == "builtin":

        def run(texts: list[str]) -> torch.Tensor:
            ids, mask = encode_batch(tokenizer, texts, max_len)
            return model(ids, mask)

    else:

        def run(texts: list[str]) -> torch.Tensor:
            batch = tokenizer(
                texts,
                truncation=True,
                max_length=max_len,
                padding=True,
                return_tensors="pt",
            )
            return model(**batch).logits

    return run
