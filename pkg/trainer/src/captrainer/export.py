"""Offline bulk prediction to a predictions-tsv file.

The output is what the serving path would produce for the same speeches
with no confidence threshold applied: raw label codes and confidences,
one row per input, header ``speech_id	label_code	confidence``.
"""

import logging
from pathlib import Path

import torch

from .data import read_speeches
from .model import load_artifact, predict_batch
from .schema import IOFailure

logger = logging.getLogger(__name__)

PREDICTION_HEADER = "speech_id\tlabel_code\tconfidence"


def export_predictions(
    artifact_dir: str | Path,
    speeches_path: str | Path,
    out_path: str | Path,
    batch_size: int = 64,
) -> int:
    """Classify every speech in the file; returns the row count.

    Empty input produces a header-only file. Anything unwritable or
    unreadable raises IOFailure.
    """
    torch.set_num_threads(1)
    artifact = load_artifact(artifact_dir)
    count = 0
    try:
        out = open(out_path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise IOFailure(f"cannot write {out_path}: {exc}") from exc
    with out:
        out.write(PREDICTION_HEADER + "\n")
        batch: list[tuple[str, str]] = []

        def flush() -> int:
            got = predict_batch(artifact, [text for _, text in batch])
            for (speech_id, _), (code, confidence) in zip(batch, got):
                out.write(f"{speech_id}\t{code}\t{confidence}\n")
            n = len(batch)
            batch.clear()
            return n

        for row in read_speeches(speeches_path):
            batch.append((row.id, row.text))
            if len(batch) >= batch_size:
                count += flush()
        if batch:
            count += flush()
    logger.info("exported %d predictions to %s", count, out_path)
    return count
