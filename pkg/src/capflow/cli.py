"""The capflow command: one entry point, one subcommand per pipeline stage.

Every stage writes its artifacts plus a JSON manifest into its own
subdirectory of the configured output directory, and nowhere else.
Manifests carry inputs, seeds, versions, and counts but never
timestamps, so a rerun with the same config is byte-identical.

Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Iterable, Iterator

from . import __version__
from .analysis import (
    AnalysisFilter,
    filter_rows,
    gender_topic_difference,
    sentiment_by_topic,
    topic_distribution,
)
from .assembly import (
    AssemblyError,
    JoinMissReport,
    emit_dataset,
    enrich,
    join_external_ids,
    parse_enriched,
    _grouped_sentences,
)
from .capschema import SCHEMA, UnknownCode, UnknownName
from .config import ConfigError, PipelineConfig, load_config
from .corpus import CorpusError, Speech, parse_sentence_sentiments, parse_speeches, write_speeches
from .inference import (
    CoverageReport,
    ThresholdPolicy,
    batch_classify,
    read_predictions,
    write_predictions,
)
from .metrics import (
    MetricsError,
    ReliabilityData,
    confusion,
    f1_from_confusion,
    krippendorff_alpha_nominal,
    pairwise_agreement,
)
from .mining import FilterReport, MiningStats, filter_by_teacher, merge_augmentation, mine_candidates
from .sampling import InsufficientCorpus, SamplePlan, corpus_sample
from .teacher import (
    AnnotationFailure,
    CostEstimate,
    LabeledExample,
    LabelSource,
    RetryPolicy,
    annotate_batch,
    read_annotations,
    write_annotations,
)

logger = logging.getLogger("capflow")


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    """Bad inputs or bad configuration; exits with code 1."""


_VALIDATION_ERRORS = (
    UsageError,
    ValidationFailure,
    ConfigError,
    CorpusError,
    UnknownCode,
    UnknownName,
    InsufficientCorpus,
    MetricsError,
    AssemblyError,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits the process with status 2 on bad arguments; the
    # contract here reserves 2 for runtime failures
    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="capflow", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--jobs", type=int, help="worker pool size")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    sub.add_parser("sample", help="draw train/dev splits from the corpora")

    p = sub.add_parser("annotate", help="teacher-annotate a speech file")
    p.add_argument("--input", required=True, help="speech-tsv to annotate")
    p.add_argument("--name", help="output stem (default: input stem)")

    p = sub.add_parser("mine", help="augment training data by keyword mining")
    p.add_argument("--speeches", required=True, help="speech-tsv of the base train split")
    p.add_argument("--annotations", required=True, help="annotations-tsv of the base train split")

    p = sub.add_parser("agree", help="inter-annotator agreement")
    p.add_argument("files", nargs="+", help="one annotations-tsv per annotator")

    p = sub.add_parser("evaluate", help="score predictions against gold annotations")
    p.add_argument("--gold", required=True, help="annotations-tsv with gold labels")
    p.add_argument("--predictions", required=True, help="predictions-tsv to score")

    p = sub.add_parser("classify", help="run the student over a speech file")
    p.add_argument("--input", required=True, help="speech-tsv to classify")
    p.add_argument("--name", help="output stem (default: input stem)")

    p = sub.add_parser("assemble", help="build the per-parliament dataset files")
    p.add_argument("--predictions-dir", help="directory of <parl>.predictions.tsv (default: <output>/classify)")

    p = sub.add_parser("analyze", help="produce the three analysis matrices")
    p.add_argument("--dataset-dir", help="directory of assembled files (default: <output>/assemble)")

    sub.add_parser("pipeline", help="run every stage in order")
    return parser


def write_manifest(path: Path, stage: str, payload: dict) -> None:
    body = {
        "stage": stage,
        "capflow_version": __version__,
        "schema_labels": len(SCHEMA.labels),
    }
    body.update(payload)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _stage_dir(cfg: PipelineConfig, stage: str) -> Path:
    d = cfg.output_dir / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _read_speeches(path: str | Path) -> Iterator[Speech]:
    try:
        with open(path, encoding="utf-8") as fh:
            yield from parse_speeches(fh)
    except FileNotFoundError:
        raise ValidationFailure(f"no such speech file: {path}") from None
    except ValueError as exc:
        raise ValidationFailure(f"{path}: {exc}") from None


def _corpora_stream(cfg: PipelineConfig) -> Iterator[Speech]:
    for parl in cfg.parliaments():
        yield from _read_speeches(cfg.speech_file(parl))


def cmd_sample(cfg: PipelineConfig) -> dict:
    parliaments = cfg.parliaments()
    if not parliaments:
        raise ValidationFailure(f"no corpus files in {cfg.corpora_dir}")
    plan = SamplePlan(cfg.train_per_corpus, cfg.dev_per_corpus, cfg.seed)
    train, dev = corpus_sample(_corpora_stream(cfg), plan)
    out = _stage_dir(cfg, "sample")
    with open(out / "train.tsv", "w", encoding="utf-8", newline="") as fh:
        write_speeches(train, fh)
    with open(out / "dev.tsv", "w", encoding="utf-8", newline="") as fh:
        write_speeches(dev, fh)
    per_parliament = {
        p: {
            "train": sum(1 for s in train if s.parliament == p),
            "dev": sum(1 for s in dev if s.parliament == p),
        }
        for p in parliaments
    }
    manifest = {
        "inputs": {"corpora_dir": str(cfg.corpora_dir), "parliaments": parliaments},
        "seed": cfg.seed,
        "plan": {"train_per_corpus": plan.n_train_per_corpus, "dev_per_corpus": plan.n_dev_per_corpus},
        "counts": {
            "train": len(train),
            "dev": len(dev),
            "per_parliament": per_parliament,
        },
        "outputs": ["train.tsv", "dev.tsv"],
    }
    write_manifest(out / "manifest.json", "sample", manifest)
    logger.info("sample: %d train, %d dev", len(train), len(dev))
    return manifest


def _run_annotation(
    cfg: PipelineConfig, speeches: Iterable[Speech], out_tsv: Path, failures_tsv: Path
) -> dict:
    backend = cfg.build_teacher()
    cost = CostEstimate()
    policy = RetryPolicy(attempts=cfg.teacher_attempts)
    annotated = 0
    failures: list[AnnotationFailure] = []

    def outcomes() -> Iterator[LabeledExample]:
        nonlocal annotated
        for item in annotate_batch(
            speeches,
            backend,
            policy=policy,
            workers=cfg.teacher_workers,
            cost=cost,
        ):
            if isinstance(item, AnnotationFailure):
                failures.append(item)
            else:
                annotated += 1
                yield item

    with open(out_tsv, "w", encoding="utf-8", newline="") as fh:
        write_annotations(outcomes(), fh)
    with open(failures_tsv, "w", encoding="utf-8", newline="") as fh:
        fh.write("speech_id\treason\n")
        for f in failures:
            fh.write(f"{f.speech_id}\t{f.reason}\n")
    return {
        "annotated": annotated,
        "failed": len(failures),
        "estimated_tokens": cost.estimated_tokens,
    }


def cmd_annotate(cfg: PipelineConfig, input_path: str, name: str | None = None) -> dict:
    stem = name or Path(input_path).stem
    out = _stage_dir(cfg, "annotate")
    counts = _run_annotation(
        cfg,
        _read_speeches(input_path),
        out / f"{stem}.annotations.tsv",
        out / f"{stem}.failures.tsv",
    )
    manifest = {
        "inputs": {"speeches": str(input_path)},
        "teacher": {"backend": cfg.teacher_backend, "model": cfg.teacher_model},
        "counts": counts,
        "outputs": [f"{stem}.annotations.tsv", f"{stem}.failures.tsv"],
    }
    write_manifest(out / f"{stem}.manifest.json", "annotate", manifest)
    logger.info(
        "annotate %s: %d labeled, %d failed", stem, counts["annotated"], counts["failed"]
    )
    return manifest


def _load_labeled(speeches_path: str, annotations_path: str) -> tuple[list[LabeledExample], int]:
    """Join a speech file with its annotations; returns examples and DNK count."""
    by_id = {s.id: s for s in _read_speeches(speeches_path)}
    examples = []
    skipped_dnk = 0
    try:
        with open(annotations_path, encoding="utf-8") as fh:
            for row in read_annotations(fh):
                if row.label.kind == "do_not_know":
                    skipped_dnk += 1
                    continue
                speech = by_id.get(row.speech_id)
                if speech is None:
                    raise ValidationFailure(
                        f"{annotations_path}: speech {row.speech_id!r} "
                        f"not in {speeches_path}"
                    )
                examples.append(
                    LabeledExample(
                        speech=speech,
                        label=row.label.cap,
                        source=LabelSource(row.source),
                        annotator_id=row.source,
                        raw_response=row.raw_response or None,
                    )
                )
    except FileNotFoundError:
        raise ValidationFailure(f"no such annotations file: {annotations_path}") from None
    except ValueError as exc:
        raise ValidationFailure(f"{annotations_path}: {exc}") from None
    return examples, skipped_dnk


def cmd_mine(cfg: PipelineConfig, speeches_path: str, annotations_path: str) -> dict:
    base, skipped_dnk = _load_labeled(speeches_path, annotations_path)
    specs = cfg.keyword_specs()
    backend = cfg.build_teacher()
    policy = RetryPolicy(attempts=cfg.teacher_attempts)
    accepted: list[LabeledExample] = []
    per_spec = []
    for spec in specs:
        stats = MiningStats()
        candidates = mine_candidates(_corpora_stream(cfg), spec, stats)
        report = FilterReport()
        kept = filter_by_teacher(
            candidates,
            spec,
            backend,
            policy=policy,
            workers=cfg.teacher_workers,
            report=report,
        )
        accepted.extend(kept)
        per_spec.append(
            {
                "label": spec.target_label.name,
                "keywords": list(spec.keywords),
                "scanned": stats.scanned,
                "candidates": stats.candidates,
                "accepted": report.accepted,
                "rejected": report.rejected,
                "failures": report.failures,
            }
        )
        logger.info(
            "mine %s: %d candidates, %d accepted",
            spec.target_label.name,
            stats.candidates,
            report.accepted,
        )
    merged = merge_augmentation(base, accepted)
    out = _stage_dir(cfg, "mine")
    with open(out / "augmented.tsv", "w", encoding="utf-8", newline="") as fh:
        write_speeches((ex.speech for ex in merged), fh)
    with open(out / "augmented.annotations.tsv", "w", encoding="utf-8", newline="") as fh:
        write_annotations(merged, fh)
    manifest = {
        "inputs": {
            "speeches": str(speeches_path),
            "annotations": str(annotations_path),
            "corpora_dir": str(cfg.corpora_dir),
        },
        "seed": cfg.seed,
        "counts": {
            "base": len(base),
            "skipped_do_not_know": skipped_dnk,
            "accepted": len(accepted),
            # accepted candidates already in the base split don't add rows
            "added": len(merged) - len(base),
            "merged": len(merged),
        },
        "specs": per_spec,
        "outputs": ["augmented.tsv", "augmented.annotations.tsv"],
    }
    write_manifest(out / "manifest.json", "mine", manifest)
    logger.info("mine: %d base + %d accepted -> %d merged", len(base), len(accepted), len(merged))
    return manifest


def _annotation_values(path: str) -> dict:
    """unit id -> nominal value (label code, or 'DNK' as its own category)."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for row in read_annotations(fh):
                values[row.speech_id] = (
                    "DNK" if row.label.kind == "do_not_know" else row.label.cap.code
                )
    except FileNotFoundError:
        raise ValidationFailure(f"no such annotations file: {path}") from None
    except ValueError as exc:
        raise ValidationFailure(f"{path}: {exc}") from None
    return values


def cmd_agree(cfg: PipelineConfig, files: list[str]) -> dict:
    table = {}
    for path in files:
        name = Path(path).stem
        if name in table:
            raise ValidationFailure(f"two annotation files share the stem {name!r}")
        table[name] = _annotation_values(path)
    data = ReliabilityData.from_table(table)
    overall = krippendorff_alpha_nominal(data)
    pairs = pairwise_agreement(table) if len(table) > 1 else []
    out = _stage_dir(cfg, "agree")
    report = {
        "alpha": overall,
        "annotators": sorted(table),
        "units": len(data.units),
        "pairwise": [
            {"annotators": list(pair), "alpha": alpha} for pair, alpha in pairs
        ],
    }
    (out / "agreement.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    manifest = {
        "inputs": {"annotations": [str(p) for p in files]},
        "counts": {"annotators": len(table), "units": len(data.units)},
        "outputs": ["agreement.json"],
    }
    write_manifest(out / "manifest.json", "agree", manifest)
    logger.info("agree: alpha=%.4f over %d units", overall, len(data.units))
    return manifest


def cmd_evaluate(cfg: PipelineConfig, gold_path: str, pred_path: str) -> dict:
    gold_by_id = {}
    skipped_dnk = 0
    try:
        with open(gold_path, encoding="utf-8") as fh:
            for row in read_annotations(fh):
                if row.label.kind == "do_not_know":
                    skipped_dnk += 1
                    continue
                gold_by_id[row.speech_id] = row.label.cap
    except FileNotFoundError:
        raise ValidationFailure(f"no such gold file: {gold_path}") from None
    except ValueError as exc:
        raise ValidationFailure(f"{gold_path}: {exc}") from None
    pred_by_id = {}
    try:
        with open(pred_path, encoding="utf-8") as fh:
            for result in read_predictions(fh):
                pred_by_id[result.speech_id] = result.final
    except FileNotFoundError:
        raise ValidationFailure(f"no such predictions file: {pred_path}") from None
    except ValueError as exc:
        raise ValidationFailure(f"{pred_path}: {exc}") from None
    missing = [uid for uid in gold_by_id if uid not in pred_by_id]
    if missing:
        raise ValidationFailure(
            f"{len(missing)} gold ids have no prediction (first: {missing[0]!r})"
        )
    ids = sorted(gold_by_id)
    gold = [gold_by_id[i] for i in ids]
    pred = [pred_by_id[i] for i in ids]
    cm = confusion(gold, pred, SCHEMA.labels, include_mix=True)
    report = f1_from_confusion(cm)
    out = _stage_dir(cfg, "evaluate")
    with open(out / "confusion.tsv", "w", encoding="utf-8", newline="") as fh:
        cm.write_tsv(fh)
    payload = {
        "macro_f1": report.macro_f1,
        "micro_f1": report.micro_f1,
        "accuracy": report.accuracy,
        "scored": report.n,
        "per_label_f1": {lab.name: f for lab, f in report.per_label_f1.items()},
    }
    (out / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    manifest = {
        "inputs": {"gold": str(gold_path), "predictions": str(pred_path)},
        "counts": {
            "gold": len(gold_by_id),
            "skipped_do_not_know": skipped_dnk,
            "extra_predictions": len(pred_by_id) - len(gold_by_id),
            "scored": report.n,
        },
        "outputs": ["report.json", "confusion.tsv"],
    }
    write_manifest(out / "manifest.json", "evaluate", manifest)
    logger.info("evaluate: macro-F1 %.4f over %d items", report.macro_f1, report.n)
    return manifest


def cmd_classify(cfg: PipelineConfig, input_path: str, name: str | None = None) -> dict:
    stem = name or Path(input_path).stem
    out = _stage_dir(cfg, "classify")
    coverage = CoverageReport()
    student = cfg.build_student()
    try:
        results = batch_classify(
            _read_speeches(input_path),
            student,
            policy=ThresholdPolicy(cfg.tau),
            batch_size=cfg.student_batch_size,
            workers=cfg.student_workers,
            report=coverage,
        )
        with open(out / f"{stem}.predictions.tsv", "w", encoding="utf-8", newline="") as fh:
            write_predictions(results, fh)
    finally:
        student.close()
    manifest = {
        "inputs": {"speeches": str(input_path)},
        "student": {"backend": cfg.student_backend},
        "tau": cfg.tau,
        "counts": coverage.to_dict(),
        "outputs": [f"{stem}.predictions.tsv"],
    }
    write_manifest(out / f"{stem}.manifest.json", "classify", manifest)
    logger.info(
        "classify %s: %d speeches, %.3f kept", stem, coverage.total, coverage.kept_fraction
    )
    return manifest


def _enriched_stream(
    cfg: PipelineConfig,
    parliament: str,
    predictions_dir: Path,
    misses: JoinMissReport,
    partyfacts,
    vdem,
) -> Iterator:
    """Merge one parliament's speeches, predictions, and sentence groups."""
    pred_path = predictions_dir / f"{parliament}.predictions.tsv"
    if not pred_path.is_file():
        raise ValidationFailure(f"no predictions for {parliament}: {pred_path}")
    sentence_path = cfg.sentence_file(parliament)

    def groups():
        if not sentence_path.is_file():
            return
        with open(sentence_path, encoding="utf-8") as fh:
            yield from _grouped_sentences(parse_sentence_sentiments(fh))

    with open(pred_path, encoding="utf-8") as pred_fh:
        preds = read_predictions(pred_fh)
        group_iter = groups()
        pending = next(group_iter, None)
        for speech in _read_speeches(cfg.speech_file(parliament)):
            result = next(preds, None)
            if result is None or result.speech_id != speech.id:
                got = result.speech_id if result else "end of file"
                raise ValidationFailure(
                    f"{pred_path}: predictions out of step with speeches "
                    f"(speech {speech.id!r}, prediction {got!r})"
                )
            sentences = None
            if pending is not None and pending[0] == speech.id:
                sentences = pending[1]
                pending = next(group_iter, None)
            row = enrich(speech, result.final, result.confidence, sentences)
            yield join_external_ids(row, partyfacts, vdem, misses)


def cmd_assemble(cfg: PipelineConfig, predictions_dir: str | None = None) -> dict:
    parliaments = cfg.parliaments()
    if not parliaments:
        raise ValidationFailure(f"no corpus files in {cfg.corpora_dir}")
    pred_dir = Path(predictions_dir) if predictions_dir else cfg.output_dir / "classify"
    out = _stage_dir(cfg, "assemble")
    partyfacts, vdem = cfg.join_tables()
    misses = JoinMissReport()
    per_parliament = {}
    for parl in parliaments:
        def sentences(parl=parl):
            path = cfg.sentence_file(parl)
            if not path.is_file():
                return
            with open(path, encoding="utf-8") as fh:
                yield from parse_sentence_sentiments(fh)

        rows = _enriched_stream(cfg, parl, pred_dir, misses, partyfacts, vdem)
        sub_manifest = emit_dataset(parl, rows, sentences(), out)
        write_manifest(out / f"{parl}.manifest.json", "assemble", sub_manifest)
        per_parliament[parl] = sub_manifest["files"]
        logger.info(
            "assemble %s: %d speeches",
            parl,
            sub_manifest["files"][f"{parl}_speeches.tsv"]["rows"],
        )
    manifest = {
        "inputs": {
            "corpora_dir": str(cfg.corpora_dir),
            "predictions_dir": str(pred_dir),
        },
        "join_misses": {
            "total_rows": misses.total,
            "partyfacts": misses.partyfacts_misses,
            "vdem": misses.vdem_misses,
        },
        "counts": {
            "parliaments": len(parliaments),
            "speeches": sum(
                files[f"{p}_speeches.tsv"]["rows"]
                for p, files in per_parliament.items()
            ),
        },
        "files": per_parliament,
        "outputs": sorted(
            name for files in per_parliament.values() for name in files
        ),
    }
    write_manifest(out / "manifest.json", "assemble", manifest)
    return manifest


def _dataset_rows(dataset_dir: Path) -> Iterator:
    files = sorted(
        p
        for p in dataset_dir.glob("*_speeches.tsv")
        if not p.name.endswith("_speeches_text.tsv")
    )
    if not files:
        raise ValidationFailure(f"no assembled speech files in {dataset_dir}")
    for path in files:
        try:
            with open(path, encoding="utf-8") as fh:
                yield from parse_enriched(fh)
        except ValueError as exc:
            raise ValidationFailure(f"{path}: {exc}") from None


def cmd_analyze(cfg: PipelineConfig, dataset_dir: str | None = None) -> dict:
    data_dir = Path(dataset_dir) if dataset_dir else cfg.output_dir / "assemble"
    criteria = AnalysisFilter(year_min=cfg.year_min, year_max=cfg.year_max)
    out = _stage_dir(cfg, "analyze")
    dropped: Counter = Counter()
    kept = 0

    # each analysis streams the dataset once; drop reasons are tallied on
    # the first pass only so the counts stay per-row
    def filtered(count: bool) -> Iterator:
        nonlocal kept
        n = 0
        for row in filter_rows(_dataset_rows(data_dir), criteria, dropped if count else None):
            n += 1
            yield row
        if count:
            kept = n

    matrix_rows = {}
    outputs = {
        "topic_distribution.tsv": topic_distribution(filtered(True)),
        "sentiment_by_topic.tsv": sentiment_by_topic(filtered(False), dropped=dropped),
        "gender_topic_difference.tsv": gender_topic_difference(
            filtered(False), dropped=dropped
        ),
    }
    for name, matrix in outputs.items():
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            matrix.write_tsv(fh)
        matrix_rows[name] = len(matrix.parliaments)
    manifest = {
        "inputs": {"dataset_dir": str(data_dir)},
        "filter": {
            "year_min": criteria.year_min,
            "year_max": criteria.year_max,
        },
        "counts": {
            "kept": kept,
            "dropped": dict(sorted(dropped.items())),
            "matrix_rows": matrix_rows,
        },
        "outputs": sorted(outputs),
    }
    write_manifest(out / "manifest.json", "analyze", manifest)
    logger.info("analyze: %s", ", ".join(f"{k}={v}" for k, v in matrix_rows.items()))
    return manifest


def cmd_pipeline(cfg: PipelineConfig) -> dict:
    stages: dict[str, dict] = {}
    stages["sample"] = cmd_sample(cfg)
    sample_dir = cfg.output_dir / "sample"
    stages["annotate_train"] = cmd_annotate(cfg, str(sample_dir / "train.tsv"), "train")
    stages["annotate_dev"] = cmd_annotate(cfg, str(sample_dir / "dev.tsv"), "dev")
    stages["mine"] = cmd_mine(
        cfg,
        str(sample_dir / "train.tsv"),
        str(cfg.output_dir / "annotate" / "train.annotations.tsv"),
    )
    stages["classify_dev"] = cmd_classify(cfg, str(sample_dir / "dev.tsv"), "dev")
    stages["evaluate_dev"] = cmd_evaluate(
        cfg,
        str(cfg.output_dir / "annotate" / "dev.annotations.tsv"),
        str(cfg.output_dir / "classify" / "dev.predictions.tsv"),
    )
    for parl in cfg.parliaments():
        stages[f"classify_{parl}"] = cmd_classify(cfg, str(cfg.speech_file(parl)), parl)
    stages["assemble"] = cmd_assemble(cfg)
    stages["analyze"] = cmd_analyze(cfg)
    manifest = {
        "seed": cfg.seed,
        "stages": {
            name: {"counts": stage.get("counts", {})} for name, stage in stages.items()
        },
        "stage_order": list(stages),
    }
    out = _stage_dir(cfg, "pipeline")
    write_manifest(out / "manifest.json", "pipeline", manifest)
    logger.info("pipeline: %d stages complete", len(stages))
    return manifest


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"capflow: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs is not None:
            if args.jobs < 1:
                raise ValidationFailure("--jobs must be >= 1")
            cfg.teacher_workers = args.jobs
            cfg.student_workers = args.jobs
        cfg.validate(require_corpora=args.command not in ("agree", "evaluate"))
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "sample":
            cmd_sample(cfg)
        elif args.command == "annotate":
            cmd_annotate(cfg, args.input, args.name)
        elif args.command == "mine":
            cmd_mine(cfg, args.speeches, args.annotations)
        elif args.command == "agree":
            cmd_agree(cfg, args.files)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.gold, args.predictions)
        elif args.command == "classify":
            cmd_classify(cfg, args.input, args.name)
        elif args.command == "assemble":
            cmd_assemble(cfg, args.predictions_dir)
        elif args.command == "analyze":
            cmd_analyze(cfg, args.dataset_dir)
        elif args.command == "pipeline":
            cmd_pipeline(cfg)
        return 0
    except _VALIDATION_ERRORS as exc:
        logger.error("%s", exc)
        return 1
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        logger.error("runtime failure: %s", exc, exc_info=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
