"""Agreement and classification metrics.

Krippendorff's alpha uses the coincidence-matrix formulation for nominal
data, so units with missing annotators are handled exactly rather than by
dropping incomplete units. F1 follows the usual single-label multi-class
conventions, with 0/0 cases defined as 0.
"""

from __future__ import annotations

import logging
import statistics
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Sequence

from .capschema import MIX, CapLabel, FinalLabel

logger = logging.getLogger(__name__)


class MetricsError(Exception):
    """Base class for metric computation failures."""


class InsufficientData(MetricsError):
    """Not enough pairable data to compute the requested statistic."""


class LengthMismatch(MetricsError):
    """Gold and prediction sequences differ in length."""


class UnknownLabel(MetricsError):
    """A label outside the configured label list was scored."""


class EmptyMatrix(MetricsError):
    """A confusion matrix with no scored items cannot be summarised."""


@dataclass
class ReliabilityData:
    """Units of annotation, each mapping annotator id to an assigned value.

    Values can be anything hashable; AnnotatorLabel works as-is, with
    do_not_know acting as its own nominal category. Missing values are
    simply absent keys (or None, dropped by :meth:`from_table`).
    """

    units: list[dict[str, Hashable]]

    def __post_init__(self) -> None:
        if not self.units:
            raise InsufficientData("reliability data needs at least one unit")

    @classmethod
    def from_table(
        cls, table: Mapping[str, Mapping[str, Hashable]]
    ) -> "ReliabilityData":
        """Build from annotator -> unit_id -> value, aligning on unit ids."""
        unit_ids = sorted({uid for per in table.values() for uid in per})
        if not unit_ids:
            raise InsufficientData("no annotated units")
        units = []
        for uid in unit_ids:
            record = {
                annotator: per[uid]
                for annotator, per in table.items()
                if uid in per and per[uid] is not None
            }
            units.append(record)
        return cls(units)


@dataclass(frozen=True)
class AlphaResult:
    """Alpha plus the context needed to interpret it."""

    alpha: float
    no_variation: bool
    pairable_units: int
    total_values: int


def alpha_details(data: ReliabilityData) -> AlphaResult:
    """Nominal Krippendorff's alpha with diagnostics.

    Computed from per-unit value counts: a unit with m values and count
    c_v of value v contributes c_v(c_v - 1)/(m - 1) agreement mass, and
    its marginal contribution is just c_v. Exact rational arithmetic is
    used so results are reproducible to the last bit.
    """
    agreeing = Fraction(0)
    marginals: Counter = Counter()
    pairable = 0
    for unit in data.units:
        values = [v for v in unit.values() if v is not None]
        m = len(values)
        if m < 2:
            continue
        pairable += 1
        counts = Counter(values)
        for value, c in counts.items():
            agreeing += Fraction(c * (c - 1), m - 1)
            marginals[value] += c
    n = sum(marginals.values())
    if pairable == 0:
        raise InsufficientData("no unit has two or more values")
    expected_agreeing = Fraction(
        sum(n_c * (n_c - 1) for n_c in marginals.values()), n * (n - 1)
    )
    if expected_agreeing == 1:
        # single category everywhere: D_e = 0, agreement is perfect by
        # construction, so alpha is 1.0 by convention
        logger.warning("alpha: no variation in the data, returning 1.0 by convention")
        return AlphaResult(1.0, True, pairable, n)
    d_o = 1 - Fraction(agreeing, n)
    d_e = 1 - expected_agreeing
    alpha = float(1 - d_o / d_e)
    return AlphaResult(alpha, False, pairable, n)


def krippendorff_alpha_nominal(data: ReliabilityData) -> float:
    return alpha_details(data).alpha


def pairwise_agreement(
    annotations: Mapping[str, Mapping[str, Hashable]],
) -> list[tuple[tuple[str, str], float]]:
    """Alpha for every annotator pair over the units both labeled.

    do_not_know counts as a distinct nominal category here. Pairs with no
    pairable overlap are omitted with a warning rather than failing the
    whole report. Result is sorted by alpha descending, then pair name.
    """
    names = sorted(annotations)
    if len(names) < 2:
        raise InsufficientData("pairwise agreement needs at least two annotators")
    results = []
    for i, first in enumerate(names):
        for second in names[i + 1 :]:
            shared = sorted(set(annotations[first]) & set(annotations[second]))
            units = [
                {first: annotations[first][uid], second: annotations[second][uid]}
                for uid in shared
            ]
            if not units:
                logger.warning("agreement pair (%s, %s): no shared units, skipped", first, second)
                continue
            try:
                result = alpha_details(ReliabilityData(units))
            except InsufficientData:
                logger.warning("agreement pair (%s, %s): no pairable units, skipped", first, second)
                continue
            results.append(((first, second), result.alpha))
    results.sort(key=lambda item: (-item[1], item[0]))
    return results


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are gold labels, columns are predictions.

    When ``mix_column`` is set the final column counts Mix predictions;
    gold labels are never Mix, so there is no Mix row.
    """

    labels: tuple[CapLabel, ...]
    counts: tuple[tuple[int, ...], ...]
    mix_column: bool = False

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def scored_total(self) -> int:
        """Item count inside the label-by-label block (Mix column excluded)."""
        width = len(self.labels)
        return sum(sum(row[:width]) for row in self.counts)

    def row_sums(self) -> dict[CapLabel, int]:
        return {lab: sum(row) for lab, row in zip(self.labels, self.counts)}

    def column_sums(self) -> dict[CapLabel, int]:
        return {
            lab: sum(row[j] for row in self.counts)
            for j, lab in enumerate(self.labels)
        }

    def write_tsv(self, out) -> None:
        header = ["gold"] + [lab.name for lab in self.labels]
        if self.mix_column:
            header.append(MIX.display)
        out.write("\t".join(header) + "\n")
        for lab, row in zip(self.labels, self.counts):
            out.write("\t".join([lab.name] + [str(c) for c in row]) + "\n")


def confusion(
    gold: Sequence[CapLabel],
    pred: Sequence[FinalLabel | CapLabel],
    labels: Sequence[CapLabel],
    include_mix: bool = False,
) -> ConfusionMatrix:
    """Count gold/prediction co-occurrences over an ordered label list.

    Predictions may be FinalLabel or bare CapLabel. Mix predictions go to
    a dedicated trailing column when ``include_mix`` is set; otherwise a
    Mix prediction means the caller forgot to filter, which is an error.
    """
    if len(gold) != len(pred):
        raise LengthMismatch(f"gold has {len(gold)} items, predictions {len(pred)}")
    index = {lab: i for i, lab in enumerate(labels)}
    width = len(labels) + (1 if include_mix else 0)
    rows = [[0] * width for _ in labels]
    for g, p in zip(gold, pred):
        if g not in index:
            raise UnknownLabel(f"gold label {g!r} not in label list")
        if isinstance(p, FinalLabel):
            cap = p.cap if p.kind == "cap" else None
        else:
            cap = p
        if cap is None:
            if not include_mix:
                raise UnknownLabel(
                    "Mix prediction scored without include_mix; filter upstream or set the flag"
                )
            col = len(labels)
        else:
            if cap not in index:
                raise UnknownLabel(f"predicted label {cap!r} not in label list")
            col = index[cap]
        rows[index[g]][col] += 1
    return ConfusionMatrix(
        labels=tuple(labels),
        counts=tuple(tuple(row) for row in rows),
        mix_column=include_mix,
    )


@dataclass(frozen=True)
class EvalReport:
    per_label_f1: dict[CapLabel, float]
    macro_f1: float
    micro_f1: float
    accuracy: float
    n: int


def f1_from_confusion(cm: ConfusionMatrix) -> EvalReport:
    """Per-label, macro, and micro F1 plus accuracy from a confusion matrix.

    Scoring covers the label-by-label block only; mass in a Mix column is
    excluded (and logged), since Mix is an abstention, not a class. Macro
    averages over the full label list, zero-support labels included.
    """
    width = len(cm.labels)
    scored = cm.scored_total()
    if scored == 0:
        raise EmptyMatrix("confusion matrix has no scored items")
    excluded = cm.total() - scored
    if excluded:
        logger.info("f1: excluding %d Mix predictions from scoring", excluded)
    per_label: dict[CapLabel, float] = {}
    tp_total = 0
    for i, lab in enumerate(cm.labels):
        tp = cm.counts[i][i]
        fp = sum(cm.counts[r][i] for r in range(width)) - tp
        fn = sum(cm.counts[i][:width]) - tp
        denom = 2 * tp + fp + fn
        per_label[lab] = (2 * tp / denom) if denom else 0.0
        tp_total += tp
    macro = sum(per_label.values()) / width
    # pooled FP and FN are both (scored - TP) in single-label scoring, so
    # micro-F1 reduces to accuracy
    micro = tp_total / scored
    return EvalReport(
        per_label_f1=per_label,
        macro_f1=macro,
        micro_f1=micro,
        accuracy=tp_total / scored,
        n=scored,
    )


@dataclass(frozen=True)
class RunAggregate:
    mean: float
    half_range_or_sd: float
    runs: int

    def render(self) -> str:
        return f"{self.mean:.2f}±{self.half_range_or_sd:.2f}"

    def __str__(self) -> str:
        return self.render()


def aggregate_runs(values: Iterable[float]) -> RunAggregate:
    """Mean and sample standard deviation over repeated runs."""
    vals = list(values)
    if not vals:
        raise ValueError("aggregate_runs needs at least one value")
    mean = statistics.fmean(vals)
    sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return RunAggregate(mean=mean, half_range_or_sd=sd, runs=len(vals))
