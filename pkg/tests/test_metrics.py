import math
import random

import pytest
from oracles import alpha_nominal_bruteforce, f1_scores_bruteforce, items_from_matrix

from capflow.capschema import (
    DO_NOT_KNOW,
    MIX,
    AnnotatorLabel,
    CapLabel,
    FinalLabel,
    default_schema,
    label_from_code,
)
from capflow.metrics import (
    AlphaResult,
    ConfusionMatrix,
    EmptyMatrix,
    EvalReport,
    InsufficientData,
    LengthMismatch,
    ReliabilityData,
    UnknownLabel,
    aggregate_runs,
    alpha_details,
    confusion,
    f1_from_confusion,
    krippendorff_alpha_nominal,
    pairwise_agreement,
)


def units_from_lists(rows):
    return ReliabilityData(
        [{f"a{i}": v for i, v in enumerate(row)} for row in rows]
    )


class TestAlpha:
    def test_perfect_agreement(self):
        rows = [[i % 3, i % 3] for i in range(10)]
        result = alpha_details(units_from_lists(rows))
        assert result.alpha == 1.0
        assert not result.no_variation

    def test_two_coder_fixture_frozen(self):
        # coincidence matrix has o_aa = o_bb = o_ab = o_ba = 2, so
        # D_o = 1/2, D_e = 4/7, alpha = 1/8 exactly
        rows = [["a", "a"], ["a", "b"], ["b", "b"], ["b", "a"]]
        alpha = krippendorff_alpha_nominal(units_from_lists(rows))
        assert alpha == pytest.approx(0.125, abs=1e-12)
        assert alpha == pytest.approx(alpha_nominal_bruteforce(rows), abs=1e-12)

    def test_three_coder_missing_fixture_frozen(self):
        # D_o = 5/14 and D_e = 5/7, so alpha = 1/2 exactly
        rows = [
            [1, 1, 1],
            [1, 2, 2],
            [2, 2],
            [1],
            [3, 3, 3],
            [3, 2, 1],
        ]
        alpha = krippendorff_alpha_nominal(units_from_lists(rows))
        assert alpha == pytest.approx(0.5, abs=1e-12)
        assert alpha == pytest.approx(alpha_nominal_bruteforce(rows), abs=1e-12)

    def test_no_variation_flag(self):
        rows = [["x", "x"], ["x", "x", "x"]]
        result = alpha_details(units_from_lists(rows))
        assert result.alpha == 1.0
        assert result.no_variation
        assert alpha_nominal_bruteforce(rows) == 1.0

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            krippendorff_alpha_nominal(units_from_lists([["a"], ["b"]]))
        with pytest.raises(InsufficientData):
            ReliabilityData([])

    def test_skips_unpairable_units(self):
        base = [["a", "b"], ["a", "a"]]
        padded = base + [["c"]] * 5
        assert krippendorff_alpha_nominal(
            units_from_lists(padded)
        ) == pytest.approx(
            krippendorff_alpha_nominal(units_from_lists(base)), abs=1e-12
        )

    def test_label_renaming_invariance(self):
        rng = random.Random(7)
        rows = [
            [rng.randrange(5) for _ in range(rng.randint(2, 4))] for _ in range(60)
        ]
        renamed = [[f"cat-{v * 13 + 2}" for v in row] for row in rows]
        a = krippendorff_alpha_nominal(units_from_lists(rows))
        b = krippendorff_alpha_nominal(units_from_lists(renamed))
        assert a == pytest.approx(b, abs=1e-12)

    def test_random_annotators_near_zero(self):
        for seed in range(5):
            rng = random.Random(seed)
            rows = [
                [rng.randrange(4), rng.randrange(4)] for _ in range(1000)
            ]
            alpha = krippendorff_alpha_nominal(units_from_lists(rows))
            assert -0.1 < alpha < 0.1

    def test_matches_oracle_on_random_data(self):
        rng = random.Random(99)
        for _ in range(30):
            rows = []
            for _ in range(rng.randint(2, 40)):
                m = rng.randint(1, 5)
                rows.append([rng.randrange(4) for _ in range(m)])
            if not any(len(r) >= 2 for r in rows):
                continue
            expected = alpha_nominal_bruteforce(rows)
            got = krippendorff_alpha_nominal(units_from_lists(rows))
            assert got == pytest.approx(expected, abs=1e-12)

    def test_from_table_aligns_units(self):
        table = {
            "ann1": {"u1": "a", "u2": "b"},
            "ann2": {"u2": "b", "u3": "a", "u1": None},
        }
        data = ReliabilityData.from_table(table)
        assert data.units == [{"ann1": "a"}, {"ann1": "b", "ann2": "b"}, {"ann2": "a"}]


class TestPairwise:
    def test_identical_annotators(self):
        per = {f"u{i}": i % 4 for i in range(20)}
        out = pairwise_agreement({"x": per, "y": dict(per)})
        assert out == [(("x", "y"), 1.0)]

    def test_programmed_pattern_matches_oracle(self):
        units = {f"u{i}": None for i in range(12)}
        a = {f"u{i}": i % 3 for i in range(12)}
        b = {f"u{i}": (i % 3 if i % 4 else 2) for i in range(12)}
        c = {f"u{i}": (0 if i < 6 else i % 3) for i in range(8)}
        out = dict(pairwise_agreement({"a": a, "b": b, "c": c}))
        for first, second in [("a", "b"), ("a", "c"), ("b", "c")]:
            left, right = (
                ({"a": a, "b": b, "c": c})[first],
                ({"a": a, "b": b, "c": c})[second],
            )
            shared = sorted(set(left) & set(right))
            rows = [[left[u], right[u]] for u in shared]
            assert out[(first, second)] == pytest.approx(
                alpha_nominal_bruteforce(rows), abs=1e-12
            )
        alphas = [v for _, v in pairwise_agreement({"a": a, "b": b, "c": c})]
        assert alphas == sorted(alphas, reverse=True)

    def test_do_not_know_is_a_category(self):
        health = AnnotatorLabel(kind="cap", cap=label_from_code(3))
        rows = {
            "p": {"u1": DO_NOT_KNOW, "u2": health, "u3": DO_NOT_KNOW},
            "q": {"u1": DO_NOT_KNOW, "u2": health, "u3": health},
        }
        ((_, alpha),) = pairwise_agreement(rows)
        expected = alpha_nominal_bruteforce(
            [["dnk", "dnk"], ["h", "h"], ["dnk", "h"]]
        )
        assert alpha == pytest.approx(expected, abs=1e-12)

    def test_disjoint_pair_omitted(self, caplog):
        rows = {
            "a": {"u1": 1, "u2": 2},
            "b": {"u1": 1, "u2": 2},
            "c": {"u9": 1},
        }
        with caplog.at_level("WARNING"):
            out = pairwise_agreement(rows)
        assert [pair for pair, _ in out] == [("a", "b")]

    def test_needs_two_annotators(self):
        with pytest.raises(InsufficientData):
            pairwise_agreement({"solo": {"u1": 1}})


LABELS_3 = (
    label_from_code(3),
    label_from_code(6),
    label_from_code(16),
)


def wrap(labels):
    return [FinalLabel(kind="cap", cap=lab) for lab in labels]


class TestConfusion:
    def test_diagonal_over_full_schema(self):
        labels = default_schema().labels
        gold = list(labels) * 2
        cm = confusion(gold, wrap(gold), labels)
        assert cm.total() == 44
        for i in range(len(labels)):
            for j in range(len(labels)):
                assert cm.counts[i][j] == (2 if i == j else 0)

    def test_hand_fixture(self):
        h, e, d = LABELS_3
        gold = [h, h, e, d, d, d]
        pred = wrap([h, e, e, d, d, h])
        cm = confusion(gold, pred, LABELS_3)
        assert cm.counts == ((1, 1, 0), (0, 1, 0), (1, 0, 2))

    def test_length_mismatch(self):
        h, e, d = LABELS_3
        with pytest.raises(LengthMismatch):
            confusion([h] * 5, wrap([h] * 4), LABELS_3)

    def test_unknown_labels(self):
        h, e, d = LABELS_3
        stray = label_from_code(9)
        with pytest.raises(UnknownLabel):
            confusion([stray], wrap([h]), LABELS_3)
        with pytest.raises(UnknownLabel):
            confusion([h], wrap([stray]), LABELS_3)

    def test_mix_requires_flag(self):
        h, e, d = LABELS_3
        with pytest.raises(UnknownLabel):
            confusion([h], [MIX], LABELS_3)
        cm = confusion([h, e], [MIX, FinalLabel(kind="cap", cap=e)], LABELS_3, include_mix=True)
        assert cm.mix_column
        assert cm.counts[0] == (0, 0, 0, 1)
        assert cm.counts[1] == (0, 1, 0, 0)

    def test_accepts_bare_cap_labels(self):
        h, e, d = LABELS_3
        cm = confusion([h, e], [h, d], LABELS_3)
        assert cm.counts == ((1, 0, 0), (0, 0, 1), (0, 0, 0))

    def test_row_and_column_sums(self):
        rng = random.Random(3)
        labels = default_schema().labels
        gold = [rng.choice(labels) for _ in range(500)]
        pred = [rng.choice(labels) for _ in range(500)]
        cm = confusion(gold, wrap(pred), labels)
        for lab in labels:
            assert cm.row_sums()[lab] == sum(1 for g in gold if g == lab)
            assert cm.column_sums()[lab] == sum(1 for p in pred if p == lab)

    def test_tsv_shape(self, tmp_path):
        h, e, d = LABELS_3
        cm = confusion([h, e], [MIX, FinalLabel(kind="cap", cap=e)], LABELS_3, include_mix=True)
        path = tmp_path / "cm.tsv"
        with open(path, "w", encoding="utf-8") as fh:
            cm.write_tsv(fh)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0].split("\t") == ["gold", h.name, e.name, d.name, "Mix"]
        assert len(lines) == 4


class TestF1:
    def test_diagonal_is_perfect(self):
        labels = default_schema().labels
        gold = list(labels) * 3
        report = f1_from_confusion(confusion(gold, wrap(gold), labels))
        assert report.macro_f1 == 1.0
        assert report.micro_f1 == 1.0
        assert report.accuracy == 1.0
        assert all(v == 1.0 for v in report.per_label_f1.values())

    def test_three_label_fixture_matches_oracle(self):
        counts = [[2, 1, 0], [0, 3, 0], [1, 0, 3]]
        gold, pred = items_from_matrix(LABELS_3, counts)
        cm = confusion(gold, wrap(pred), LABELS_3)
        assert cm.counts == tuple(tuple(r) for r in counts)
        report = f1_from_confusion(cm)
        per, macro, micro, acc = f1_scores_bruteforce(gold, pred, LABELS_3)
        for lab in LABELS_3:
            assert report.per_label_f1[lab] == pytest.approx(per[lab], abs=1e-12)
        # frozen: per-label 2/3, 6/7, 6/7; macro 50/63; micro = accuracy = 0.8
        assert report.per_label_f1[LABELS_3[0]] == pytest.approx(2 / 3, abs=1e-12)
        assert report.macro_f1 == pytest.approx(50 / 63, abs=1e-12)
        assert report.macro_f1 == pytest.approx(macro, abs=1e-12)
        assert report.micro_f1 == pytest.approx(0.8, abs=1e-12)
        assert report.accuracy == pytest.approx(acc, abs=1e-12)
        assert report.n == 10

    def test_zero_support_label_counts_in_macro(self):
        h, e, d = LABELS_3
        cm = confusion([h, h], wrap([h, h]), LABELS_3)
        report = f1_from_confusion(cm)
        assert report.per_label_f1[e] == 0.0
        assert report.per_label_f1[d] == 0.0
        assert report.macro_f1 == pytest.approx(1 / 3, abs=1e-12)

    def test_micro_equals_accuracy_randomized(self):
        labels = default_schema().labels
        for seed in range(5):
            rng = random.Random(seed)
            gold = [rng.choice(labels) for _ in range(200)]
            pred = [rng.choice(labels) for _ in range(200)]
            report = f1_from_confusion(confusion(gold, wrap(pred), labels))
            assert report.micro_f1 == report.accuracy
            _, _, micro, acc = f1_scores_bruteforce(gold, pred, labels)
            assert report.micro_f1 == pytest.approx(micro, abs=1e-12)
            assert report.accuracy == pytest.approx(acc, abs=1e-12)

    def test_macro_invariant_under_permutation(self):
        labels = list(default_schema().labels)
        rng = random.Random(11)
        gold = [rng.choice(labels) for _ in range(300)]
        pred = [rng.choice(labels) for _ in range(300)]
        mapping = dict(zip(labels, labels[1:] + labels[:1]))
        base = f1_from_confusion(confusion(gold, wrap(pred), labels))
        permuted = f1_from_confusion(
            confusion(
                [mapping[g] for g in gold],
                wrap([mapping[p] for p in pred]),
                labels,
            )
        )
        assert base.macro_f1 == pytest.approx(permuted.macro_f1, abs=1e-12)

    def test_mix_mass_excluded_from_scoring(self):
        h, e, d = LABELS_3
        gold = [h, h, e]
        pred = [FinalLabel(kind="cap", cap=h), MIX, FinalLabel(kind="cap", cap=e)]
        report = f1_from_confusion(confusion(gold, pred, LABELS_3, include_mix=True))
        assert report.n == 2
        assert report.accuracy == 1.0

    def test_empty_matrix(self):
        with pytest.raises(EmptyMatrix):
            f1_from_confusion(confusion([], [], LABELS_3))
        h, e, d = LABELS_3
        with pytest.raises(EmptyMatrix):
            f1_from_confusion(confusion([h], [MIX], LABELS_3, include_mix=True))


class TestAggregate:
    def test_constant_runs(self):
        agg = aggregate_runs([0.72, 0.72, 0.72])
        assert agg.render() == "0.72±0.00"
        assert agg.runs == 3

    def test_spread_runs_frozen(self):
        agg = aggregate_runs([0.71, 0.72, 0.73])
        assert agg.mean == pytest.approx(0.72, abs=1e-12)
        assert agg.half_range_or_sd == pytest.approx(0.01, abs=1e-12)
        assert str(agg) == "0.72±0.01"

    def test_single_value(self):
        agg = aggregate_runs([0.5])
        assert agg.render() == "0.50±0.00"
        assert agg.runs == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_runs([])
