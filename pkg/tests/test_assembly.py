import datetime as dt
from pathlib import Path

import pytest

from capflow.assembly import (
    DatasetConsistencyError,
    EnrichedSpeech,
    JoinMissReport,
    JoinTable,
    NoSentences,
    SentimentCuts,
    UnsortedInput,
    aggregate_speech_sentiment,
    emit_dataset,
    enrich,
    join_external_ids,
    parse_enriched,
    sample_partyfacts_table,
    sample_vdem_table,
)
from capflow.capschema import MIX, FinalLabel, label_from_code
from capflow.corpus import Sentiment3
from synthdata import make_sentences, make_speech

HEALTH = FinalLabel(kind="cap", cap=label_from_code(3))


def sent(score, speech_id="s1", index=0):
    from capflow.corpus import SentenceSentiment

    if score < 2.5:
        label3 = Sentiment3.NEGATIVE
    elif score > 3.5:
        label3 = Sentiment3.POSITIVE
    else:
        label3 = Sentiment3.NEUTRAL
    return SentenceSentiment(
        speech_id=speech_id,
        sentence_index=index,
        sentence_text=f"sentence {index}",
        score=score,
        label3=label3,
    )


class TestAggregate:
    def test_boundary_mean_is_neutral(self):
        mean, label = aggregate_speech_sentiment([sent(2.0), sent(3.0, index=1)])
        assert mean == 2.5
        assert label is Sentiment3.NEUTRAL

    def test_low_mean_is_negative(self):
        mean, label = aggregate_speech_sentiment(
            [sent(1.0), sent(1.5, index=1), sent(2.0, index=2)]
        )
        assert mean == 1.5
        assert label is Sentiment3.NEGATIVE

    def test_single_high_sentence_is_positive(self):
        mean, label = aggregate_speech_sentiment([sent(5.0)])
        assert mean == 5.0
        assert label is Sentiment3.POSITIVE

    def test_upper_boundary_is_neutral(self):
        _, label = aggregate_speech_sentiment([sent(3.5)])
        assert label is Sentiment3.NEUTRAL

    def test_custom_cuts(self):
        wide = SentimentCuts(negative_below=1.0, positive_above=4.5)
        _, label = aggregate_speech_sentiment([sent(1.2), sent(2.0, index=1)], wide)
        assert label is Sentiment3.NEUTRAL
        _, label = aggregate_speech_sentiment([sent(4.8)], wide)
        assert label is Sentiment3.POSITIVE

    def test_empty_raises(self):
        with pytest.raises(NoSentences):
            aggregate_speech_sentiment([])

    def test_crossed_cuts_rejected(self):
        with pytest.raises(ValueError):
            SentimentCuts(negative_below=4.0, positive_above=3.0)


def enriched(i=0, parliament="AT", **overrides):
    base = dict(
        id=f"{parliament}-{i:06d}",
        parliament=parliament,
        date=dt.date(2019, 3, 14),
        speaker_id="sp1",
        speaker_name="Ana Kovač",
        speaker_gender=make_speech(parliament, i).speaker_gender,
        speaker_role=make_speech(parliament, i).speaker_role,
        party_id="p1",
        party_name="Unity Party",
        party_status="Coalition",
        topic=HEALTH,
        topic_confidence=0.9,
        text="besedilo",
        text_en="text",
    )
    base.update(overrides)
    return EnrichedSpeech(**base)


class TestEnrichedSpeech:
    def test_sentiment_fields_must_travel_together(self):
        with pytest.raises(ValueError):
            enriched(sentiment_label=Sentiment3.NEUTRAL)
        with pytest.raises(ValueError):
            enriched(sentiment_score_mean=3.0)

    def test_confidence_range(self):
        with pytest.raises(ValueError):
            enriched(topic_confidence=1.5)

    def test_topic_type_checked(self):
        with pytest.raises(TypeError):
            enriched(topic=label_from_code(3))

    def test_mean_range(self):
        with pytest.raises(ValueError):
            enriched(sentiment_label=Sentiment3.POSITIVE, sentiment_score_mean=6.0)

    def test_year_property(self):
        assert enriched().year == 2019


class TestEnrich:
    def test_without_sentences(self):
        speech = make_speech("AT", 1)
        row = enrich(speech, HEALTH, 0.8)
        assert row.id == speech.id
        assert row.topic == HEALTH
        assert row.sentiment_label is None
        assert row.sentiment_score_mean is None
        assert row.text == speech.text

    def test_with_sentences_matches_aggregate(self):
        speech = make_speech("AT", 2)
        sentences = make_sentences(speech)
        row = enrich(speech, MIX, 0.1, sentences)
        mean, label = aggregate_speech_sentiment(sentences)
        assert row.sentiment_score_mean == mean
        assert row.sentiment_label is label


class TestJoinTable:
    def test_from_tsv_with_header(self):
        table = JoinTable.from_tsv(["key\tvalue", "p1\t100", "p2\t200"])
        assert table.get("p1") == "100"
        assert table.get("p9") is None
        assert table.get(None) is None

    def test_headerless(self):
        table = JoinTable.from_tsv(["p1\t100"])
        assert table.mapping == {"p1": "100"}

    def test_duplicate_key_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            JoinTable.from_tsv(["p1\t100", "p1\t200"])

    def test_wrong_column_count_rejected(self):
        with pytest.raises(ValueError, match="2 columns"):
            JoinTable.from_tsv(["p1\t100\textra"])

    def test_bundled_tables_load(self):
        pf = sample_partyfacts_table()
        vd = sample_vdem_table()
        assert len(pf.mapping) >= 5
        assert vd.get("AT") is not None


class TestJoin:
    def test_misses_counted(self):
        partyfacts = JoinTable({"p1": "1001", "p2": "1002", "p3": "1003"})
        vdem = JoinTable({"AT": "144"})
        misses = JoinMissReport()
        rows = []
        for i in range(10):
            party = f"p{i}" if i else None
            row = enriched(i, party_id=party)
            rows.append(join_external_ids(row, partyfacts, vdem, misses))
        assert misses.total == 10
        # p1..p3 hit; p4..p9 and the None party miss
        assert misses.partyfacts_misses == 7
        assert misses.vdem_misses == 0
        assert rows[1].partyfacts_id == "1001"
        assert rows[4].partyfacts_id is None
        assert all(r.vdem_country_id == "144" for r in rows)

    def test_vdem_miss(self):
        misses = JoinMissReport()
        row = join_external_ids(enriched(), None, JoinTable({"HR": "154"}), misses)
        assert row.vdem_country_id is None
        assert misses.vdem_misses == 1

    def test_no_tables_is_identity(self):
        row = enriched()
        assert join_external_ids(row) == row


def fixture_rows(parliament="AT", n=50):
    """Deterministic enriched speeches plus the matching sentence stream."""
    speeches = []
    sentences = []
    codes = [3, 6, 21, 0, 16]
    for i in range(n):
        speech = make_speech(parliament, i)
        topic = (
            MIX
            if i % 10 == 9
            else FinalLabel(kind="cap", cap=label_from_code(codes[i % 5]))
        )
        confidence = 0.0 if i % 10 == 9 else round(0.6 + (i % 4) * 0.1, 2)
        group = make_sentences(speech) if i % 2 == 0 else None
        speeches.append(enrich(speech, topic, confidence, group))
        if group:
            sentences.extend(group)
    return speeches, sentences


class TestEmitDataset:
    def test_manifest_counts_and_sizes(self, tmp_path):
        speeches, sentences = fixture_rows()
        manifest = emit_dataset("AT", speeches, sentences, tmp_path)
        files = manifest["files"]
        assert manifest["parliament"] == "AT"
        assert files["AT_speeches_text.tsv"]["rows"] == 50
        assert files["AT_speeches.tsv"]["rows"] == 50
        assert files["AT_sentences.tsv"]["rows"] == len(sentences)
        for name, info in files.items():
            assert (tmp_path / name).stat().st_size == info["bytes"]

    def test_no_text_file_strictly_smaller(self, tmp_path):
        speeches, sentences = fixture_rows()
        emit_dataset("AT", speeches, sentences, tmp_path)
        with_text = (tmp_path / "AT_speeches_text.tsv").stat().st_size
        no_text = (tmp_path / "AT_speeches.tsv").stat().st_size
        assert no_text < with_text

    def test_round_trip_with_text(self, tmp_path):
        speeches, sentences = fixture_rows()
        emit_dataset("AT", speeches, sentences, tmp_path)
        with open(tmp_path / "AT_speeches_text.tsv", encoding="utf-8") as fh:
            back = list(parse_enriched(fh))
        assert back == speeches

    def test_no_text_rows_drop_only_text(self, tmp_path):
        import dataclasses

        speeches, sentences = fixture_rows()
        emit_dataset("AT", speeches, sentences, tmp_path)
        with open(tmp_path / "AT_speeches.tsv", encoding="utf-8") as fh:
            back = list(parse_enriched(fh))
        stripped = [
            dataclasses.replace(s, text=None, text_en=None) for s in speeches
        ]
        assert back == stripped

    def test_sentence_file_round_trips(self, tmp_path):
        from capflow.corpus import parse_sentence_sentiments

        speeches, sentences = fixture_rows()
        emit_dataset("AT", speeches, sentences, tmp_path)
        with open(tmp_path / "AT_sentences.tsv", encoding="utf-8") as fh:
            back = list(parse_sentence_sentiments(fh))
        assert back == sentences

    def test_reruns_are_byte_identical(self, tmp_path):
        speeches, sentences = fixture_rows()
        emit_dataset("AT", speeches, sentences, tmp_path / "a")
        emit_dataset("AT", speeches, sentences, tmp_path / "b")
        for name in ["AT_speeches_text.tsv", "AT_speeches.tsv", "AT_sentences.tsv"]:
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_empty_streams_leave_headers(self, tmp_path):
        manifest = emit_dataset("AT", [], [], tmp_path)
        assert all(info["rows"] == 0 for info in manifest["files"].values())
        lines = (tmp_path / "AT_speeches_text.tsv").read_text().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("id\t")

    def test_escaping_survives(self, tmp_path):
        row = enriched(
            0,
            text="line one\nline two\ttabbed",
            text_en="ok",
            party_name="Name\\with backslash",
        )
        emit_dataset("AT", [row], [], tmp_path)
        with open(tmp_path / "AT_speeches_text.tsv", encoding="utf-8") as fh:
            back = list(parse_enriched(fh))
        assert back == [row]

    def test_unsorted_speeches_rejected(self, tmp_path):
        rows = [enriched(2), enriched(1)]
        with pytest.raises(UnsortedInput):
            emit_dataset("AT", rows, [], tmp_path)

    def test_duplicate_speech_id_rejected(self, tmp_path):
        rows = [enriched(1), enriched(1)]
        with pytest.raises(UnsortedInput):
            emit_dataset("AT", rows, [], tmp_path)

    def test_unsorted_sentences_rejected(self, tmp_path):
        speech = make_speech("AT", 0)
        group = make_sentences(speech)[:1] * 2
        row = enrich(speech, HEALTH, 0.9, group)
        with pytest.raises(UnsortedInput):
            emit_dataset("AT", [row], group, tmp_path)

    def test_orphan_sentences_rejected(self, tmp_path):
        speeches, _ = fixture_rows(n=2)
        stray = [sent(3.0, speech_id="ZZ-999999")]
        speeches = [s for s in speeches if s.sentiment_label is None]
        with pytest.raises(DatasetConsistencyError):
            emit_dataset("AT", speeches, stray, tmp_path)

    def test_sentiment_without_sentences_rejected(self, tmp_path):
        speech = make_speech("AT", 0)
        row = enrich(speech, HEALTH, 0.9, make_sentences(speech))
        with pytest.raises(DatasetConsistencyError):
            emit_dataset("AT", [row], [], tmp_path)

    def test_sentences_without_sentiment_rejected(self, tmp_path):
        speech = make_speech("AT", 0)
        row = enrich(speech, HEALTH, 0.9)
        with pytest.raises(DatasetConsistencyError):
            emit_dataset("AT", [row], make_sentences(speech), tmp_path)

    def test_foreign_parliament_rejected(self, tmp_path):
        with pytest.raises(DatasetConsistencyError):
            emit_dataset("AT", [enriched(0, parliament="HR")], [], tmp_path)

    def test_failure_leaves_no_files(self, tmp_path):
        rows = [enriched(2), enriched(1)]
        out = tmp_path / "out"
        with pytest.raises(UnsortedInput):
            emit_dataset("AT", rows, [], out)
        assert list(out.iterdir()) == []

    def test_parse_rejects_alien_header(self):
        with pytest.raises(ValueError, match="header"):
            list(parse_enriched(["id\tsurprise\n"]))
