import datetime as dt
import io
import random
import string
import tracemalloc

import pytest

from capflow.corpus import (
    SENTENCE_COLUMNS,
    SPEECH_COLUMNS,
    DuplicateId,
    Gender,
    MalformedRow,
    Role,
    RowErrorLog,
    ScoreOutOfRange,
    SentenceSentiment,
    Sentiment3,
    Speech,
    TooManyErrors,
    escape_field,
    parse_sentence_sentiments,
    parse_speeches,
    unescape_field,
    write_sentence_sentiments,
    write_speeches,
    write_speeches_jsonl,
)
from synthdata import make_sentences, make_speech


class TestEscaping:
    def test_round_trip_specials(self):
        cases = [
            "plain",
            "tab\there",
            "line\nbreak",
            "carriage\rreturn",
            "back\\slash",
            "\\t literal backslash-t",
            "mix\\\t\n\r\\n end",
            "",
            "trailing backslash\\",
        ]
        for value in cases:
            assert unescape_field(escape_field(value)) == value

    def test_escaped_has_no_raw_separators(self):
        escaped = escape_field("a\tb\nc")
        assert "\t" not in escaped
        assert "\n" not in escaped

    def test_random_round_trip(self):
        rng = random.Random(5)
        alphabet = string.ascii_letters + "\\\t\n\r αβ"
        for _ in range(300):
            value = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
            assert unescape_field(escape_field(value)) == value


class TestSpeech:
    def test_requires_id_and_text(self):
        with pytest.raises(ValueError):
            Speech(id="", parliament="AT", text="x", date=dt.date(2020, 1, 1))
        with pytest.raises(ValueError):
            Speech(id="a", parliament="AT", text="   ", date=dt.date(2020, 1, 1))

    def test_hash_by_id(self):
        a = make_speech("AT", 1)
        assert len({a, a}) == 1
        assert hash(a) == hash(a.id)


def round_trip_tsv(speeches):
    buf = io.StringIO()
    write_speeches(speeches, buf)
    buf.seek(0)
    return list(parse_speeches(buf))


class TestSpeechTsv:
    def test_round_trip(self):
        speeches = [make_speech("AT", i) for i in range(25)]
        assert round_trip_tsv(speeches) == speeches

    def test_round_trip_with_extras(self):
        base = make_speech("AT", 1)
        import dataclasses

        speeches = [
            dataclasses.replace(base, id=f"x{i}", extras={"term": "9", "source": "s"})
            for i in range(3)
        ]
        back = round_trip_tsv(speeches)
        assert back == speeches
        assert back[0].extras == {"source": "s", "term": "9"}

    def test_heterogeneous_extras_rejected(self):
        import dataclasses

        base = make_speech("AT", 1)
        speeches = [
            dataclasses.replace(base, id="a", extras={"term": "9"}),
            dataclasses.replace(base, id="b", extras={"other": "1"}),
        ]
        with pytest.raises(ValueError, match="extras"):
            write_speeches(speeches, io.StringIO())

    def test_empty_stream_writes_header(self):
        buf = io.StringIO()
        assert write_speeches([], buf) == 0
        assert buf.getvalue() == "\t".join(SPEECH_COLUMNS) + "\n"

    def test_fields_with_tabs_and_newlines(self):
        speech = Speech(
            id="a",
            parliament="AT",
            text="first line\nsecond\tcell",
            date=dt.date(2019, 5, 2),
            speaker_name="Name\\Backslash",
        )
        assert round_trip_tsv([speech]) == [speech]

    def test_bytes_source(self, tmp_path):
        speeches = [make_speech("AT", i) for i in range(5)]
        path = tmp_path / "s.tsv"
        with open(path, "w", encoding="utf-8") as fh:
            write_speeches(speeches, fh)
        with open(path, "rb") as fh:
            assert list(parse_speeches(fh)) == speeches

    def test_missing_header(self):
        with pytest.raises(ValueError, match="header"):
            list(parse_speeches([]))

    def test_unknown_format(self):
        with pytest.raises(ValueError, match="format"):
            list(parse_speeches(["id\n"], format="speech-csv"))


class TestColumnMap:
    def test_tsv_remap(self):
        lines = [
            "speech_identifier\tchamber\tdate\ttext\n",
            "u1\tAT\t2019-01-01\thello there\n",
        ]
        speeches = list(
            parse_speeches(
                lines,
                column_map={"speech_identifier": "id", "chamber": "parliament"},
            )
        )
        assert speeches[0].id == "u1"
        assert speeches[0].parliament == "AT"

    def test_jsonl_remap(self):
        lines = ['{"ident": "u1", "date": "2019-01-01", "text": "hello", "parliament": "AT"}\n']
        speeches = list(
            parse_speeches(lines, format="speech-jsonl", column_map={"ident": "id"})
        )
        assert speeches[0].id == "u1"


class TestEnumParsing:
    def test_gender_synonyms(self):
        lines = [
            "id\tparliament\tdate\tspeaker_gender\ttext\n",
            "a\tAT\t2019-01-01\tF\thello\n",
            "b\tAT\t2019-01-01\tmale\thello\n",
            "c\tAT\t2019-01-01\tdiv\thello\n",
        ]
        genders = [s.speaker_gender for s in parse_speeches(lines)]
        assert genders == [Gender.FEMALE, Gender.MALE, Gender.UNKNOWN]

    def test_role_synonyms(self):
        lines = [
            "id\tparliament\tdate\tspeaker_role\ttext\n",
            "a\tAT\t2019-01-01\tMP\thello\n",
            "b\tAT\t2019-01-01\tchair\thello\n",
            "c\tAT\t2019-01-01\tsomething\thello\n",
        ]
        roles = [s.speaker_role for s in parse_speeches(lines)]
        assert roles == [Role.REGULAR, Role.CHAIRPERSON, Role.UNKNOWN]


class TestMalformedRows:
    HEADER = "\t".join(SPEECH_COLUMNS) + "\n"

    def row(self, id="a", date="2019-01-01", text="hello", cols=None):
        cells = [id, "AT", date, "s", "N", "female", "regular", "p", "P", "C", "", text]
        if cols is not None:
            cells = cells[:cols]
        return "\t".join(cells) + "\n"

    def test_bad_rows_skipped_and_logged(self):
        log = RowErrorLog()
        lines = [
            self.HEADER,
            self.row(id="ok1"),
            self.row(id="bad-date", date="01.02.2019"),
            self.row(id="short", cols=3),
            self.row(id="no-text", text=" "),
            self.row(id=""),
            self.row(id="ok2"),
        ]
        speeches = list(parse_speeches(lines, error_log=log))
        assert [s.id for s in speeches] == ["ok1", "ok2"]
        assert len(log) == 4
        assert all(isinstance(e, MalformedRow) for e in log.errors)
        assert log.errors[0].line_no == 3

    def test_error_budget(self):
        log = RowErrorLog(max_errors=3)
        lines = [self.HEADER] + [self.row(id="", text="x")] * 4
        with pytest.raises(TooManyErrors):
            list(parse_speeches(lines, error_log=log))

    def test_duplicate_id_fatal(self):
        lines = [self.HEADER, self.row(id="dup"), self.row(id="dup")]
        with pytest.raises(DuplicateId, match="dup"):
            list(parse_speeches(lines))

    def test_blank_lines_skipped(self):
        lines = [self.HEADER, "\n", self.row(id="a"), "\n"]
        assert len(list(parse_speeches(lines))) == 1


class TestJsonl:
    def test_round_trip(self):
        speeches = [make_speech("HR", i) for i in range(10)]
        buf = io.StringIO()
        write_speeches_jsonl(speeches, buf)
        buf.seek(0)
        assert list(parse_speeches(buf, format="speech-jsonl")) == speeches

    def test_bad_json_logged(self):
        log = RowErrorLog()
        lines = [
            '{"id": "a", "parliament": "AT", "date": "2019-01-01", "text": "hi"}\n',
            "{not json}\n",
            '["a", "list"]\n',
        ]
        speeches = list(parse_speeches(lines, format="speech-jsonl", error_log=log))
        assert [s.id for s in speeches] == ["a"]
        assert len(log) == 2

    def test_duplicate_id_fatal(self):
        line = '{"id": "a", "parliament": "AT", "date": "2019-01-01", "text": "hi"}\n'
        with pytest.raises(DuplicateId):
            list(parse_speeches([line, line], format="speech-jsonl"))


class TestSentences:
    def test_round_trip(self):
        records = []
        for i in range(10):
            records.extend(make_sentences(make_speech("AT", i)))
        buf = io.StringIO()
        write_sentence_sentiments(records, buf)
        buf.seek(0)
        assert list(parse_sentence_sentiments(buf)) == records

    def test_score_formatting_is_compact(self):
        record = SentenceSentiment("s", 0, "t", 3.0, Sentiment3.NEUTRAL)
        buf = io.StringIO()
        write_sentence_sentiments([record], buf)
        row = buf.getvalue().splitlines()[1].split("\t")
        assert row[3] == "3"
        record = SentenceSentiment("s", 0, "t", 2.5, Sentiment3.NEUTRAL)
        buf = io.StringIO()
        write_sentence_sentiments([record], buf)
        assert buf.getvalue().splitlines()[1].split("\t")[3] == "2.5"

    def test_score_out_of_range_logged(self):
        log = RowErrorLog()
        lines = [
            "\t".join(SENTENCE_COLUMNS) + "\n",
            "s\t0\tneutral\t5.5\ttext\n",
            "s\t1\tneutral\t4.0\ttext\n",
        ]
        records = list(parse_sentence_sentiments(lines, error_log=log))
        assert len(records) == 1
        assert isinstance(log.errors[0], ScoreOutOfRange)
        assert log.errors[0].score == 5.5

    def test_bad_label_and_index_logged(self):
        log = RowErrorLog()
        lines = [
            "\t".join(SENTENCE_COLUMNS) + "\n",
            "s\t0\tmeh\t4.0\ttext\n",
            "s\tzero\tneutral\t4.0\ttext\n",
            "s\t1\tpositive\t4.0\ttext\n",
        ]
        records = list(parse_sentence_sentiments(lines, error_log=log))
        assert len(records) == 1
        assert len(log) == 2

    def test_duplicate_sentence_skipped_not_fatal(self):
        log = RowErrorLog()
        lines = [
            "\t".join(SENTENCE_COLUMNS) + "\n",
            "s\t0\tneutral\t4.0\ta\n",
            "s\t0\tneutral\t4.0\tb\n",
            "s\t1\tneutral\t4.0\tc\n",
        ]
        records = list(parse_sentence_sentiments(lines, error_log=log))
        assert [r.sentence_index for r in records] == [0, 1]
        assert "duplicate sentence" in log.errors[0].reason

    def test_validation_on_construction(self):
        with pytest.raises(ValueError):
            SentenceSentiment("s", -1, "t", 3.0, Sentiment3.NEUTRAL)
        with pytest.raises(ValueError):
            SentenceSentiment("s", 0, "t", 9.0, Sentiment3.NEUTRAL)


class TestStreamingMemory:
    def test_parse_memory_flat_for_large_payload(self):
        # tracemalloc slows parsing ~30x, so the row count stays modest;
        # an accumulating parser would still blow far past the bound
        n = 10_000
        filler = "word " * 400  # ~2 KB per row

        def lines():
            yield "\t".join(SPEECH_COLUMNS) + "\n"
            for i in range(n):
                yield (
                    f"X-{i:07d}\tAT\t2019-01-01\ts\tN\tfemale\tregular"
                    f"\tp1\tParty\tCoalition\t\t{filler}{i}\n"
                )

        tracemalloc.start()
        count = 0
        for speech in parse_speeches(lines()):
            count += speech.date.year > 0
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert count == n
        payload = n * 2000
        # the ~20 MB of row text must stream through, not accumulate;
        # what remains is the duplicate-id digest set
        assert peak < payload / 4, f"peak {peak} bytes"
        assert peak < 6 * 1024 * 1024, f"peak {peak} bytes"
