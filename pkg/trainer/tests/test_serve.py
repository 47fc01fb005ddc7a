import io
import json
import threading
import urllib.error
import urllib.request

import pytest

from captrainer.model import load_artifact
from captrainer.serve import answer_batch, answer_one, make_http_server, serve_stdio
from captrainer.train import TrainConfig, train
from synthset import build_dataset

REQUESTS = [
    {"id": "r-1", "text": "the budget deficit grows"},
    {"id": "r-2", "text": "patients wait at the clinic"},
    {"id": "r-3", "text": "teachers revise the curriculum"},
]


@pytest.fixture(scope="module")
def artifact_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("serve")
    paths = build_dataset(root / "d", n_train_per_label=4, n_dev_per_label=2)
    result = train(
        paths["train_speeches"],
        paths["train_annotations"],
        paths["dev_speeches"],
        paths["dev_annotations"],
        TrainConfig(epochs=1, seeds=(7,), max_sequence_length=32),
        root / "out",
    )
    return str(result.artifact_dirs[7])


@pytest.fixture(scope="module")
def artifact(artifact_dir):
    return load_artifact(artifact_dir)


class TestAnswerOne:
    def test_valid_request(self, artifact):
        reply = answer_one(artifact, REQUESTS[0])
        assert set(reply) == {"id", "label_code", "confidence"}
        assert reply["id"] == "r-1"
        assert reply["label_code"] in (1, 3, 6)
        assert 1 / 3 <= reply["confidence"] <= 1.0

    def test_non_object(self, artifact):
        assert answer_one(artifact, [1, 2]) == {
            "id": "",
            "error": "request is not a JSON object",
        }

    def test_missing_id(self, artifact):
        assert answer_one(artifact, {"text": "x"})["error"] == "missing or non-string id"

    def test_numeric_id(self, artifact):
        assert answer_one(artifact, {"id": 7, "text": "x"})["error"] == (
            "missing or non-string id"
        )

    def test_missing_text(self, artifact):
        reply = answer_one(artifact, {"id": "r-9"})
        assert reply == {"id": "r-9", "error": "missing or non-string text"}

    def test_batch_preserves_order_and_length(self, artifact):
        items = [REQUESTS[0], 42, REQUESTS[1]]
        replies = answer_batch(artifact, items)
        assert [r["id"] for r in replies] == ["r-1", "", "r-2"]
        assert "error" in replies[1]


class TestStdio:
    def run_lines(self, artifact_dir, lines):
        stdout = io.StringIO()
        serve_stdio(artifact_dir, io.StringIO("\n".join(lines) + "\n"), stdout)
        return stdout.getvalue()

    def test_one_reply_per_line_in_order(self, artifact_dir):
        lines = [
            json.dumps(REQUESTS[0]),
            "{broken",
            "",
            json.dumps(REQUESTS[1]),
        ]
        out = self.run_lines(artifact_dir, lines).splitlines()
        assert len(out) == 4
        replies = [json.loads(line) for line in out]
        assert replies[0]["id"] == "r-1"
        assert replies[1]["error"].startswith("malformed JSON")
        assert replies[2]["error"] == "empty request line"
        assert replies[3]["id"] == "r-2"

    def test_repeat_run_identical(self, artifact_dir):
        lines = [json.dumps(r) for r in REQUESTS]
        assert self.run_lines(artifact_dir, lines) == self.run_lines(artifact_dir, lines)

    def test_eof_terminates(self, artifact_dir):
        assert self.run_lines(artifact_dir, [json.dumps(REQUESTS[2])]).count("\n") == 1


@pytest.fixture(scope="module")
def http_base(artifact_dir):
    server = make_http_server(artifact_dir, "127.0.0.1", 0)
    host, port = server.server_address
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://{host}:{port}"
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


def post(url, body: bytes):
    req = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as err:
        return err.code, err.read()


class TestHttp:
    def test_predict_array(self, http_base):
        status, body = post(http_base + "/predict", json.dumps(REQUESTS).encode())
        assert status == 200
        replies = json.loads(body)
        assert [r["id"] for r in replies] == ["r-1", "r-2", "r-3"]
        assert all(1 / 3 <= r["confidence"] <= 1.0 for r in replies)

    def test_bad_item_stays_in_place(self, http_base):
        payload = [REQUESTS[0], "not an object", {"id": "x"}]
        status, body = post(http_base + "/predict", json.dumps(payload).encode())
        assert status == 200
        replies = json.loads(body)
        assert len(replies) == 3
        assert "label_code" in replies[0]
        assert replies[1]["error"] == "request is not a JSON object"
        assert replies[2]["error"] == "missing or non-string text"

    def test_non_array_body(self, http_base):
        status, body = post(http_base + "/predict", json.dumps(REQUESTS[0]).encode())
        assert status == 400
        assert json.loads(body) == {"error": "body must be a JSON array"}

    def test_invalid_json_body(self, http_base):
        status, body = post(http_base + "/predict", b"{nope")
        assert status == 400
        assert json.loads(body) == {"error": "body is not valid JSON"}

    def test_unknown_path(self, http_base):
        status, _ = post(http_base + "/classify", b"[]")
        assert status == 404

    def test_trailing_slash_accepted(self, http_base):
        status, body = post(http_base + "/predict/", b"[]")
        assert status == 200
        assert json.loads(body) == []

    def test_matches_stdio(self, http_base, artifact_dir):
        _, body = post(http_base + "/predict", json.dumps(REQUESTS).encode())
        via_http = [
            (r["id"], r["label_code"], r["confidence"]) for r in json.loads(body)
        ]
        stdout = io.StringIO()
        serve_stdio(
            artifact_dir,
            io.StringIO("".join(json.dumps(r) + "\n" for r in REQUESTS)),
            stdout,
        )
        via_stdio = [
            (r["id"], r["label_code"], r["confidence"])
            for r in map(json.loads, stdout.getvalue().splitlines())
        ]
        assert via_http == via_stdio
