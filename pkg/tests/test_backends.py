from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroute.backends import (
    BackendDescriptor,
    LiveBackend,
    ReplayBackend,
    complete,
    dump_record,
    load_trace,
    parse_record,
    write_trace,
)
from entroute.entropy import InferenceRecord, Role
from entroute.errors import (
    BackendRejected,
    BackendUnavailable,
    LogprobsUnsupported,
    MalformedTrace,
    TraceExhausted,
)
from entroute.fixtures import build_reference_trace, reference_trace_path

records = st.builds(
    lambda step, lps, inp, conf, role: InferenceRecord(step, tuple(lps), inp, len(lps), conf, role),
    st.integers(min_value=0, max_value=10**6),
    st.lists(st.floats(min_value=-50.0, max_value=0.0, allow_nan=False), max_size=30),
    st.integers(min_value=0, max_value=10**7),
    st.none() | st.floats(min_value=0.0, max_value=1.0),
    st.sampled_from(list(Role)),
)


@settings(max_examples=300, deadline=None)
@given(records)
def test_record_round_trip(rec):
    line = dump_record(rec)
    assert parse_record(line) == rec
    assert dump_record(parse_record(line)) == line


def test_trace_file_byte_identity(tmp_path):
    original = reference_trace_path().read_bytes()
    out = tmp_path / "copy.jsonl"
    write_trace(out, load_trace(reference_trace_path()))
    assert out.read_bytes() == original


def test_reference_trace_regenerates_exactly(tmp_path):
    out = tmp_path / "regen.jsonl"
    write_trace(out, build_reference_trace())
    assert out.read_bytes() == reference_trace_path().read_bytes()


def test_canonical_key_order():
    rec = InferenceRecord(3, (-0.5,), 10, 1, 0.25, Role.SUPPORT)
    assert dump_record(rec) == (
        '{"step":3,"role":"support","input_tokens":10,"output_tokens":1,"logprobs":[-0.5],"confidence":0.25}\n'
    )


@pytest.mark.parametrize("text, field", [
    ('{"step":1,"input_tokens":1,"output_tokens":1}', "logprobs"),
    ('{"step":1,"input_tokens":1,"output_tokens":1,"logprobs":[0.5]}', "token_logprobs"),
    ('{"step":1,"input_tokens":1,"output_tokens":2,"logprobs":[-0.5]}', "output_tokens"),
    ('{"step":1,"input_tokens":-3,"output_tokens":1,"logprobs":[-0.5]}', "input_tokens"),
    ('{"step":1,"input_tokens":1,"output_tokens":1,"logprobs":[-0.5],"confidence":2}', "task_confidence"),
])
def test_malformed_records_name_field(text, field):
    with pytest.raises(MalformedTrace) as ei:
        parse_record(text, line=4)
    assert ei.value.field == field
    assert str(ei.value).startswith("line 4: ")


def test_malformed_file_reports_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(reference_trace_path().read_text().splitlines()[0] + "\n\n{not json\n")
    with pytest.raises(MalformedTrace, match="line 3"):
        load_trace(p)


def test_replay_serves_in_order_and_exhausts():
    b = ReplayBackend("base", reference_trace_path())
    assert len(b) == 10
    r = b.complete(100, 8, Role.SUPPORT).record
    assert r.sequence_id == 8 and r.role is Role.SUPPORT
    with pytest.raises(TraceExhausted):
        b.complete(100, 11)
    with pytest.raises(TraceExhausted):
        b.complete(100, 0)


def test_complete_with_descriptor():
    d = BackendDescriptor("base", "replay", trace_path=str(reference_trace_path()))
    assert complete(d, 10, 1).record.sequence_id == 1
    with pytest.raises(ValueError):
        BackendDescriptor("x", "live")


# live backend against a local HTTP stub

class _Stub(BaseHTTPRequestHandler):
    responses: list = []
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append(body)
        status, payload = type(self).responses.pop(0)
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub():
    server = HTTPServer(("127.0.0.1", 0), _Stub)
    _Stub.responses, _Stub.seen = [], []
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/complete", _Stub
    server.shutdown()
    server.server_close()


GOOD = {"input_tokens": 40, "output_tokens": 2, "logprobs": [math.log(0.5), math.log(0.25)], "confidence": 0.9}


def test_live_backend_success(stub):
    url, handler = stub
    handler.responses = [(200, GOOD)]
    res = LiveBackend("m", url).complete(40, 3, Role.SUPPORT, "hello")
    assert res.record.sequence_id == 3 and res.record.role is Role.SUPPORT
    assert res.record.task_confidence == 0.9
    assert res.latency_ms >= 0
    assert handler.seen[0]["logprobs"] is True and handler.seen[0]["prompt"] == "hello"


@pytest.mark.parametrize("status, payload, exc", [
    (503, {"error": "busy"}, BackendUnavailable),
    (429, {"error": "slow down"}, BackendUnavailable),
    (400, {"error": "bad"}, BackendRejected),
    (200, b"<html>", BackendUnavailable),
    (200, {"input_tokens": 1, "output_tokens": 1}, LogprobsUnsupported),
    (200, {"input_tokens": 1, "output_tokens": 1, "logprobs": [0.3]}, BackendRejected),
])
def test_live_backend_error_mapping(stub, status, payload, exc):
    url, handler = stub
    handler.responses = [(status, payload)]
    with pytest.raises(exc) as ei:
        LiveBackend("m", url).complete(1, 1)
    assert ei.value.retryable is (exc is BackendUnavailable)


def test_capability_probe_rejects_no_logprobs(stub):
    url, handler = stub
    handler.responses = [(200, {"text": "hi"})]
    with pytest.raises(LogprobsUnsupported):
        LiveBackend("m", url).check_capabilities()
    assert handler.seen[0]["probe"] is True


def test_connection_refused_is_unavailable():
    with pytest.raises(BackendUnavailable):
        LiveBackend("m", "http://127.0.0.1:9/none", timeout=1).complete(1, 1)


def test_injected_transport_timeout():
    def transport(url, payload, timeout):
        raise TimeoutError("timed out")
    with pytest.raises(BackendUnavailable):
        LiveBackend("m", "x", transport=transport).complete(1, 1)
