"""Backend half of the UI round trip: replay the pointer-driven sample
stream generated by the browser client's input mapping and check that the
server's live trial metrics match batch metrics on the equivalent scripted
trace, and that the probe answers land in the final report.

Regenerate the fixtures with:
    python scripts/gen_ui_fixture.py
    (cd frontend && npm run gen:stream)
"""

import json
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from flowtrace.dataio import ProtocolConfig
from flowtrace.service import SessionEngine, create_app
from flowtrace.task import TrialConfig

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"
POINTER_STREAM = FIXTURES / "pointer_stream.json"
FORCE_SCRIPT = FIXTURES / "force_script.json"

pytestmark = pytest.mark.skipif(
    not (POINTER_STREAM.exists() and FORCE_SCRIPT.exists()),
    reason="UI fixtures not generated",
)


@pytest.fixture(scope="module")
def fixture_docs():
    return (json.loads(POINTER_STREAM.read_text()), json.loads(FORCE_SCRIPT.read_text()))


def replay_locally(messages, protocol, seed):
    """Feed a message list straight into an engine; collect trial_end metrics."""
    engine = SessionEngine("local", ProtocolConfig(trial=TrialConfig(), **protocol), seed=seed)
    ends = []
    for message in messages:
        if message["type"] == "sample":
            events = engine.ingest_sample(message["t"], message["force"])
        else:
            events = engine.answer_probe(message["r1"], message["r2"], message["r3"])
        ends.extend(e.payload["metrics"] for e in events if e.type == "trial_end")
    return engine, ends


class TestUiRoundTrip:
    def test_pointer_stream_metrics_match_scripted_trace(self, fixture_docs):
        pointer, script = fixture_docs
        seed = script["seed"]
        _, ends_pointer = replay_locally(pointer["messages"], pointer["protocol"], seed)
        _, ends_script = replay_locally(script["messages"], script["protocol"], seed)
        assert len(ends_pointer) == len(ends_script)
        assert len(ends_pointer) > 60
        for a, b in zip(ends_pointer, ends_script):
            for key in a:
                assert a[key] == pytest.approx(b[key], abs=1e-6)

    def test_websocket_replay_and_report_responses(self, tmp_path, fixture_docs):
        pointer, script = fixture_docs
        app = create_app(data_dir=tmp_path / "data", replicates=20, seed=5)
        client = TestClient(app)
        overrides = {"subject_id": "ui01", "seed": script["seed"], **pointer["protocol"]}
        assert client.post("/api/session", json=overrides).status_code == 200

        live_metrics = []
        with client.websocket_connect("/api/session/ui01/stream") as ws:
            ws.receive_json()
            expected_engine = SessionEngine(
                "shadow", ProtocolConfig(trial=TrialConfig(), **pointer["protocol"]),
                seed=script["seed"],
            )
            for message in pointer["messages"]:
                if message["type"] == "sample":
                    events = expected_engine.ingest_sample(message["t"], message["force"])
                else:
                    events = expected_engine.answer_probe(
                        message["r1"], message["r2"], message["r3"])
                ws.send_json(message)
                for event in events:
                    frame = ws.receive_json()
                    assert frame["type"] == event.type
                    if frame["type"] == "trial_end":
                        live_metrics.append(frame["metrics"])
        assert len(live_metrics) > 60

        state = client.get("/api/session/ui01").json()
        assert state["done"] is True
        assert state["probes_answered"] == 12

        report = client.get("/api/session/ui01/report",
                            params={"replicates": 20, "seed": 5, "qc": "false"}).json()
        row = report["subjects"][0]
        assert row["n_probes"] == 12
        reported = [p["reported"] for p in row["probes"]]
        expected = [float(np.mean(r)) for r in script["responses"]]
        assert reported == pytest.approx(expected)
