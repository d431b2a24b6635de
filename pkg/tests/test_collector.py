import json
import threading
import urllib.error
import urllib.request
from dataclasses import replace

import numpy as np
import pytest

from decwatt.collector import (
    ACCEPTED_NEW,
    INDEX_NAME,
    LOG_NAME,
    REJECTED_DUPLICATE,
    REJECTED_INVALID,
    SUPERSEDED,
    CollectorStore,
    StorageError,
    make_server,
)
from decwatt.metrics import DecoderDescriptor
from decwatt.synth import synthetic_submission

DECODERS = [
    DecoderDescriptor("omx.qcom.avc", "H.264", "hardware", "Qualcomm"),
    DecoderDescriptor("c2.android.av01", "AV1", "software", "Google"),
]


def sub(serial="SN123", host="hostA", completeness=1.0, seed=0, model="Galaxy A70", **kw):
    rng = np.random.default_rng(seed)
    return synthetic_submission(rng, model, serial, host, DECODERS, completeness, **kw)


def test_first_submission_accepted():
    store = CollectorStore()
    assert store.ingest(sub()).verdict == ACCEPTED_NEW


def test_higher_completeness_supersedes():
    store = CollectorStore()
    assert store.ingest(sub(completeness=0.5)).verdict == ACCEPTED_NEW
    r = store.ingest(sub(completeness=1.0, seed=1))
    assert r.verdict == SUPERSEDED
    assert store.samples()[0].submission["completeness"] == 1.0
    assert store.samples()[0].history == 2


def test_identical_resubmission_rejected():
    store = CollectorStore()
    s = sub()
    store.ingest(s)
    assert store.ingest(s).verdict == REJECTED_DUPLICATE
    assert store.ingest(s.to_json()).verdict == REJECTED_DUPLICATE


def test_lower_completeness_rejected():
    store = CollectorStore()
    store.ingest(sub(completeness=1.0))
    assert store.ingest(sub(completeness=0.5, seed=2)).verdict == REJECTED_DUPLICATE
    assert store.samples()[0].submission["completeness"] == 1.0


def test_conflicting_complete_latest_wins():
    store = CollectorStore()
    store.ingest(sub(seed=1))
    r = store.ingest(sub(seed=2))
    assert r.verdict == SUPERSEDED and r.conflict
    assert store.samples()[0].submission["campaign_id"] == sub(seed=2).campaign_id


def test_dedup_key_uses_build_host():
    store = CollectorStore()
    store.ingest(sub(host="hostA"))
    assert store.ingest(sub(host="hostB")).verdict == ACCEPTED_NEW
    assert len(store.samples()) == 2


@pytest.mark.parametrize(
    "mutate, reason",
    [
        (lambda d: d.pop("profile"), "profile: missing"),
        (lambda d: d.update(status="done"), "status"),
        (lambda d: d["profile"].update(build_host=""), "profile.build_host"),
        (lambda d: d.update(records=[]), "records: empty"),
        (lambda d: d["records"][0]["metrics"].update(delta_play=1.0), "records[0].metrics"),
        (lambda d: d.update(completeness=0.25), "completeness"),
        (lambda d: d["records"][0]["window"].update(level_end=99), "records[0].window"),
    ],
)
def test_malformed_rejected_with_reasons(mutate, reason):
    d = sub().to_dict()
    mutate(d)
    r = CollectorStore().ingest(d)
    assert r.verdict == REJECTED_INVALID
    assert any(reason in x for x in r.reasons), r.reasons


def test_garbage_body():
    r = CollectorStore().ingest(b"{not json")
    assert r.verdict == REJECTED_INVALID and "not JSON" in r.reasons[0]


def test_cancelled_may_be_empty():
    d = sub().to_dict()
    d.update(records=[], status="cancelled", completeness=0.0)
    assert CollectorStore().ingest(d).verdict == ACCEPTED_NEW


def test_completeness_report_order():
    store = CollectorStore(salt="s")
    store.ingest(sub("A", completeness=1.0))
    store.ingest(sub("B", completeness=0.3))
    rows = store.completeness_report()
    # 0.3 of six pairs keeps one record
    assert [r["completeness"] for r in rows] == [1 / 6, 1.0]
    assert all("SN" not in r["serial"] and len(r["serial"]) == 12 for r in rows)
    assert CollectorStore().completeness_report() == []


def test_completeness_report_285_samples():
    store = CollectorStore()
    rng = np.random.default_rng(0)
    for i in range(285):
        store.ingest(synthetic_submission(rng, f"Model {i % 147}", f"SN{i:04d}", completeness=rng.uniform(0.1, 1)))
    rows = store.completeness_report()
    assert len(rows) == 285 == len(store.samples())
    assert [r["completeness"] for r in rows] == sorted(r["completeness"] for r in rows)


def test_export_filters():
    store = CollectorStore()
    store.ingest(sub("A"))
    store.ingest(sub("B", model="Redmi 9"))
    av1 = store.export_raw(standard="AV1")
    assert len(av1) == 2
    assert all(r["decoder"]["standard"] == "AV1" for s in av1 for r in s["records"])
    assert [s["profile"]["model"] for s in store.export_raw(model="Redmi 9")] == ["Redmi 9"]
    assert all(r["decoder"]["kind"] == "hardware" for s in store.export_raw(kind="hardware") for r in s["records"])
    assert store.export_raw(standard="VP8") == []
    everything = store.export_raw()
    assert len(everything) == 2 and sum(len(s["records"]) for s in everything) == 12


def test_export_round_trip_byte_identical():
    store = CollectorStore(salt="pepper")
    rng = np.random.default_rng(4)
    for i in range(40):
        store.ingest(synthetic_submission(rng, f"M{i % 7}", f"SN{i}", completeness=rng.uniform(0.2, 1)))
    first = store.export_lines()
    fresh = CollectorStore(salt="other-salt")
    for line in first.splitlines():
        assert fresh.ingest(line).verdict == ACCEPTED_NEW
    assert fresh.export_lines() == first


def test_serial_not_persisted(tmp_path):
    store = CollectorStore(tmp_path, salt="s3cret")
    store.ingest(sub("VERYSECRETSERIAL"))
    store.close()
    for name in (LOG_NAME, INDEX_NAME):
        assert "VERYSECRETSERIAL" not in (tmp_path / name).read_text()


def test_replay_byte_identical(tmp_path):
    a = CollectorStore(tmp_path / "a", salt="x")
    rng = np.random.default_rng(9)
    for i in range(60):
        a.ingest(synthetic_submission(rng, "M", f"SN{i % 20}", completeness=rng.uniform(0.1, 1)))
    a.ingest(b"garbage")
    a.close()
    b = CollectorStore.replay(tmp_path / "a" / LOG_NAME, tmp_path / "b", salt="x")
    b.close()
    for name in (LOG_NAME, INDEX_NAME):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_restart_reloads_state(tmp_path):
    store = CollectorStore(tmp_path)
    store.ingest(sub("A", completeness=0.5))
    store.close()
    again = CollectorStore(tmp_path)
    assert again.ingest(sub("A", completeness=0.5)).verdict == REJECTED_DUPLICATE
    assert again.ingest(sub("A", completeness=1.0)).verdict == SUPERSEDED


def test_storage_failure_leaves_no_trace(tmp_path):
    store = CollectorStore(tmp_path)
    store.ingest(sub("A"))
    before = (tmp_path / LOG_NAME).read_bytes()

    def broken(line):
        store._log.write(line[: len(line) // 2])
        store._log.flush()
        raise OSError("disk full")

    good = store._write
    store._write = broken
    with pytest.raises(StorageError):
        store.ingest(sub("B"))
    assert (tmp_path / LOG_NAME).read_bytes() == before
    assert len(store.samples()) == 1
    store._write = good
    assert store.ingest(sub("B")).verdict == ACCEPTED_NEW
    store.close()
    assert len(CollectorStore(tmp_path).samples()) == 2


def test_completeness_never_decreases():
    store = CollectorStore()
    rng = np.random.default_rng(1)
    seen = {}
    for i in range(300):
        s = synthetic_submission(rng, "M", f"SN{rng.integers(0, 10)}", completeness=rng.uniform(0, 1))
        store.ingest(s)
        for sample in store.samples():
            c = sample.submission["completeness"]
            assert c >= seen.get(sample.key, 0.0)
            seen[sample.key] = c


@pytest.fixture
def server(tmp_path):
    store = CollectorStore(tmp_path)
    srv = make_server(store, "127.0.0.1", 0)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}"
    srv.shutdown()
    srv.server_close()
    store.close()


def _req(url, data=None):
    req = urllib.request.Request(url, data=data, method="POST" if data is not None else "GET")
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, resp.read().decode()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read().decode()


def test_http_endpoints(server):
    status, body = _req(server + "/v1/submissions", sub("A").to_json().encode())
    assert status == 200 and json.loads(body)["verdict"] == ACCEPTED_NEW
    status, body = _req(server + "/v1/submissions", sub("A").to_json().encode())
    assert json.loads(body)["verdict"] == REJECTED_DUPLICATE
    status, body = _req(server + "/v1/submissions", b"[]")
    assert status == 422 and json.loads(body)["verdict"] == REJECTED_INVALID
    status, body = _req(server + "/v1/completeness")
    assert status == 200 and len(json.loads(body)) == 1
    status, body = _req(server + "/v1/export?standard=AV1&kind=&model=")
    lines = body.splitlines()
    assert status == 200 and len(lines) == 1
    assert {r["decoder"]["standard"] for r in json.loads(lines[0])["records"]} == {"AV1"}
    assert _req(server + "/v1/export?vendor=x")[0] == 400
    assert _req(server + "/nope")[0] == 404
