"""Submission collector: dedup by device identity, append-only persistence.

State lives in two line-delimited files inside the data directory:

``ingest.jsonl``
    every ingest attempt with its verdict, in the order it was applied;
``index.jsonl``
    the current sample per (serial hash, build host), derived from the log.

The index can always be rebuilt by replaying the log.
"""

import argparse
import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field, replace
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, List, Optional, Tuple
from urllib.parse import parse_qs, urlparse

from .records import STATUSES, Submission, dumps, read_jsonl

log = logging.getLogger(__name__)

ACCEPTED_NEW = "accepted-new"
SUPERSEDED = "superseded-previous"
REJECTED_DUPLICATE = "rejected-duplicate"
REJECTED_INVALID = "rejected-invalid"

LOG_NAME = "ingest.jsonl"
INDEX_NAME = "index.jsonl"

Key = Tuple[str, str]


class StorageError(RuntimeError):
    """Writing to the log failed; nothing was applied and the call may be retried."""


@dataclass
class IngestResult:
    verdict: str
    key: Optional[Key] = None
    reasons: List[str] = field(default_factory=list)
    conflict: bool = False

    def to_dict(self) -> dict:
        d = {"verdict": self.verdict, "reasons": self.reasons}
        if self.key is not None:
            d["key"] = list(self.key)
        if self.conflict:
            d["conflict"] = True
        return d


@dataclass
class StoredSample:
    key: Key
    submission: dict
    history: int = 1
    accepted: bool = True

    def to_dict(self) -> dict:
        return {
            "key": list(self.key),
            "submission": self.submission,
            "history": self.history,
            "accepted": self.accepted,
        }


def hash_serial(serial: str, salt: str) -> str:
    return "sha256:" + hashlib.sha256((salt + "\0" + serial).encode()).hexdigest()


_REQUIRED = {
    "profile": dict,
    "records": list,
    "available_pairs": int,
    "campaign_id": str,
    "client_timestamp": (int, float),
    "status": str,
}
_PROFILE_REQUIRED = ("model", "manufacturer", "serial_number", "build_host", "battery_capacity")


def validate(payload) -> Tuple[Optional[Submission], List[str]]:
    """Parse and check a submission payload; returns (submission, reasons)."""
    if not isinstance(payload, dict):
        return None, ["body: expected a JSON object"]
    reasons = []
    for name, typ in _REQUIRED.items():
        if name not in payload:
            reasons.append(f"{name}: missing")
        elif not isinstance(payload[name], typ) or isinstance(payload[name], bool):
            reasons.append(f"{name}: wrong type")
    if reasons:
        return None, reasons
    profile = payload["profile"]
    for name in _PROFILE_REQUIRED:
        if name not in profile:
            reasons.append(f"profile.{name}: missing")
    if not profile.get("serial_number") and not payload.get("serial_hash"):
        reasons.append("profile.serial_number: empty")
    if not profile.get("build_host"):
        reasons.append("profile.build_host: empty")
    if payload["status"] not in STATUSES:
        reasons.append(f"status: must be one of {', '.join(STATUSES)}")
    if payload["available_pairs"] <= 0:
        reasons.append("available_pairs: must be positive")
    if not payload["records"] and payload["status"] != "cancelled":
        reasons.append("records: empty for a non-cancelled submission")
    if reasons:
        return None, reasons
    try:
        sub = Submission.from_dict(payload)
    except (TypeError, ValueError, KeyError) as exc:
        return None, [f"body: {exc}"]
    keys = [r.key for r in sub.records]
    if len(set(keys)) != len(keys):
        reasons.append("records: duplicate (decoder, asset) pair")
    if len(set(keys)) > sub.available_pairs:
        reasons.append("records: more pairs than available_pairs")
    claimed = payload.get("completeness")
    if claimed is not None and abs(claimed - sub.completeness) > 1e-12:
        reasons.append(f"completeness: {claimed} != {sub.completeness}")
    for i, rec in enumerate(sub.records):
        try:
            ok = rec.is_consistent()
        except ValueError as exc:
            reasons.append(f"records[{i}].window: {exc}")
            continue
        if not ok:
            reasons.append(f"records[{i}].metrics: do not recompute from window")
    return (None if reasons else sub), reasons


class CollectorStore:
    """Thread-safe submission store.

    All mutations take one lock, so concurrent ingests are applied in the
    order their log lines appear.
    """

    def __init__(self, data_dir=None, salt: str = ""):
        self.data_dir = data_dir
        self.salt = salt
        self._lock = threading.Lock()
        self._samples: Dict[Key, StoredSample] = {}
        self._seq = 0
        self._log = None
        if data_dir is not None:
            os.makedirs(data_dir, exist_ok=True)
            log_path = os.path.join(data_dir, LOG_NAME)
            if os.path.exists(log_path):
                self._load(log_path)
            self._log = open(log_path, "a")

    # -- persistence --------------------------------------------------
    def _load(self, log_path) -> None:
        for entry in read_jsonl(log_path):
            self._seq = entry["seq"]
            if entry["verdict"] != REJECTED_INVALID:
                self._apply(tuple(entry["key"]), entry["submission"], entry["verdict"])

    def _append(self, entry: dict) -> None:
        if self._log is None:
            return
        line = dumps(entry) + "\n"
        offset = self._log.tell()
        try:
            self._write(line)
        except OSError as exc:
            try:
                self._log.truncate(offset)
                self._log.seek(offset)
            except OSError:
                pass
            raise StorageError(f"log append failed: {exc}") from exc

    def _write(self, line: str) -> None:
        self._log.write(line)
        self._log.flush()

    def close(self) -> None:
        with self._lock:
            if self._log is not None:
                self._write_index()
                self._log.close()
                self._log = None

    def flush_index(self) -> None:
        with self._lock:
            self._write_index()

    def _write_index(self) -> None:
        if self.data_dir is None:
            return
        path = os.path.join(self.data_dir, INDEX_NAME)
        tmp = path + ".tmp"
        with open(tmp, "w") as f:
            for key in sorted(self._samples):
                f.write(dumps(self._samples[key].to_dict()) + "\n")
        os.replace(tmp, path)

    # -- ingest -------------------------------------------------------
    def normalize(self, sub: Submission) -> Tuple[Key, dict]:
        serial_hash = sub.serial_hash or hash_serial(sub.profile.serial_number, self.salt)
        profile = replace(sub.profile, serial_number="")
        norm = replace(sub, profile=profile, serial_hash=serial_hash)
        return (serial_hash, profile.build_host), norm.to_dict()

    def _decide(self, key: Key, norm: dict) -> Tuple[str, bool]:
        prev = self._samples.get(key)
        if prev is None:
            return ACCEPTED_NEW, False
        old = prev.submission
        if norm["completeness"] > old["completeness"]:
            return SUPERSEDED, False
        if (
            norm["completeness"] == old["completeness"] == 1.0
            and norm["status"] == old["status"] == "complete"
            and dumps(norm) != dumps(old)
        ):
            # two different complete runs from one device: keep the latest
            return SUPERSEDED, True
        return REJECTED_DUPLICATE, False

    def _apply(self, key: Key, norm: dict, verdict: str) -> None:
        prev = self._samples.get(key)
        if verdict == ACCEPTED_NEW:
            self._samples[key] = StoredSample(key, norm)
        elif verdict == SUPERSEDED:
            self._samples[key] = StoredSample(key, norm, prev.history + 1)
        elif verdict == REJECTED_DUPLICATE:
            prev.history += 1

    def ingest(self, payload) -> IngestResult:
        """Validate, deduplicate and persist one submission."""
        if isinstance(payload, Submission):
            payload = payload.to_dict()
        if isinstance(payload, (str, bytes)):
            try:
                payload = json.loads(payload)
            except ValueError as exc:
                sub, reasons = None, [f"body: not JSON ({exc})"]
            else:
                sub, reasons = validate(payload)
        else:
            sub, reasons = validate(payload)
        with self._lock:
            if sub is None:
                self._append({"seq": self._seq + 1, "verdict": REJECTED_INVALID, "reasons": reasons})
                self._seq += 1
                return IngestResult(REJECTED_INVALID, reasons=reasons)
            key, norm = self.normalize(sub)
            verdict, conflict = self._decide(key, norm)
            entry = {"seq": self._seq + 1, "verdict": verdict, "key": list(key), "submission": norm}
            if conflict:
                entry["conflict"] = True
                log.warning("conflicting complete submissions for %s; keeping the latest", key)
            self._append(entry)
            self._seq += 1
            self._apply(key, norm, verdict)
            return IngestResult(verdict, key, conflict=conflict)

    # -- reads --------------------------------------------------------
    def samples(self) -> List[StoredSample]:
        with self._lock:
            return [replace(self._samples[k]) for k in sorted(self._samples)]

    def completeness_report(self) -> List[dict]:
        rows = [
            {
                "model": s.submission["profile"]["model"],
                "serial": s.key[0].split(":", 1)[-1][:12],
                "build_host": s.key[1],
                "completeness": s.submission["completeness"],
                "status": s.submission["status"],
            }
            for s in self.samples()
        ]
        rows.sort(key=lambda r: (r["completeness"], r["serial"], r["build_host"]))
        return rows

    def export_raw(
        self, standard: Optional[str] = None, kind: Optional[str] = None, model: Optional[str] = None
    ) -> List[dict]:
        """Accepted samples in key order, records optionally filtered."""
        out = []
        for s in self.samples():
            if not s.accepted:
                continue
            sub = s.submission
            if model and sub["profile"]["model"] != model:
                continue
            if standard or kind:
                recs = [
                    r
                    for r in sub["records"]
                    if (not standard or r["decoder"]["standard"] == standard)
                    and (not kind or r["decoder"]["kind"] == kind)
                ]
                if not recs:
                    continue
                sub = {**sub, "records": recs}
            out.append(sub)
        return out

    def export_lines(self, **filters) -> str:
        return "".join(dumps(s) + "\n" for s in self.export_raw(**filters))

    @classmethod
    def replay(cls, log_path, data_dir=None, salt: str = "") -> "CollectorStore":
        """Rebuild a store by re-applying every logged ingest in order."""
        store = cls(data_dir, salt)
        for entry in read_jsonl(log_path):
            if entry["verdict"] == REJECTED_INVALID:
                with store._lock:
                    store._append({"seq": store._seq + 1, "verdict": REJECTED_INVALID, "reasons": entry["reasons"]})
                    store._seq += 1
                continue
            result = store.ingest(entry["submission"])
            if result.verdict != entry["verdict"]:
                raise ValueError(
                    f"replay diverged at seq {entry['seq']}: {result.verdict} != {entry['verdict']}"
                )
        return store


class _Handler(BaseHTTPRequestHandler):
    store: CollectorStore = None
    max_body = 64 * 1024 * 1024

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status, body: str, ctype="application/json"):
        data = body.encode()
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        if urlparse(self.path).path != "/v1/submissions":
            return self._send(HTTPStatus.NOT_FOUND, dumps({"error": "not found"}))
        length = int(self.headers.get("Content-Length") or 0)
        if length > self.max_body:
            return self._send(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, dumps({"error": "body too large"}))
        body = self.rfile.read(length)
        try:
            result = self.store.ingest(body)
        except StorageError as exc:
            self.send_response(HTTPStatus.SERVICE_UNAVAILABLE)
            self.send_header("Retry-After", "1")
            data = dumps({"error": str(exc)}).encode()
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
            return
        status = HTTPStatus.UNPROCESSABLE_ENTITY if result.verdict == REJECTED_INVALID else HTTPStatus.OK
        self._send(status, dumps(result.to_dict()))

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/v1/completeness":
            return self._send(HTTPStatus.OK, dumps(self.store.completeness_report()))
        if url.path == "/v1/export":
            q = {k: v[-1] for k, v in parse_qs(url.query).items() if v and v[-1]}
            unknown = set(q) - {"standard", "kind", "model"}
            if unknown:
                return self._send(HTTPStatus.BAD_REQUEST, dumps({"error": f"unknown filters {sorted(unknown)}"}))
            return self._send(HTTPStatus.OK, self.store.export_lines(**q), "application/x-ndjson")
        self._send(HTTPStatus.NOT_FOUND, dumps({"error": "not found"}))


def make_server(store: CollectorStore, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"store": store})
    return ThreadingHTTPServer((host, port), handler)


def main(argv=None):
    p = argparse.ArgumentParser(prog="decwatt-collector", description="Collect decoder power submissions.")
    p.add_argument("--listen", default=os.environ.get("DECWATT_LISTEN", "127.0.0.1:8080"))
    p.add_argument("--data-dir", default=os.environ.get("DECWATT_DATA_DIR", "collector-data"))
    p.add_argument("--salt", default=os.environ.get("DECWATT_SALT", ""))
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    host, _, port = args.listen.rpartition(":")
    store = CollectorStore(args.data_dir, args.salt)
    server = make_server(store, host or "127.0.0.1", int(port))
    log.info("listening on %s:%s, data in %s", *server.server_address[:2], args.data_dir)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        store.close()


if __name__ == "__main__":
    main()
