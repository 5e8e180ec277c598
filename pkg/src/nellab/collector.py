"""Report collector: ingestion, data minimization, append-only persistence.

Every ingested report runs through a minimization pipeline before it is
recorded: URL query/fragment stripping, captured-header dropping, and
client-IP handling (``volatile`` keeps the address in memory only,
``truncate`` zeroes the host bits, ``full`` stores it verbatim).

Records append to an in-memory list and, when configured, to a
newline-delimited JSON file, so the volatile-IP guarantee can be checked by
scanning the file for address literals. Appends are serialized through one
lock; the log is a linear order.
"""

from __future__ import annotations

import ipaddress
import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Iterator
from urllib.parse import urlsplit, urlunsplit

from .headers import (
    EndpointGroup,
    NelPolicyHeader,
    NelReport,
    ParseError,
    REPORT_MEDIA_TYPE,
    Removal,
    parse_nel_header,
    parse_report_batch,
    parse_report_to_header,
    serialize_nel_header,
    serialize_report_to_header,
)

logger = logging.getLogger(__name__)

IP_MODES = ("volatile", "truncate", "full")

MAX_BODY_BYTES = 1024 * 1024

REDACTED = "[redacted]"


class RejectError(Exception):
    """An ingest was refused; ``status`` is the HTTP status to answer with."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


@dataclass
class CollectorConfig:
    """Operating configuration for one collector instance."""

    listen: str = "127.0.0.1:9390"
    ip_mode: str = "volatile"
    strip_url_query: bool = True
    drop_captured_headers: bool = True
    retention_seconds: int | None = None  # None = infinite
    emit_nel: NelPolicyHeader | None = None
    emit_report_to: list[EndpointGroup] | None = None
    log_path: str | None = None
    warn_on_success_reports: bool = False

    def __post_init__(self):
        if self.ip_mode not in IP_MODES:
            raise ValueError(f"unknown ip_mode {self.ip_mode!r}")
        if (self.emit_nel is None) != (self.emit_report_to is None):
            raise ValueError("emit_nel_headers needs both a policy and groups")

    @classmethod
    def from_dict(cls, data: dict) -> "CollectorConfig":
        retention = data.get("retention", None)
        if retention in (None, "infinite"):
            retention_seconds = None
        elif isinstance(retention, int) and not isinstance(retention, bool) and retention >= 0:
            retention_seconds = retention
        else:
            raise ValueError(f"retention must be seconds or \"infinite\": {retention!r}")

        emit_nel = None
        emit_report_to = None
        emit = data.get("emit_nel_headers")
        if emit is not None:
            parsed = parse_nel_header(json.dumps(emit["nel"]))
            if isinstance(parsed, Removal):
                raise ValueError("emit_nel_headers must carry a storable policy")
            emit_nel = parsed
            groups = emit["report_to"]
            if isinstance(groups, dict):
                groups = [groups]
            emit_report_to = parse_report_to_header(
                ", ".join(json.dumps(g) for g in groups))

        return cls(
            listen=data.get("listen", "127.0.0.1:9390"),
            ip_mode=data.get("ip_mode", "volatile"),
            strip_url_query=data.get("strip_url_query", True),
            drop_captured_headers=data.get("drop_captured_headers", True),
            retention_seconds=retention_seconds,
            emit_nel=emit_nel,
            emit_report_to=emit_report_to,
            log_path=data.get("log_path"),
            warn_on_success_reports=data.get("warn_on_success_reports", False),
        )

    def to_dict(self) -> dict:
        data: dict = {
            "listen": self.listen,
            "ip_mode": self.ip_mode,
            "strip_url_query": self.strip_url_query,
            "drop_captured_headers": self.drop_captured_headers,
            "retention": ("infinite" if self.retention_seconds is None
                          else self.retention_seconds),
        }
        if self.emit_nel is not None:
            data["emit_nel_headers"] = {
                "nel": json.loads(serialize_nel_header(self.emit_nel)),
                "report_to": [
                    json.loads(chunk) for chunk in
                    serialize_report_to_header(self.emit_report_to or []).split(", ")
                ],
            }
        if self.log_path is not None:
            data["log_path"] = self.log_path
        if self.warn_on_success_reports:
            data["warn_on_success_reports"] = True
        return data


def parse_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"listen address must be host:port, got {listen!r}")
    return host, int(port)


def strip_query(url: str) -> str:
    if not url:
        return url
    parts = urlsplit(url)
    return urlunsplit((parts.scheme, parts.netloc, parts.path, "", ""))


def minimize(report: NelReport, config: CollectorConfig) -> NelReport:
    """Apply the configured data-minimization steps to one report; idempotent."""
    body = replace(report.body)
    url = report.url
    if config.strip_url_query:
        url = strip_query(url)
        body.referrer = strip_query(body.referrer)
    if config.drop_captured_headers:
        body.request_headers = {}
        body.response_headers = {}
    else:
        body.request_headers = dict(body.request_headers)
        body.response_headers = dict(body.response_headers)
    return NelReport(age=report.age, url=url, body=body)


def persisted_ip(client_ip: str, mode: str) -> str:
    """The form of a client address that may reach persistent storage."""
    if mode == "volatile":
        return REDACTED
    if mode == "full":
        return client_ip
    try:
        address = ipaddress.ip_address(client_ip)
    except ValueError:
        # Not an address at all; safest to treat like volatile.
        return REDACTED
    bits = 24 if address.version == 4 else 48
    network = ipaddress.ip_network(f"{address}/{bits}", strict=False)
    return str(network.network_address)


@dataclass
class StoredRecord:
    """One persisted report with its delivery metadata.

    ``client_ip`` is the persisted form; in volatile mode the real address
    lives only in ``volatile_ip``, which never serializes.
    """

    received_at: int
    report: NelReport
    client_ip: str
    user_agent: str
    volatile_ip: str | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "received_at": self.received_at,
            "report": self.report.to_dict(),
            "client_ip": self.client_ip,
            "user_agent": self.user_agent,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


class Collector:
    """Ingests report batches, minimizes them, and appends records."""

    def __init__(self, config: CollectorConfig):
        self.config = config
        self.records: list[StoredRecord] = []
        self._lock = threading.Lock()
        if config.log_path is not None:
            Path(config.log_path).parent.mkdir(parents=True, exist_ok=True)
            Path(config.log_path).touch()

    def ingest(self, body: bytes, client_ip: str, user_agent: str, now: int) -> int:
        """Minimize and append every report in the batch; returns the count."""
        if len(body) > MAX_BODY_BYTES:
            raise RejectError(413, "body exceeds 1 MiB")
        try:
            reports = parse_report_batch(body)
        except ParseError as exc:
            raise RejectError(400, str(exc)) from None

        stored_ip = persisted_ip(client_ip, self.config.ip_mode)
        records = []
        for report in reports:
            if self.config.warn_on_success_reports and report.body.type == "ok":
                logger.warning(
                    "success report for %s ingested by a failure-only collector",
                    report.url)
            records.append(StoredRecord(
                received_at=now,
                report=minimize(report, self.config),
                client_ip=stored_ip,
                user_agent=user_agent,
                volatile_ip=client_ip if self.config.ip_mode == "volatile" else None,
            ))
        with self._lock:
            self.records.extend(records)
            if self.config.log_path is not None:
                with open(self.config.log_path, "a", encoding="utf-8") as log:
                    for record in records:
                        log.write(record.to_line() + "\n")
                    log.flush()
        return len(records)

    def response_headers(self) -> dict[str, str]:
        """Headers served on collector responses; how collector chains form."""
        if self.config.emit_nel is None:
            return {}
        return {
            "NEL": serialize_nel_header(self.config.emit_nel),
            "Report-To": serialize_report_to_header(self.config.emit_report_to or []),
        }

    def purge_expired(self, now: int) -> int:
        """Drop records older than the retention window (strictly older)."""
        retention = self.config.retention_seconds
        if retention is None:
            return 0
        horizon = retention * 1000
        with self._lock:
            kept = [r for r in self.records if now - r.received_at <= horizon]
            purged = len(self.records) - len(kept)
            if purged:
                self.records = kept
                if self.config.log_path is not None:
                    with open(self.config.log_path, "w", encoding="utf-8") as log:
                        for record in kept:
                            log.write(record.to_line() + "\n")
        return purged

    def export(self, since: int | None = None, until: int | None = None,
               host: str | None = None) -> Iterator[str]:
        """Records as NDJSON lines, in ingestion order."""
        for record in list(self.records):
            if since is not None and record.received_at < since:
                continue
            if until is not None and record.received_at > until:
                continue
            if host is not None:
                report_host = (urlsplit(record.report.url).hostname or "").lower()
                if report_host != host.lower():
                    continue
            yield record.to_line()


class _CollectorHandler(BaseHTTPRequestHandler):
    server_version = "nel-lab-collector/0.1"
    protocol_version = "HTTP/1.1"

    def _respond(self, status: int, extra_headers: dict[str, str] | None = None):
        self.send_response(status)
        for name, value in (extra_headers or {}).items():
            self.send_header(name, value)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_POST(self):
        collector: Collector = self.server.collector  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            # Drain modestly oversized bodies so the client can read the 413
            # instead of dying on a broken pipe; beyond the cap, just close.
            remaining = min(length, 4 * MAX_BODY_BYTES)
            while remaining > 0:
                chunk = self.rfile.read(min(remaining, 65536))
                if not chunk:
                    break
                remaining -= len(chunk)
            self._respond(413)
            self.close_connection = True
            return
        content_type = self.headers.get("Content-Type", "")
        if not content_type.startswith(REPORT_MEDIA_TYPE):
            self._respond(400)
            return
        body = self.rfile.read(length)
        try:
            collector.ingest(body, self.client_address[0],
                             self.headers.get("User-Agent", ""),
                             self.server.clock())  # type: ignore[attr-defined]
        except RejectError as exc:
            self._respond(exc.status)
        else:
            self._respond(200, collector.response_headers())

    def do_GET(self):
        # A collector that deploys NEL itself serves its policy on every
        # response, uploads and plain fetches alike.
        collector: Collector = self.server.collector  # type: ignore[attr-defined]
        self._respond(200, collector.response_headers())

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        logger.debug("%s %s", self.address_string(), format % args)


def make_server(collector: Collector, host: str | None = None,
                port: int | None = None) -> ThreadingHTTPServer:
    """Bind the ingestion HTTP server; caller decides how to run it."""
    if host is None or port is None:
        host, port = parse_listen(collector.config.listen)
    server = ThreadingHTTPServer((host, port), _CollectorHandler)
    server.collector = collector  # type: ignore[attr-defined]
    server.clock = lambda: int(time.time() * 1000)  # type: ignore[attr-defined]
    return server
