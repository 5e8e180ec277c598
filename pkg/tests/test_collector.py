"""Collector core: minimization, IP handling, retention, export."""

import ipaddress
import json
import logging

import pytest

from nellab.collector import (
    Collector,
    CollectorConfig,
    REDACTED,
    RejectError,
    minimize,
    persisted_ip,
)
from nellab.headers import (
    NelReport,
    ReportBody,
    parse_nel_header,
    parse_report_to_header,
    serialize_report_batch,
)


def fig1_nel_report(fig1_report) -> NelReport:
    return NelReport(age=fig1_report["age"], url=fig1_report["url"],
                     body=ReportBody(**fig1_report["body"]))


def batch(*reports) -> bytes:
    return serialize_report_batch(list(reports))


class TestMinimize:
    def test_idempotent_on_example_report(self, fig1_report):
        config = CollectorConfig()
        once = minimize(fig1_nel_report(fig1_report), config)
        twice = minimize(once, config)
        assert once == twice

    def test_strips_query_and_fragment(self, fig1_report):
        report = fig1_nel_report(fig1_report)
        report.url = "https://a.example/p?user=alice#s"
        report.body.referrer = "https://r.example/q?tok=1"
        minimized = minimize(report, CollectorConfig())
        assert minimized.url == "https://a.example/p"
        assert minimized.body.referrer == "https://r.example/q"

    def test_drops_captured_headers(self, fig1_report):
        report = fig1_nel_report(fig1_report)
        report.body.request_headers = {"Cookie": "id=1"}
        report.body.response_headers = {"ETag": "x"}
        minimized = minimize(report, CollectorConfig())
        assert minimized.body.request_headers == {}
        assert minimized.body.response_headers == {}

    def test_all_off_is_identity(self, fig1_report):
        report = fig1_nel_report(fig1_report)
        report.url = "https://a.example/p?user=alice"
        report.body.request_headers = {"Cookie": "id=1"}
        config = CollectorConfig(strip_url_query=False,
                                 drop_captured_headers=False)
        assert minimize(report, config) == report

    def test_does_not_mutate_input(self, fig1_report):
        report = fig1_nel_report(fig1_report)
        report.url = "https://a.example/p?user=alice"
        minimize(report, CollectorConfig())
        assert report.url == "https://a.example/p?user=alice"


class TestPersistedIp:
    def test_volatile_redacts(self):
        assert persisted_ip("203.0.113.77", "volatile") == REDACTED

    def test_truncate_v4_matches_masking_oracle(self):
        # Oracle: mask to /24 via the ipaddress module, independently.
        for ip in ("203.0.113.77", "10.1.2.3", "198.51.100.255"):
            oracle = str(ipaddress.ip_network(f"{ip}/24", strict=False)
                         .network_address)
            assert persisted_ip(ip, "truncate") == oracle
        assert persisted_ip("203.0.113.77", "truncate") == "203.0.113.0"

    def test_truncate_v6_keeps_top_48_bits(self):
        oracle = str(ipaddress.ip_network("2001:DB8:0:0:0:0:0:42/48",
                                          strict=False).network_address)
        assert persisted_ip("2001:DB8:0:0:0:0:0:42", "truncate") == oracle == \
            "2001:db8::"

    def test_full_passthrough(self):
        assert persisted_ip("203.0.113.77", "full") == "203.0.113.77"

    def test_unparseable_redacted_in_truncate_mode(self):
        assert persisted_ip("not-an-ip", "truncate") == REDACTED


class TestIngest:
    def test_fig1_batch_stored_with_clean_url(self, fig1_report):
        collector = Collector(CollectorConfig())
        count = collector.ingest(batch(fig1_nel_report(fig1_report)),
                                 "203.0.113.77", "UA/1.0", now=5_000)
        assert count == 1
        record = collector.records[0]
        assert record.report.url == "https://www.example.com/"
        assert record.received_at == 5_000

    def test_truncate_mode_stores_masked_ip(self, fig1_report):
        collector = Collector(CollectorConfig(ip_mode="truncate"))
        collector.ingest(batch(fig1_nel_report(fig1_report)),
                         "203.0.113.77", "UA/1.0", now=0)
        assert collector.records[0].client_ip == "203.0.113.0"

    def test_volatile_mode_keeps_ip_in_memory_only(self, fig1_report, tmp_path):
        log = tmp_path / "records.ndjson"
        collector = Collector(CollectorConfig(ip_mode="volatile",
                                              log_path=str(log)))
        collector.ingest(batch(fig1_nel_report(fig1_report)),
                         "203.0.113.77", "UA/1.0", now=0)
        record = collector.records[0]
        assert record.volatile_ip == "203.0.113.77"
        assert record.client_ip == REDACTED
        assert "203.0.113.77" not in log.read_text()
        assert "203.0.113.77" not in record.to_line()

    def test_malformed_body_rejected_and_nothing_appended(self):
        collector = Collector(CollectorConfig())
        with pytest.raises(RejectError) as excinfo:
            collector.ingest(b'[{"age": 0', "203.0.113.1", "UA", now=0)
        assert excinfo.value.status == 400
        assert collector.records == []

    def test_oversized_body_rejected(self):
        collector = Collector(CollectorConfig())
        with pytest.raises(RejectError) as excinfo:
            collector.ingest(b"[" + b" " * (1024 * 1024) + b"]", "ip", "UA", now=0)
        assert excinfo.value.status == 413

    def test_ndjson_lines_appended_in_order(self, fig1_report, tmp_path):
        log = tmp_path / "records.ndjson"
        collector = Collector(CollectorConfig(log_path=str(log)))
        report = fig1_nel_report(fig1_report)
        collector.ingest(batch(report), "203.0.113.1", "UA", now=1)
        collector.ingest(batch(report, report), "203.0.113.1", "UA", now=2)
        lines = log.read_text().splitlines()
        assert len(lines) == 3
        assert [json.loads(line)["received_at"] for line in lines] == [1, 2, 2]

    def test_persisted_lines_carry_no_query_strings(self, fig1_report, tmp_path):
        log = tmp_path / "records.ndjson"
        collector = Collector(CollectorConfig(log_path=str(log)))
        report = fig1_nel_report(fig1_report)
        report.url = "https://a.example/p?user=alice"
        report.body.referrer = "https://r.example/?tok=1"
        collector.ingest(batch(report), "ip", "UA", now=0)
        for line in log.read_text().splitlines():
            record = json.loads(line)
            assert "?" not in record["report"]["url"]
            assert "?" not in record["report"]["body"]["referrer"]

    def test_success_report_warning(self, fig1_report, caplog):
        config = CollectorConfig(warn_on_success_reports=True)
        collector = Collector(config)
        report = fig1_nel_report(fig1_report)
        report.body.type = "ok"
        with caplog.at_level(logging.WARNING, logger="nellab.collector"):
            collector.ingest(batch(report), "203.0.113.1", "UA", now=0)
        assert any("success report" in message for message in caplog.messages)


class TestRetention:
    def test_old_record_purged(self, fig1_report):
        collector = Collector(CollectorConfig(retention_seconds=24 * 3600))
        collector.ingest(batch(fig1_nel_report(fig1_report)), "ip", "UA", now=0)
        assert collector.purge_expired(now=25 * 3600 * 1000) == 1
        assert collector.records == []

    def test_boundary_exactly_retention_is_retained(self, fig1_report):
        collector = Collector(CollectorConfig(retention_seconds=24 * 3600))
        collector.ingest(batch(fig1_nel_report(fig1_report)), "ip", "UA", now=0)
        assert collector.purge_expired(now=24 * 3600 * 1000) == 0
        assert len(collector.records) == 1

    def test_infinite_retention_purges_nothing(self, fig1_report):
        collector = Collector(CollectorConfig(retention_seconds=None))
        collector.ingest(batch(fig1_nel_report(fig1_report)), "ip", "UA", now=0)
        assert collector.purge_expired(now=10**15) == 0

    def test_purge_rewrites_log_file(self, fig1_report, tmp_path):
        log = tmp_path / "records.ndjson"
        collector = Collector(CollectorConfig(retention_seconds=10,
                                              log_path=str(log)))
        report = fig1_nel_report(fig1_report)
        collector.ingest(batch(report), "ip", "UA", now=0)
        collector.ingest(batch(report), "ip", "UA", now=20_000)
        collector.purge_expired(now=25_000)
        lines = log.read_text().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["received_at"] == 20_000


class TestExport:
    def test_empty_store(self):
        assert list(Collector(CollectorConfig()).export()) == []

    def test_order_and_count(self, fig1_report):
        collector = Collector(CollectorConfig())
        report = fig1_nel_report(fig1_report)
        collector.ingest(batch(report), "ip", "UA", now=1)
        collector.ingest(batch(report), "ip", "UA", now=2)
        lines = list(collector.export())
        assert len(lines) == 2
        assert [json.loads(line)["received_at"] for line in lines] == [1, 2]

    def test_time_filter_excluding_all(self, fig1_report):
        collector = Collector(CollectorConfig())
        collector.ingest(batch(fig1_nel_report(fig1_report)), "ip", "UA", now=5)
        assert list(collector.export(since=10)) == []
        assert list(collector.export(until=4)) == []

    def test_host_filter(self, fig1_report):
        collector = Collector(CollectorConfig())
        report = fig1_nel_report(fig1_report)
        other = fig1_nel_report(fig1_report)
        other.url = "https://other.example/"
        collector.ingest(batch(report, other), "ip", "UA", now=1)
        lines = list(collector.export(host="www.example.com"))
        assert len(lines) == 1
        assert json.loads(lines[0])["report"]["url"] == "https://www.example.com/"


class TestConfig:
    def test_emit_headers_parse_back(self):
        config = CollectorConfig.from_dict({
            "emit_nel_headers": {
                "nel": {"report_to": "meta", "max_age": 3600},
                "report_to": {"group": "meta", "max_age": 3600,
                              "endpoints": [{"url": "https://cprime.example/up"}]},
            },
        })
        collector = Collector(config)
        headers = collector.response_headers()
        assert parse_nel_header(headers["NEL"]).report_to == "meta"
        assert parse_report_to_header(headers["Report-To"])[0].name == "meta"

    def test_no_emit_headers_by_default(self):
        assert Collector(CollectorConfig()).response_headers() == {}

    def test_round_trip(self):
        config = CollectorConfig.from_dict({
            "listen": "127.0.0.1:9999",
            "ip_mode": "truncate",
            "strip_url_query": False,
            "retention": 3600,
            "emit_nel_headers": {
                "nel": {"report_to": "m", "max_age": 60},
                "report_to": [{"group": "m", "max_age": 60,
                               "endpoints": [{"url": "https://x.example/u"}]}],
            },
            "log_path": "/tmp/x.ndjson",
        })
        assert CollectorConfig.from_dict(config.to_dict()) == config

    def test_unknown_ip_mode_rejected(self):
        with pytest.raises(ValueError):
            CollectorConfig(ip_mode="hash")

    def test_bad_retention_rejected(self):
        with pytest.raises(ValueError):
            CollectorConfig.from_dict({"retention": "forever"})

    def test_removal_policy_not_servable(self):
        with pytest.raises(ValueError):
            CollectorConfig.from_dict({
                "emit_nel_headers": {
                    "nel": {"report_to": "m", "max_age": 0},
                    "report_to": [{"group": "m", "max_age": 60,
                                   "endpoints": [{"url": "https://x.example/u"}]}],
                },
            })
