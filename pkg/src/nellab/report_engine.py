"""Turns observed request outcomes into sampled, queued, delivered reports.

The engine owns one browser agent's report queue. Observation samples
outcomes against the governing policy's success/failure fractions using an
injected RNG; delivery batches due reports per endpoint, fails over across
a group's endpoints by priority and weight, retries with exponential
backoff, and on final failure emits a meta-report about the collector when
the collector host itself carries a stored policy.

No real network I/O happens here: delivery goes through a transport oracle
``(endpoint_url, body, now) -> TransportResult`` supplied by the caller.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable
from urllib.parse import urlsplit, urlunsplit

from .headers import (
    EndpointGroup,
    NelPolicyHeader,
    NelReport,
    REPORT_PHASES,
    ReportBody,
    serialize_report_batch,
)
from .policy_store import PolicyStore, SUBDOMAINS_STRICT

MAX_ATTEMPTS = 3
BACKOFF_BASE_MS = 60_000

REFERRER_MODES = ("strip-path", "origin-only", "full")

SUCCESS_TYPE = "ok"


@dataclass
class RequestOutcome:
    """The observed result of one fetch."""

    url: str
    referrer: str
    method: str
    protocol: str
    server_ip: str
    status_code: int
    elapsed_time: int
    phase: str  # dns | connection | application
    result_type: str  # "ok" or an error type like "dns.name_not_resolved"
    event_time: int
    request_headers: dict[str, str] = field(default_factory=dict)
    response_headers: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.phase not in REPORT_PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.phase == "dns" and self.status_code != 0:
            raise ValueError("dns-phase outcomes carry no status code")

    @property
    def is_success(self) -> bool:
        return self.result_type == SUCCESS_TYPE

    @property
    def host(self) -> str:
        return (urlsplit(self.url).hostname or "").lower()


@dataclass(frozen=True)
class TransportResult:
    """What the transport oracle observed for one upload."""

    kind: str  # delivered | unreachable | http_error
    status_code: int | None = None
    response_headers: dict[str, str] | None = None

    @property
    def delivered(self) -> bool:
        return self.kind == "delivered"


DELIVERED = TransportResult("delivered")
UNREACHABLE = TransportResult("unreachable")

Transport = Callable[[str, bytes, int], TransportResult]


@dataclass
class DeliveryTask:
    """One report waiting in the delivery queue."""

    report: NelReport
    group: EndpointGroup
    event_time: int
    next_attempt_at: int
    attempts: int = 0
    is_meta: bool = False
    failed_endpoints: set[str] = field(default_factory=set)


@dataclass
class DeliveryAttempt:
    """The record of one upload attempt (one batch, one endpoint)."""

    at: int
    endpoint: str
    group: str
    result: str
    status_code: int | None
    report_count: int
    response_headers: dict[str, str] | None = None


def apply_referrer_restriction(referrer: str, mode: str = "origin-only") -> str:
    """Reduce a referrer URL before it enters a report body.

    ``origin-only`` keeps scheme and host, ``strip-path`` keeps the path but
    drops query and fragment, ``full`` passes the value through.
    """
    if mode not in REFERRER_MODES:
        raise ValueError(f"unknown referrer mode {mode!r}")
    if not referrer or mode == "full":
        return referrer
    parts = urlsplit(referrer)
    if mode == "origin-only":
        return f"{parts.scheme}://{parts.netloc}/"
    return urlunsplit((parts.scheme, parts.netloc, parts.path, "", ""))


def capture_headers(outcome: RequestOutcome,
                    policy: NelPolicyHeader) -> tuple[dict[str, str], dict[str, str]]:
    """Copy only the exchange headers the policy asked to capture."""

    def pick(names: list[str], available: dict[str, str]) -> dict[str, str]:
        lowered = {k.lower(): v for k, v in available.items()}
        return {name: lowered[name.lower()] for name in names
                if name.lower() in lowered}

    return (pick(policy.request_headers, outcome.request_headers),
            pick(policy.response_headers, outcome.response_headers))


class ReportEngine:
    """Report sampling, queueing, and delivery for one browser agent.

    ``sink``, when given, receives ``(kind, at, data)`` engine events:
    ``report_queued``, ``meta_report_queued``, and ``delivery_attempt``.
    """

    def __init__(self, store: PolicyStore, rng: random.Random,
                 sink: Callable[[str, int, dict], None] | None = None,
                 referrer_mode: str = "origin-only",
                 max_attempts: int = MAX_ATTEMPTS):
        if referrer_mode not in REFERRER_MODES:
            raise ValueError(f"unknown referrer mode {referrer_mode!r}")
        self.store = store
        self.rng = rng
        self.referrer_mode = referrer_mode
        self.max_attempts = max_attempts
        self._sink = sink
        self._queue: list[DeliveryTask] = []

    # -- observation ---------------------------------------------------------

    def observe(self, outcome: RequestOutcome, now: int,
                is_meta: bool = False) -> DeliveryTask | None:
        """Sample one outcome against the governing policy and queue a report."""
        found = self.store.lookup(outcome.host, now)
        if found is None:
            return None
        stored, _, via_subdomain = found
        if (via_subdomain and self.store.subdomain_mode == SUBDOMAINS_STRICT
                and outcome.phase != "dns"):
            return None

        policy = stored.policy
        fraction = (policy.success_fraction if outcome.is_success
                    else policy.failure_fraction)
        if not self.rng.random() < fraction:
            return None

        request_headers, response_headers = capture_headers(outcome, policy)
        body = ReportBody(
            sampling_fraction=fraction,
            referrer=apply_referrer_restriction(outcome.referrer, self.referrer_mode),
            server_ip=outcome.server_ip,
            protocol=outcome.protocol,
            method=outcome.method,
            request_headers=request_headers,
            response_headers=response_headers,
            status_code=outcome.status_code,
            elapsed_time=outcome.elapsed_time,
            phase=outcome.phase,
            type=outcome.result_type,
        )
        task = DeliveryTask(
            report=NelReport(age=max(0, now - outcome.event_time),
                             url=outcome.url, body=body),
            group=stored.endpoint_group(),
            event_time=outcome.event_time,
            next_attempt_at=now,
            is_meta=is_meta,
        )
        self._queue.append(task)
        if is_meta:
            self._emit("meta_report_queued", now, {
                "url": outcome.url,
                "collector": outcome.host,
                "phase": outcome.phase,
                "group": task.group.name,
                "sampling_fraction": fraction,
            })
        else:
            self._emit("report_queued", now, {
                "url": outcome.url,
                "report_type": outcome.result_type,
                "phase": outcome.phase,
                "group": task.group.name,
                "sampling_fraction": fraction,
            })
        return task

    # -- delivery --------------------------------------------------------------

    def deliver_due(self, now: int, transport: Transport) -> list[DeliveryAttempt]:
        """Attempt every task due at ``now``, one batch per (group, endpoint)."""
        due = [t for t in self._queue if t.next_attempt_at <= now]
        if not due:
            return []

        batches: dict[tuple[str, str], list[DeliveryTask]] = {}
        for task in due:
            endpoint = self._choose_endpoint(task)
            batches.setdefault((task.group.name, endpoint.url), []).append(task)

        attempts = []
        for (group_name, url), tasks in batches.items():
            for task in tasks:
                task.report.age = max(0, now - task.event_time)
            body = serialize_report_batch([t.report for t in tasks])
            result = transport(url, body, now)
            attempt = DeliveryAttempt(
                at=now,
                endpoint=url,
                group=group_name,
                result=result.kind,
                status_code=result.status_code,
                report_count=len(tasks),
                response_headers=result.response_headers,
            )
            attempts.append(attempt)
            self._emit("delivery_attempt", now, {
                "endpoint": url,
                "group": group_name,
                "result": result.kind,
                "status": result.status_code,
                "reports": len(tasks),
            })
            if result.delivered:
                for task in tasks:
                    self._queue.remove(task)
            else:
                for task in tasks:
                    task.attempts += 1
                    task.failed_endpoints.add(url)
                    if task.attempts >= self.max_attempts:
                        self._queue.remove(task)
                        self._queue_meta_report(url, result, now)
                    else:
                        task.next_attempt_at = now + self.backoff(task.attempts)
        return attempts

    def _choose_endpoint(self, task: DeliveryTask):
        candidates = [e for e in task.group.endpoints
                      if e.url not in task.failed_endpoints]
        if not candidates:
            # Every endpoint has failed at least once; start over.
            candidates = list(task.group.endpoints)
        best = min(e.priority for e in candidates)
        pool = [e for e in candidates if e.priority == best]
        if len(pool) == 1:
            return pool[0]
        draw = self.rng.random() * sum(e.weight for e in pool)
        acc = 0.0
        for endpoint in pool:
            acc += endpoint.weight
            if draw < acc:
                return endpoint
        return pool[-1]

    def _queue_meta_report(self, upload_url: str, result: TransportResult,
                           now: int) -> None:
        """After final delivery failure, report the collector's own error.

        Queued only when the collector host carries a stored policy; routed
        and sampled under that policy like any other failure outcome.
        """
        if result.kind == "http_error":
            phase, result_type = "application", "http.error"
            status, protocol = result.status_code or 0, "h2"
        else:
            phase, result_type = "connection", "tcp.refused"
            status, protocol = 0, ""
        outcome = RequestOutcome(
            url=upload_url,
            referrer="",
            method="POST",
            protocol=protocol,
            server_ip="",
            status_code=status,
            elapsed_time=0,
            phase=phase,
            result_type=result_type,
            event_time=now,
        )
        self.observe(outcome, now, is_meta=True)

    # -- queue state ---------------------------------------------------------

    @staticmethod
    def backoff(attempts: int) -> int:
        """Virtual-time retry delay in ms after ``attempts`` failures."""
        return BACKOFF_BASE_MS * 2 ** (attempts - 1)

    def pending(self) -> list[DeliveryTask]:
        return list(self._queue)

    def next_due(self) -> int | None:
        """Earliest scheduled attempt time, or None when the queue is empty."""
        if not self._queue:
            return None
        return min(t.next_attempt_at for t in self._queue)

    def _emit(self, kind: str, at: int, data: dict) -> None:
        if self._sink is not None:
            self._sink(kind, at, data)
