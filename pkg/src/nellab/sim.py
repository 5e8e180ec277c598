"""Deterministic discrete-event world for NEL attack and mitigation scenarios.

A scenario declares browser agents, a DNS table with timed mutations,
origin servers with up/down intervals and per-path response headers,
MitM header-injection windows, collector instances, and a timed visit
list. Running it produces an ordered event trace that is a pure function
of the config: equal configs (and seeds) give bit-identical traces.

Time is virtual milliseconds. Config events at equal timestamps execute
in declaration order (DNS mutations before visits); report deliveries and
retries are drained after each instant. MitM is modeled as header
substitution on responses within a window, which is exactly the
capability an interception adversary needs for policy injection; no TLS
machinery is simulated.

Collectors inside the world reuse the collector-service logic against an
in-memory transport, so minimization and persistence behave identically
to the HTTP service.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from urllib.parse import urlsplit

from .collector import Collector, CollectorConfig, RejectError
from .headers import Endpoint, EndpointGroup, NelPolicyHeader, serialize_nel_header, \
    serialize_report_to_header
from .policy_store import PolicyStore, StoreEffect
from .report_engine import ReportEngine, RequestOutcome, TransportResult, UNREACHABLE

DAY_MS = 86_400_000
YEAR_S = 31_536_000
CENTURY_S = 100 * YEAR_S

# Successful fetches report this elapsed time; failures report 0.
FETCH_ELAPSED_MS = 50

# Retry/meta chains are drained for this long past the last config event;
# anything still pending then (e.g. a cyclic meta-report loop toward a dead
# collector) is abandoned.
DRAIN_WINDOW_MS = 7 * DAY_MS


class ConfigError(ValueError):
    """A scenario config entry is invalid; the message names the entry."""


@dataclass
class AgentSpec:
    """One simulated browser."""

    name: str
    consent_mode: str = "bypass"
    subdomain_mode: str = "permissive"
    consent: dict[str, bool] = field(default_factory=dict)
    ip: str = "203.0.113.10"
    user_agent: str = "nel-lab-sim/1.0"
    referrer_mode: str = "origin-only"


@dataclass
class PathSpec:
    """Response served for one URL path prefix."""

    status: int = 200
    result_type: str | None = None  # default: "ok" below 400, else "http.error"
    headers: dict[str, str] = field(default_factory=dict)


@dataclass
class ServerSpec:
    """One origin server; reachable while DNS still points at its address."""

    ip: str
    secure: bool = True
    down: list[tuple[int, int | None]] = field(default_factory=list)
    paths: dict[str, PathSpec] = field(default_factory=dict)


@dataclass
class DnsMutation:
    at: int
    host: str
    ip: str  # "" models a name that stops resolving


@dataclass
class MitmWindow:
    """While active, response headers from ``host`` to ``agent`` are rewritten."""

    agent: str
    host: str
    start: int
    end: int  # half-open: start <= t < end
    headers: dict[str, str] = field(default_factory=dict)


@dataclass
class Visit:
    at: int
    agent: str
    url: str
    referrer: str = ""


@dataclass
class ScenarioConfig:
    name: str = "custom"
    description: str = ""
    seed: int = 0
    agents: list[AgentSpec] = field(default_factory=list)
    dns: dict[str, str] = field(default_factory=dict)
    dns_mutations: list[DnsMutation] = field(default_factory=list)
    servers: dict[str, ServerSpec] = field(default_factory=dict)
    mitm_windows: list[MitmWindow] = field(default_factory=list)
    visits: list[Visit] = field(default_factory=list)
    collectors: dict[str, CollectorConfig] = field(default_factory=dict)


@dataclass
class TraceEvent:
    kind: str
    at: int
    data: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "at": self.at, **self.data}


@dataclass
class ScenarioTrace:
    name: str
    seed: int
    events: list[TraceEvent]

    def to_json(self) -> str:
        document = {
            "name": self.name,
            "seed": self.seed,
            "events": [event.to_dict() for event in self.events],
        }
        return json.dumps(document, indent=2, sort_keys=True) + "\n"

    def to_json_bytes(self) -> bytes:
        return self.to_json().encode("utf-8")

    def kinds(self) -> list[str]:
        return [event.kind for event in self.events]


def trace_from_json(document: str) -> ScenarioTrace:
    data = json.loads(document)
    events = []
    for entry in data["events"]:
        entry = dict(entry)
        kind = entry.pop("kind")
        at = entry.pop("at")
        events.append(TraceEvent(kind, at, entry))
    return ScenarioTrace(name=data["name"], seed=data["seed"], events=events)


def diff_traces(a: ScenarioTrace, b: ScenarioTrace) -> list[dict]:
    """Event-level differences between two traces; empty iff identical."""
    diffs = []
    for index in range(max(len(a.events), len(b.events))):
        ea = a.events[index].to_dict() if index < len(a.events) else None
        eb = b.events[index].to_dict() if index < len(b.events) else None
        if ea != eb:
            diffs.append({"index": index, "a": ea, "b": eb})
    return diffs


# -- config (de)serialization --------------------------------------------------


def config_to_dict(config: ScenarioConfig) -> dict:
    return {
        "name": config.name,
        "description": config.description,
        "seed": config.seed,
        "agents": [
            {
                "name": a.name,
                "consent_mode": a.consent_mode,
                "subdomain_mode": a.subdomain_mode,
                "consent": dict(a.consent),
                "ip": a.ip,
                "user_agent": a.user_agent,
                "referrer_mode": a.referrer_mode,
            }
            for a in config.agents
        ],
        "dns": dict(config.dns),
        "dns_mutations": [
            {"at": m.at, "host": m.host, "ip": m.ip} for m in config.dns_mutations
        ],
        "servers": {
            host: {
                "ip": s.ip,
                "secure": s.secure,
                "down": [[start, end] for start, end in s.down],
                "paths": {
                    path: {
                        "status": p.status,
                        "result_type": p.result_type,
                        "headers": dict(p.headers),
                    }
                    for path, p in s.paths.items()
                },
            }
            for host, s in config.servers.items()
        },
        "mitm_windows": [
            {"agent": w.agent, "host": w.host, "start": w.start, "end": w.end,
             "headers": dict(w.headers)}
            for w in config.mitm_windows
        ],
        "visits": [
            {"at": v.at, "agent": v.agent, "url": v.url, "referrer": v.referrer}
            for v in config.visits
        ],
        "collectors": {host: c.to_dict() for host, c in config.collectors.items()},
    }


def config_from_dict(data: dict) -> ScenarioConfig:
    return ScenarioConfig(
        name=data.get("name", "custom"),
        description=data.get("description", ""),
        seed=data.get("seed", 0),
        agents=[
            AgentSpec(
                name=a["name"],
                consent_mode=a.get("consent_mode", "bypass"),
                subdomain_mode=a.get("subdomain_mode", "permissive"),
                consent=dict(a.get("consent", {})),
                ip=a.get("ip", "203.0.113.10"),
                user_agent=a.get("user_agent", "nel-lab-sim/1.0"),
                referrer_mode=a.get("referrer_mode", "origin-only"),
            )
            for a in data.get("agents", [])
        ],
        dns=dict(data.get("dns", {})),
        dns_mutations=[
            DnsMutation(at=m["at"], host=m["host"], ip=m["ip"])
            for m in data.get("dns_mutations", [])
        ],
        servers={
            host: ServerSpec(
                ip=s["ip"],
                secure=s.get("secure", True),
                down=[(d[0], d[1]) for d in s.get("down", [])],
                paths={
                    path: PathSpec(
                        status=p.get("status", 200),
                        result_type=p.get("result_type"),
                        headers=dict(p.get("headers", {})),
                    )
                    for path, p in s.get("paths", {}).items()
                },
            )
            for host, s in data.get("servers", {}).items()
        },
        mitm_windows=[
            MitmWindow(agent=w["agent"], host=w["host"], start=w["start"],
                       end=w["end"], headers=dict(w.get("headers", {})))
            for w in data.get("mitm_windows", [])
        ],
        visits=[
            Visit(at=v["at"], agent=v["agent"], url=v["url"],
                  referrer=v.get("referrer", ""))
            for v in data.get("visits", [])
        ],
        collectors={
            host: CollectorConfig.from_dict(c)
            for host, c in data.get("collectors", {}).items()
        },
    )


def validate_config(config: ScenarioConfig) -> None:
    """Raise :class:`ConfigError` naming the first offending entry."""
    names = [a.name for a in config.agents]
    if len(set(names)) != len(names):
        raise ConfigError("agent names must be unique")
    for agent in config.agents:
        if agent.consent_mode not in ("enforce", "bypass"):
            raise ConfigError(f"agent {agent.name!r}: unknown consent_mode "
                              f"{agent.consent_mode!r}")
        if agent.subdomain_mode not in ("permissive", "strict"):
            raise ConfigError(f"agent {agent.name!r}: unknown subdomain_mode "
                              f"{agent.subdomain_mode!r}")
    known = set(names)

    previous = None
    for mutation in config.dns_mutations:
        if previous is not None and mutation.at < previous:
            raise ConfigError(f"dns mutation at {mutation.at} for "
                              f"{mutation.host!r} is out of order")
        previous = mutation.at

    previous = None
    for visit in config.visits:
        if previous is not None and visit.at < previous:
            raise ConfigError(f"visit at {visit.at} to {visit.url!r} is out of order")
        previous = visit.at
        if visit.agent not in known:
            raise ConfigError(f"visit at {visit.at}: unknown agent {visit.agent!r}")
        host = (urlsplit(visit.url).hostname or "").lower()
        if not host:
            raise ConfigError(f"visit at {visit.at}: URL {visit.url!r} has no host")
        if host not in config.dns:
            raise ConfigError(f"visit at {visit.at}: host {host!r} missing from dns")

    for window in config.mitm_windows:
        if window.agent not in known:
            raise ConfigError(f"mitm window on {window.host!r}: unknown agent "
                              f"{window.agent!r}")
        if window.end < window.start:
            raise ConfigError(f"mitm window on {window.host!r}: end before start")

    for host in config.collectors:
        if host not in config.dns:
            raise ConfigError(f"collector {host!r} missing from dns")

    for host, server in config.servers.items():
        if not server.ip:
            raise ConfigError(f"server {host!r} has no address")
        for start, end in server.down:
            if end is not None and end < start:
                raise ConfigError(f"server {host!r}: down interval ends before start")


# -- the world ----------------------------------------------------------------


class _Agent:
    def __init__(self, spec: AgentSpec, seed: int, world: "_World"):
        self.spec = spec
        self.store = PolicyStore(consent_mode=spec.consent_mode,
                                 subdomain_mode=spec.subdomain_mode)
        for host, granted in spec.consent.items():
            self.store.set_consent(host, granted)
        self.last_resolved: dict[str, str] = {}
        self._world = world
        self.engine = ReportEngine(
            store=self.store,
            rng=random.Random(f"{seed}/{spec.name}"),
            sink=self._sink,
            referrer_mode=spec.referrer_mode,
        )

    def _sink(self, kind: str, at: int, data: dict) -> None:
        self._world.record(TraceEvent(kind, at, {"agent": self.spec.name, **data}))
        if kind == "delivery_attempt":
            self._world.flush_stored()

    def transport(self, url: str, body: bytes, now: int) -> TransportResult:
        return self._world.upload(self, url, body, now)


class _World:
    def __init__(self, config: ScenarioConfig):
        validate_config(config)
        self.config = config
        self.dns = dict(config.dns)
        self.servers = dict(config.servers)
        # Collector hosts without an explicit server entry are plain
        # always-up hosts at their DNS address.
        for host in config.collectors:
            self.servers.setdefault(host, ServerSpec(ip=config.dns[host]))
        self.collectors = {host: Collector(cfg)
                           for host, cfg in config.collectors.items()}
        self.agents = {spec.name: _Agent(spec, config.seed, self)
                       for spec in config.agents}
        self.events: list[TraceEvent] = []
        self._held_stored: list[TraceEvent] = []

    # -- trace plumbing ----------------------------------------------------

    def record(self, event: TraceEvent) -> None:
        self.events.append(event)

    def flush_stored(self) -> None:
        self.events.extend(self._held_stored)
        self._held_stored.clear()

    # -- reachability --------------------------------------------------------

    def _down(self, server: ServerSpec, now: int) -> bool:
        return any(start <= now and (end is None or now < end)
                   for start, end in server.down)

    def _reachable(self, host: str, now: int) -> bool:
        resolved = self.dns.get(host, "")
        server = self.servers.get(host)
        return (bool(resolved) and server is not None
                and server.ip == resolved and not self._down(server, now))

    def _mitm_overlay(self, agent: _Agent, host: str, now: int,
                      headers: dict[str, str]) -> dict[str, str]:
        result = dict(headers)
        for window in self.config.mitm_windows:
            if (window.agent == agent.spec.name and window.host == host
                    and window.start <= now < window.end):
                result.update(window.headers)
        return result

    # -- uploads (the engine's transport oracle) ------------------------------

    def upload(self, agent: _Agent, url: str, body: bytes,
               now: int) -> TransportResult:
        host = (urlsplit(url).hostname or "").lower()
        if not self._reachable(host, now):
            return UNREACHABLE
        collector = self.collectors.get(host)
        if collector is None:
            return TransportResult("http_error", status_code=404)
        before = len(collector.records)
        try:
            collector.ingest(body, agent.spec.ip, agent.spec.user_agent, now)
        except RejectError as exc:
            return TransportResult("http_error", status_code=exc.status)
        for record in collector.records[before:]:
            self._held_stored.append(TraceEvent("report_stored", now, {
                "collector": host,
                "url": record.report.url,
                "report_type": record.report.body.type,
                "phase": record.report.body.phase,
                "server_ip": record.report.body.server_ip,
            }))
        headers = self._mitm_overlay(agent, host, now, collector.response_headers())
        return TransportResult("delivered", status_code=200,
                               response_headers=headers)

    # -- policy event emission -----------------------------------------------

    def _emit_policy_effect(self, agent: _Agent, host: str, now: int,
                            effect: StoreEffect) -> None:
        if effect.kind in ("installed", "replaced"):
            found = agent.store.lookup(host, now)
            assert found is not None
            stored = found[0]
            self.record(TraceEvent("policy_installed", now, {
                "agent": agent.spec.name,
                "host": host,
                "group": stored.policy.report_to,
                "max_age": stored.policy.max_age,
                "include_subdomains": stored.policy.include_subdomains,
                "replaced": effect.kind == "replaced",
            }))
        elif effect.kind == "removed":
            self.record(TraceEvent("policy_removed", now, {
                "agent": agent.spec.name, "host": host,
            }))
        elif effect.reason != "no_header":
            self.record(TraceEvent("policy_ignored", now, {
                "agent": agent.spec.name, "host": host, "reason": effect.reason,
            }))

    def _process_response_headers(self, agent: _Agent, host: str, secure: bool,
                                  headers: dict[str, str], now: int) -> None:
        effect = agent.store.process_policy_headers(
            host, secure, headers.get("NEL"), headers.get("Report-To"), now)
        self._emit_policy_effect(agent, host, now, effect)

    # -- visits ----------------------------------------------------------------

    @staticmethod
    def _match_path(server: ServerSpec, path: str) -> PathSpec:
        best = None
        for prefix, spec in server.paths.items():
            if path.startswith(prefix):
                if best is None or len(prefix) > len(best[0]):
                    best = (prefix, spec)
        return best[1] if best else PathSpec()

    def _visit(self, visit: Visit) -> None:
        agent = self.agents[visit.agent]
        now = visit.at
        parts = urlsplit(visit.url)
        host = (parts.hostname or "").lower()
        resolved = self.dns.get(host, "")
        server = self.servers.get(host)

        if not resolved:
            outcome = RequestOutcome(
                url=visit.url, referrer=visit.referrer, method="GET",
                protocol="", server_ip="", status_code=0, elapsed_time=0,
                phase="dns", result_type="dns.name_not_resolved",
                event_time=now)
        elif not self._reachable(host, now):
            last = agent.last_resolved.get(host)
            if last is not None and last != resolved:
                # The name now points somewhere unreachable: the situation a
                # DNS firewall remap creates. The report leaks the remap target.
                outcome = RequestOutcome(
                    url=visit.url, referrer=visit.referrer, method="GET",
                    protocol="", server_ip=resolved, status_code=0,
                    elapsed_time=0, phase="dns",
                    result_type="dns.address_changed", event_time=now)
            else:
                outcome = RequestOutcome(
                    url=visit.url, referrer=visit.referrer, method="GET",
                    protocol="", server_ip=resolved, status_code=0,
                    elapsed_time=0, phase="connection",
                    result_type="tcp.refused", event_time=now)
        else:
            agent.last_resolved[host] = resolved
            assert server is not None
            path_spec = self._match_path(server, parts.path or "/")
            headers = self._mitm_overlay(agent, host, now, dict(path_spec.headers))
            self._process_response_headers(agent, host, server.secure, headers, now)
            result_type = path_spec.result_type or (
                "ok" if path_spec.status < 400 else "http.error")
            outcome = RequestOutcome(
                url=visit.url, referrer=visit.referrer, method="GET",
                protocol="h2", server_ip=resolved,
                status_code=path_spec.status, elapsed_time=FETCH_ELAPSED_MS,
                phase="application", result_type=result_type, event_time=now,
                request_headers={"User-Agent": agent.spec.user_agent},
                response_headers=headers)

        agent.engine.observe(outcome, now)

    # -- deliveries ---------------------------------------------------------

    def _drain(self, now: int) -> None:
        for agent in self.agents.values():
            while True:
                attempts = agent.engine.deliver_due(now, agent.transport)
                if not attempts:
                    break
                for attempt in attempts:
                    if attempt.result == "delivered" and attempt.response_headers:
                        host = (urlsplit(attempt.endpoint).hostname or "").lower()
                        self._process_response_headers(
                            agent, host, True, attempt.response_headers, now)

    # -- main loop --------------------------------------------------------------

    def run(self) -> ScenarioTrace:
        timeline: list[tuple[int, int, int, str, object]] = []
        for index, mutation in enumerate(self.config.dns_mutations):
            timeline.append((mutation.at, 0, index, "dns", mutation))
        for index, visit in enumerate(self.config.visits):
            timeline.append((visit.at, 1, index, "visit", visit))
        timeline.sort(key=lambda entry: entry[:3])

        horizon = (max((t[0] for t in timeline), default=0)) + DRAIN_WINDOW_MS
        position = 0
        while True:
            next_config = timeline[position][0] if position < len(timeline) else None
            next_task = min(
                (due for agent in self.agents.values()
                 if (due := agent.engine.next_due()) is not None),
                default=None)
            if next_config is None and next_task is None:
                break
            if next_task is not None and (next_config is None
                                          or next_task < next_config):
                if next_task > horizon:
                    break
                self._drain(next_task)
                continue
            now = next_config
            while position < len(timeline) and timeline[position][0] == now:
                kind, payload = timeline[position][3], timeline[position][4]
                if kind == "dns":
                    mutation: DnsMutation = payload  # type: ignore[assignment]
                    self.dns[mutation.host] = mutation.ip
                    self.record(TraceEvent("dns_change", now, {
                        "host": mutation.host, "ip": mutation.ip,
                    }))
                else:
                    self._visit(payload)  # type: ignore[arg-type]
                position += 1
            self._drain(now)

        return ScenarioTrace(self.config.name, self.config.seed, self.events)


def run_scenario(config: ScenarioConfig) -> ScenarioTrace:
    """Execute one scenario; the trace is a pure function of the config."""
    return _World(config).run()


# -- builtin scenarios ---------------------------------------------------------


def _nel(report_to: str, max_age: int, success: float = 0.0, failure: float = 1.0,
         subdomains: bool = False) -> str:
    return serialize_nel_header(NelPolicyHeader(
        report_to=report_to, max_age=max_age, include_subdomains=subdomains,
        success_fraction=success, failure_fraction=failure))


def _group(name: str, url: str, max_age: int = YEAR_S) -> str:
    return serialize_report_to_header([
        EndpointGroup(name=name, max_age=max_age, endpoints=[Endpoint(url=url)])])


def _emit_config(report_to: str, url: str, max_age: int = YEAR_S,
                 **kwargs) -> CollectorConfig:
    return CollectorConfig(
        emit_nel=NelPolicyHeader(report_to=report_to, max_age=max_age),
        emit_report_to=[EndpointGroup(name=report_to, max_age=max_age,
                                      endpoints=[Endpoint(url=url)])],
        **kwargs)


def _fig2_chain() -> ScenarioConfig:
    shared = {
        "NEL": _nel("c", YEAR_S, success=1.0),
        "Report-To": _group("c", "https://c.example/up"),
    }
    quiet = {
        "NEL": _nel("c", YEAR_S, success=0.0),
        "Report-To": _group("c", "https://c.example/up"),
    }
    return ScenarioConfig(
        name="fig2_chain",
        description=(
            "A and B share collector C, which reports to C'. The browser "
            "reports from A to C and thereby learns C's own policy. When B "
            "and C later fail together, the error about B cannot reach C, "
            "so the browser reports C's failure to C'. The scenario ends "
            "before C recovers, so B's own report stays undelivered."),
        agents=[AgentSpec(name="browser")],
        dns={
            "a.example": "192.0.2.10",
            "b.example": "192.0.2.11",
            "c.example": "192.0.2.20",
            "cprime.example": "192.0.2.21",
        },
        servers={
            "a.example": ServerSpec(ip="192.0.2.10",
                                    paths={"/": PathSpec(headers=dict(shared))}),
            "b.example": ServerSpec(ip="192.0.2.11", down=[(5_000, None)],
                                    paths={"/": PathSpec(headers=dict(quiet))}),
            "c.example": ServerSpec(ip="192.0.2.20", down=[(5_000, None)]),
            "cprime.example": ServerSpec(ip="192.0.2.21"),
        },
        collectors={
            "c.example": _emit_config("cprime", "https://cprime.example/up"),
            "cprime.example": CollectorConfig(),
        },
        visits=[
            Visit(at=1_000, agent="browser", url="https://a.example/"),
            Visit(at=2_000, agent="browser", url="https://b.example/"),
            Visit(at=10_000, agent="browser", url="https://b.example/"),
        ],
    )


def _fig3_split_chain() -> ScenarioConfig:
    return ScenarioConfig(
        name="fig3_split_chain",
        description=(
            "A and B use per-site collector chains (a.c.example and "
            "b.c.example) so either site can drop its processor. The "
            "browser never interacts with b.c.example before B and "
            "b.c.example fail together, so the failure of b.c.example is "
            "never reported anywhere."),
        agents=[AgentSpec(name="browser")],
        dns={
            "a.example": "192.0.2.10",
            "b.example": "192.0.2.11",
            "a.c.example": "192.0.2.30",
            "b.c.example": "192.0.2.31",
            "cprime.example": "192.0.2.21",
        },
        servers={
            "a.example": ServerSpec(ip="192.0.2.10", paths={"/": PathSpec(headers={
                "NEL": _nel("ac", YEAR_S, success=1.0),
                "Report-To": _group("ac", "https://a.c.example/up"),
            })}),
            "b.example": ServerSpec(ip="192.0.2.11", down=[(5_000, None)],
                                    paths={"/": PathSpec(headers={
                "NEL": _nel("bc", YEAR_S),
                "Report-To": _group("bc", "https://b.c.example/up"),
            })}),
            "a.c.example": ServerSpec(ip="192.0.2.30"),
            "b.c.example": ServerSpec(ip="192.0.2.31", down=[(5_000, None)]),
            "cprime.example": ServerSpec(ip="192.0.2.21"),
        },
        collectors={
            "a.c.example": _emit_config("cprime", "https://cprime.example/up"),
            "b.c.example": _emit_config("cprime", "https://cprime.example/up"),
            "cprime.example": CollectorConfig(),
        },
        visits=[
            Visit(at=1_000, agent="browser", url="https://a.example/"),
            Visit(at=2_000, agent="browser", url="https://b.example/"),
            Visit(at=10_000, agent="browser", url="https://b.example/"),
        ],
    )


_MITM_HEADERS = {
    "NEL": _nel("evil", CENTURY_S, success=1.0),
    "Report-To": _group("evil", "https://evil-collector.example/up", CENTURY_S),
}


def _mitm_persistence() -> ScenarioConfig:
    return ScenarioConfig(
        name="mitm_persistence",
        description=(
            "An interception adversary injects a century-lifetime policy "
            "during a ten-minute window. The policy outlives the window: "
            "visits tens of days later still deliver reports to the "
            "attacker's collector."),
        agents=[AgentSpec(name="victim")],
        dns={
            "honest.example": "192.0.2.40",
            "evil-collector.example": "192.0.2.66",
        },
        servers={
            "honest.example": ServerSpec(ip="192.0.2.40",
                                         paths={"/": PathSpec()}),
            "evil-collector.example": ServerSpec(ip="192.0.2.66"),
        },
        collectors={
            "evil-collector.example": CollectorConfig(
                ip_mode="full", strip_url_query=False),
        },
        mitm_windows=[
            MitmWindow(agent="victim", host="honest.example",
                       start=60_000, end=600_000, headers=dict(_MITM_HEADERS)),
        ],
        visits=[
            Visit(at=120_000, agent="victim", url="https://honest.example/"),
            Visit(at=900_000, agent="victim", url="https://honest.example/"),
            Visit(at=40 * DAY_MS, agent="victim", url="https://honest.example/"),
        ],
    )


def _mitigation_scrub() -> ScenarioConfig:
    return ScenarioConfig(
        name="mitigation_scrub",
        description=(
            "Same injection as mitm_persistence, but the honest server "
            "preventively serves max_age=0. The first visit after the "
            "window scrubs the malicious policy and no further reports "
            "reach the attacker."),
        agents=[AgentSpec(name="victim")],
        dns={
            "honest.example": "192.0.2.40",
            "evil-collector.example": "192.0.2.66",
        },
        servers={
            "honest.example": ServerSpec(ip="192.0.2.40", paths={
                "/": PathSpec(headers={"NEL": '{"max_age":0}'}),
            }),
            "evil-collector.example": ServerSpec(ip="192.0.2.66"),
        },
        collectors={
            "evil-collector.example": CollectorConfig(
                ip_mode="full", strip_url_query=False),
        },
        mitm_windows=[
            MitmWindow(agent="victim", host="honest.example",
                       start=60_000, end=600_000, headers=dict(_MITM_HEADERS)),
        ],
        visits=[
            Visit(at=120_000, agent="victim", url="https://honest.example/"),
            Visit(at=700_000, agent="victim", url="https://honest.example/"),
            Visit(at=900_000, agent="victim", url="https://honest.example/"),
            Visit(at=40 * DAY_MS, agent="victim", url="https://honest.example/"),
        ],
    )


def _rogue_creator() -> ScenarioConfig:
    rogue_headers = {
        "NEL": _nel("rogue", YEAR_S, success=1.0, subdomains=True),
        "Report-To": _group("rogue", "https://rogue-collector.example/up"),
    }
    visits = []
    for offset, agent in ((0, "permissive"), (100, "strict")):
        visits.extend([
            Visit(at=1_000 + offset, agent=agent,
                  url="https://pages.example/alice/"),
            Visit(at=2_000 + offset, agent=agent,
                  url="https://pages.example/bob/profile?user=bob&session=s3cr3t"),
            Visit(at=3_000 + offset, agent=agent,
                  url="https://static.pages.example/lib.js"),
            Visit(at=4_000 + offset, agent=agent,
                  url="https://broken.pages.example/pixel"),
        ])
    visits.sort(key=lambda v: v.at)
    return ScenarioConfig(
        name="rogue_creator",
        description=(
            "A content creator controlling only /alice/ on a shared host "
            "installs a host-wide, subdomain-wide policy. Their collector "
            "then sees traffic for every path and subdomain, including a "
            "URL with query parameters. A strict-scope agent only leaks "
            "dns-phase reports for subdomains."),
        agents=[
            AgentSpec(name="permissive"),
            AgentSpec(name="strict", subdomain_mode="strict"),
        ],
        dns={
            "pages.example": "192.0.2.50",
            "static.pages.example": "192.0.2.51",
            "broken.pages.example": "",
            "rogue-collector.example": "192.0.2.60",
        },
        servers={
            "pages.example": ServerSpec(ip="192.0.2.50", paths={
                "/alice/": PathSpec(headers=dict(rogue_headers)),
                "/": PathSpec(),
            }),
            "static.pages.example": ServerSpec(ip="192.0.2.51"),
            "rogue-collector.example": ServerSpec(ip="192.0.2.60"),
        },
        collectors={
            "rogue-collector.example": CollectorConfig(
                ip_mode="full", strip_url_query=False),
        },
        visits=visits,
    )


def _dns_firewall() -> ScenarioConfig:
    return ScenarioConfig(
        name="dns_firewall",
        description=(
            "A policy is installed while a tracking domain still resolves "
            "normally. A DNS firewall then remaps the domain to an invalid "
            "address; the next visit fails, and the report delivered to "
            "the still-reachable collector carries the remap target, "
            "revealing the firewall to the blocked party."),
        agents=[AgentSpec(name="user")],
        dns={
            "blocked.example": "198.51.100.7",
            "telemetry.example": "198.51.100.9",
        },
        servers={
            "blocked.example": ServerSpec(ip="198.51.100.7", paths={
                "/": PathSpec(headers={
                    "NEL": _nel("t", YEAR_S),
                    "Report-To": _group("t", "https://telemetry.example/up"),
                }),
            }),
            "telemetry.example": ServerSpec(ip="198.51.100.9"),
        },
        collectors={"telemetry.example": CollectorConfig()},
        dns_mutations=[
            DnsMutation(at=5_000, host="blocked.example", ip="10.66.0.1"),
        ],
        visits=[
            Visit(at=1_000, agent="user", url="https://blocked.example/"),
            Visit(at=10_000, agent="user", url="https://blocked.example/"),
        ],
    )


def _consent_gate() -> ScenarioConfig:
    return ScenarioConfig(
        name="consent_gate",
        description=(
            "An enforce-mode agent without recorded consent visits a "
            "NEL-deploying site: nothing installs and nothing is reported. "
            "Granting consent makes the same visit sequence behave exactly "
            "like a bypass-mode agent."),
        agents=[AgentSpec(name="user", consent_mode="enforce")],
        dns={
            "consent.example": "192.0.2.70",
            "consent-collector.example": "192.0.2.71",
        },
        servers={
            "consent.example": ServerSpec(ip="192.0.2.70", down=[(2_500, None)],
                                          paths={"/": PathSpec(headers={
                "NEL": _nel("cg", YEAR_S, success=1.0),
                "Report-To": _group("cg", "https://consent-collector.example/up"),
            })}),
            "consent-collector.example": ServerSpec(ip="192.0.2.71"),
        },
        collectors={"consent-collector.example": CollectorConfig()},
        visits=[
            Visit(at=1_000, agent="user", url="https://consent.example/"),
            Visit(at=2_000, agent="user", url="https://consent.example/"),
            Visit(at=3_000, agent="user", url="https://consent.example/"),
        ],
    )


def builtin_scenarios() -> dict[str, ScenarioConfig]:
    """Fresh instances of every builtin scenario, keyed by name."""
    builders = (_fig2_chain, _fig3_split_chain, _mitm_persistence,
                _rogue_creator, _dns_firewall, _mitigation_scrub, _consent_gate)
    return {config.name: config for config in (build() for build in builders)}
