"""Wire formats for Network Error Logging.

Parses and serializes the ``NEL`` and ``Report-To`` HTTP header values and
the report-batch upload body (``application/reports+json``). Parsing is
strict about member types and value ranges but ignores unknown members, so
the codec stays total on real-world headers. Serialization omits members
that equal their defaults; parsing fills the defaults back in, so
serialize/parse round-trips are exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from urllib.parse import urlsplit

REPORT_MEDIA_TYPE = "application/reports+json"

# Per-header-value cap. Real policies are well under 1 KiB; anything larger
# is hostile or broken.
MAX_HEADER_BYTES = 16 * 1024

REPORT_PHASES = ("dns", "connection", "application")


class ParseError(ValueError):
    """Raised when a header value or report batch is malformed.

    ``index`` is set when the error is attributable to one element of a
    report batch.
    """

    def __init__(self, message: str, index: int | None = None):
        if index is not None:
            message = f"element {index}: {message}"
        super().__init__(message)
        self.index = index


class Removal:
    """Sentinel parse result for a policy with ``max_age`` 0.

    A zero lifetime instructs the browser to delete any stored policy for
    the host instead of installing one.
    """

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return "Removal"


REMOVAL = Removal()


@dataclass
class NelPolicyHeader:
    """A parsed ``NEL`` header value."""

    report_to: str
    max_age: int
    include_subdomains: bool = False
    success_fraction: float = 0.0
    failure_fraction: float = 1.0
    request_headers: list[str] = field(default_factory=list)
    response_headers: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.max_age < 0:
            raise ValueError("max_age must be non-negative")
        for name in ("success_fraction", "failure_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1]")
            setattr(self, name, float(value))


@dataclass(frozen=True)
class Endpoint:
    """One upload URL within an endpoint group."""

    url: str
    priority: int = 1
    weight: int = 1

    def __post_init__(self):
        parts = urlsplit(self.url)
        if parts.scheme != "https" or not parts.netloc:
            raise ValueError(f"endpoint URL must be absolute https: {self.url!r}")
        if self.priority < 0:
            raise ValueError("priority must be non-negative")
        if self.weight < 1:
            raise ValueError("weight must be positive")


@dataclass
class EndpointGroup:
    """A parsed ``Report-To`` group: a named set of collector endpoints."""

    name: str
    max_age: int
    endpoints: list[Endpoint]
    include_subdomains: bool = False

    def __post_init__(self):
        if self.max_age < 0:
            raise ValueError("max_age must be non-negative")
        if not self.endpoints:
            raise ValueError("endpoint list must not be empty")


@dataclass
class ReportBody:
    """The ``body`` member of a network-error report, in wire order."""

    sampling_fraction: float
    referrer: str
    server_ip: str
    protocol: str
    method: str
    request_headers: dict[str, str]
    response_headers: dict[str, str]
    status_code: int
    elapsed_time: int
    phase: str
    type: str

    def to_dict(self) -> dict:
        return {
            "sampling_fraction": self.sampling_fraction,
            "referrer": self.referrer,
            "server_ip": self.server_ip,
            "protocol": self.protocol,
            "method": self.method,
            "request_headers": dict(self.request_headers),
            "response_headers": dict(self.response_headers),
            "status_code": self.status_code,
            "elapsed_time": self.elapsed_time,
            "phase": self.phase,
            "type": self.type,
        }


@dataclass
class NelReport:
    """One queued or delivered network-error report."""

    age: int
    url: str
    body: ReportBody
    type: str = "network-error"

    def to_dict(self) -> dict:
        return {
            "age": self.age,
            "type": self.type,
            "url": self.url,
            "body": self.body.to_dict(),
        }


def _check_size(raw: str) -> None:
    if len(raw.encode("utf-8")) > MAX_HEADER_BYTES:
        raise ParseError(f"header value exceeds {MAX_HEADER_BYTES} bytes")


def _member(obj: dict, name: str, kind, default=None, required=False):
    """Fetch and type-check one JSON member; bool is never a number."""
    if name not in obj:
        if required:
            raise ParseError(f"missing required member {name!r}")
        return default
    value = obj[name]
    if isinstance(value, bool) and kind is not bool:
        raise ParseError(f"member {name!r} has wrong type")
    if not isinstance(value, kind):
        raise ParseError(f"member {name!r} has wrong type")
    return value


def parse_nel_header(raw: str) -> NelPolicyHeader | Removal:
    """Parse a ``NEL`` header value.

    Returns :data:`REMOVAL` when the value carries ``max_age`` 0; the
    removal signal is honored regardless of other members, since nothing is
    going to be stored. Raises :class:`ParseError` on malformed JSON, wrong
    member types, fractions outside [0, 1], negative max_age, or a missing
    report_to when max_age > 0.
    """
    _check_size(raw)
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ParseError("header value must be one JSON object")

    max_age = _member(obj, "max_age", int, required=True)
    if max_age < 0:
        raise ParseError("max_age must be non-negative")
    if max_age == 0:
        return REMOVAL

    report_to = _member(obj, "report_to", str, required=True)
    include_subdomains = _member(obj, "include_subdomains", bool, default=False)
    success_fraction = _member(obj, "success_fraction", (int, float), default=0.0)
    failure_fraction = _member(obj, "failure_fraction", (int, float), default=1.0)
    for name, value in (("success_fraction", success_fraction),
                        ("failure_fraction", failure_fraction)):
        if not 0.0 <= value <= 1.0:
            raise ParseError(f"{name} outside [0, 1]")

    captures = {}
    for name in ("request_headers", "response_headers"):
        values = _member(obj, name, list, default=[])
        if not all(isinstance(v, str) for v in values):
            raise ParseError(f"member {name!r} must be a list of header names")
        captures[name] = list(values)

    return NelPolicyHeader(
        report_to=report_to,
        max_age=max_age,
        include_subdomains=include_subdomains,
        success_fraction=float(success_fraction),
        failure_fraction=float(failure_fraction),
        request_headers=captures["request_headers"],
        response_headers=captures["response_headers"],
    )


def serialize_nel_header(policy: NelPolicyHeader) -> str:
    """Serialize a policy back to a ``NEL`` header value, omitting defaults."""
    obj: dict = {"report_to": policy.report_to, "max_age": policy.max_age}
    if policy.include_subdomains:
        obj["include_subdomains"] = True
    if policy.success_fraction != 0.0:
        obj["success_fraction"] = policy.success_fraction
    if policy.failure_fraction != 1.0:
        obj["failure_fraction"] = policy.failure_fraction
    if policy.request_headers:
        obj["request_headers"] = policy.request_headers
    if policy.response_headers:
        obj["response_headers"] = policy.response_headers
    return json.dumps(obj, separators=(",", ":"))


REMOVAL_HEADER = '{"max_age":0}'


def _parse_group(obj: dict) -> EndpointGroup:
    name = _member(obj, "group", str, default="default")
    max_age = _member(obj, "max_age", int, required=True)
    if max_age < 0:
        raise ParseError("max_age must be non-negative")
    include_subdomains = _member(obj, "include_subdomains", bool, default=False)
    raw_endpoints = _member(obj, "endpoints", list, required=True)
    if not raw_endpoints:
        raise ParseError("endpoints list must not be empty")
    endpoints = []
    for entry in raw_endpoints:
        if not isinstance(entry, dict):
            raise ParseError("endpoint entry must be a JSON object")
        url = _member(entry, "url", str, required=True)
        priority = _member(entry, "priority", int, default=1)
        weight = _member(entry, "weight", int, default=1)
        try:
            endpoints.append(Endpoint(url=url, priority=priority, weight=weight))
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    return EndpointGroup(
        name=name,
        max_age=max_age,
        endpoints=endpoints,
        include_subdomains=include_subdomains,
    )


def parse_report_to_header(raw: str) -> list[EndpointGroup]:
    """Parse a ``Report-To`` header value: comma-separated JSON group objects."""
    _check_size(raw)
    decoder = json.JSONDecoder()
    groups: list[EndpointGroup] = []
    pos = 0
    length = len(raw)
    while True:
        while pos < length and raw[pos] in " \t":
            pos += 1
        if pos >= length:
            break
        try:
            obj, pos = decoder.raw_decode(raw, pos)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise ParseError("group value must be a JSON object")
        groups.append(_parse_group(obj))
        while pos < length and raw[pos] in " \t":
            pos += 1
        if pos < length:
            if raw[pos] != ",":
                raise ParseError(f"unexpected character at offset {pos}")
            pos += 1
    if not groups:
        raise ParseError("header value contains no groups")
    return groups


def serialize_report_to_header(groups: list[EndpointGroup]) -> str:
    """Serialize endpoint groups to a ``Report-To`` header value."""
    chunks = []
    for group in groups:
        endpoints = []
        for ep in group.endpoints:
            entry: dict = {"url": ep.url}
            if ep.priority != 1:
                entry["priority"] = ep.priority
            if ep.weight != 1:
                entry["weight"] = ep.weight
            endpoints.append(entry)
        obj: dict = {"group": group.name, "max_age": group.max_age}
        if group.include_subdomains:
            obj["include_subdomains"] = True
        obj["endpoints"] = endpoints
        chunks.append(json.dumps(obj, separators=(",", ":")))
    return ", ".join(chunks)


def serialize_report_batch(reports: list[NelReport]) -> bytes:
    """Serialize a delivery batch as a UTF-8 JSON array in queue order.

    All reports must be destined for the same endpoint; an empty batch is a
    contract violation.
    """
    if not reports:
        raise ValueError("report batch must not be empty")
    return json.dumps([r.to_dict() for r in reports]).encode("utf-8")


_BODY_CHECKS = {
    "sampling_fraction": (int, float),
    "referrer": str,
    "server_ip": str,
    "protocol": str,
    "method": str,
    "request_headers": dict,
    "response_headers": dict,
    "status_code": int,
    "elapsed_time": int,
    "phase": str,
    "type": str,
}


def _parse_report(obj, index: int) -> NelReport:
    if not isinstance(obj, dict):
        raise ParseError("report must be a JSON object", index=index)

    def member(container: dict, name: str, kind):
        if name not in container:
            raise ParseError(f"missing member {name!r}", index=index)
        value = container[name]
        if isinstance(value, bool) or not isinstance(value, kind):
            raise ParseError(f"member {name!r} has wrong type", index=index)
        return value

    age = member(obj, "age", int)
    if age < 0:
        raise ParseError("age must be non-negative", index=index)
    rtype = member(obj, "type", str)
    if rtype != "network-error":
        raise ParseError(f"unsupported report type {rtype!r}", index=index)
    url = member(obj, "url", str)
    raw_body = member(obj, "body", dict)

    values = {}
    for name, kind in _BODY_CHECKS.items():
        values[name] = member(raw_body, name, kind)
    if not 0.0 <= values["sampling_fraction"] <= 1.0:
        raise ParseError("sampling_fraction outside [0, 1]", index=index)
    if values["phase"] not in REPORT_PHASES:
        raise ParseError(f"unknown phase {values['phase']!r}", index=index)
    for name in ("request_headers", "response_headers"):
        if not all(isinstance(k, str) and isinstance(v, str)
                   for k, v in values[name].items()):
            raise ParseError(f"member {name!r} must map names to values", index=index)

    values["sampling_fraction"] = float(values["sampling_fraction"])
    return NelReport(age=age, url=url, body=ReportBody(**values))


def parse_report_batch(data: bytes) -> list[NelReport]:
    """Parse a report-batch body; the inverse of :func:`serialize_report_batch`."""
    try:
        parsed = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid JSON body: {exc}") from None
    if not isinstance(parsed, list):
        raise ParseError("report batch must be a JSON array")
    return [_parse_report(obj, i) for i, obj in enumerate(parsed)]
