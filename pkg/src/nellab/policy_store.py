"""Browser-side cache of NEL policies.

One entry per host, last writer wins. Policies expire after ``max_age``
seconds (lifetimes up to centuries are representable), match subdomains
when flagged, are deleted by a ``max_age=0`` header, and, in ``enforce``
consent mode, are only stored for hosts the user has consented to.

Single-writer, multiple-reader: all mutations must come from one logical
owner. The simulator drives each store single-threaded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .headers import (
    Endpoint,
    EndpointGroup,
    NelPolicyHeader,
    ParseError,
    Removal,
    parse_nel_header,
    parse_report_to_header,
)

CONSENT_ENFORCE = "enforce"
CONSENT_BYPASS = "bypass"

SUBDOMAINS_PERMISSIVE = "permissive"
SUBDOMAINS_STRICT = "strict"


@dataclass
class StoredPolicy:
    """A policy cached for one host, with the groups it was delivered with."""

    host: str
    policy: NelPolicyHeader
    groups: list[EndpointGroup]
    received_at: int
    expires_at: int

    def endpoint_group(self) -> EndpointGroup:
        """The group named by the policy; guaranteed present at install time."""
        for group in self.groups:
            if group.name == self.policy.report_to:
                return group
        raise LookupError(f"group {self.policy.report_to!r} missing from store entry")


@dataclass(frozen=True)
class StoreEffect:
    """Outcome of processing one response's policy headers."""

    kind: str  # installed | replaced | removed | ignored
    reason: str | None = None


def superdomains(host: str) -> list[str]:
    """Strict label-suffix superdomains, most specific first."""
    labels = host.split(".")
    return [".".join(labels[i:]) for i in range(1, len(labels))]


class PolicyStore:
    """Policy cache plus consent ledger for one browser agent."""

    def __init__(self, consent_mode: str = CONSENT_BYPASS,
                 subdomain_mode: str = SUBDOMAINS_PERMISSIVE):
        if consent_mode not in (CONSENT_ENFORCE, CONSENT_BYPASS):
            raise ValueError(f"unknown consent mode {consent_mode!r}")
        if subdomain_mode not in (SUBDOMAINS_PERMISSIVE, SUBDOMAINS_STRICT):
            raise ValueError(f"unknown subdomain mode {subdomain_mode!r}")
        self.consent_mode = consent_mode
        self.subdomain_mode = subdomain_mode
        self._entries: dict[str, StoredPolicy] = {}
        self._consent: dict[str, bool] = {}

    # -- header processing -------------------------------------------------

    def process_policy_headers(self, host: str, secure: bool, nel: str | None,
                               report_to: str | None, now: int) -> StoreEffect:
        """Apply one response's NEL/Report-To headers to the store.

        Never raises on hostile input: every failure becomes an
        ``ignored(reason)`` effect.
        """
        host = host.lower()
        if not secure:
            return StoreEffect("ignored", "insecure")
        if nel is None:
            return StoreEffect("ignored", "no_header")
        try:
            parsed = parse_nel_header(nel)
        except ParseError:
            return StoreEffect("ignored", "parse_error")

        if isinstance(parsed, Removal):
            # Deletion stores nothing, so it bypasses the consent gate.
            self._entries.pop(host, None)
            return StoreEffect("removed")

        if report_to is None:
            return StoreEffect("ignored", "unknown_group")
        try:
            groups = parse_report_to_header(report_to)
        except ParseError:
            return StoreEffect("ignored", "parse_error")
        if not any(g.name == parsed.report_to for g in groups):
            return StoreEffect("ignored", "unknown_group")

        if self.consent_mode == CONSENT_ENFORCE and not self._consent.get(host):
            return StoreEffect("ignored", "no_consent")

        replaced = host in self._entries
        self._entries[host] = StoredPolicy(
            host=host,
            policy=parsed,
            groups=groups,
            received_at=now,
            expires_at=now + parsed.max_age * 1000,
        )
        return StoreEffect("replaced" if replaced else "installed")

    # -- queries ------------------------------------------------------------

    def lookup(self, host: str, now: int) -> tuple[StoredPolicy, str, bool] | None:
        """Find the policy governing ``host``.

        Exact entry wins; otherwise the most specific unexpired superdomain
        entry with ``include_subdomains`` set. Expired entries behave as
        absent and are evicted on the way.
        """
        host = host.lower()
        entry = self._entries.get(host)
        if entry is not None:
            if entry.expires_at <= now:
                del self._entries[host]
            else:
                return entry, host, False
        for sup in superdomains(host):
            entry = self._entries.get(sup)
            if entry is None:
                continue
            if entry.expires_at <= now:
                del self._entries[sup]
                continue
            if entry.policy.include_subdomains:
                return entry, sup, True
        return None

    def hosts(self) -> list[str]:
        return list(self._entries)

    def consent(self, host: str) -> bool:
        return self._consent.get(host.lower(), False)

    # -- mutation -----------------------------------------------------------

    def set_consent(self, host: str, granted: bool) -> None:
        host = host.lower()
        self._consent[host] = granted
        if not granted and self.consent_mode == CONSENT_ENFORCE:
            self._entries.pop(host, None)

    def evict_expired(self, now: int) -> int:
        expired = [h for h, e in self._entries.items() if e.expires_at <= now]
        for host in expired:
            del self._entries[host]
        return len(expired)

    def clear_browsing_data(self) -> int:
        count = len(self._entries)
        self._entries.clear()
        self._consent.clear()
        return count

    # -- snapshots ------------------------------------------------------------

    def export_snapshot(self) -> str:
        """All stored policies as a JSON document, for golden tests."""
        entries = []
        for stored in self._entries.values():
            policy = stored.policy
            entries.append({
                "host": stored.host,
                "policy": {
                    "report_to": policy.report_to,
                    "max_age": policy.max_age,
                    "include_subdomains": policy.include_subdomains,
                    "success_fraction": policy.success_fraction,
                    "failure_fraction": policy.failure_fraction,
                    "request_headers": policy.request_headers,
                    "response_headers": policy.response_headers,
                },
                "groups": [
                    {
                        "group": g.name,
                        "max_age": g.max_age,
                        "include_subdomains": g.include_subdomains,
                        "endpoints": [
                            {"url": e.url, "priority": e.priority, "weight": e.weight}
                            for e in g.endpoints
                        ],
                    }
                    for g in stored.groups
                ],
                "received_at": stored.received_at,
                "expires_at": stored.expires_at,
            })
        return json.dumps(entries, indent=2, sort_keys=True)

    def import_snapshot(self, document: str) -> None:
        """Replace the store contents with a previously exported snapshot."""
        entries = json.loads(document)
        self._entries.clear()
        for entry in entries:
            groups = [
                EndpointGroup(
                    name=g["group"],
                    max_age=g["max_age"],
                    include_subdomains=g["include_subdomains"],
                    endpoints=[Endpoint(**e) for e in g["endpoints"]],
                )
                for g in entry["groups"]
            ]
            self._entries[entry["host"]] = StoredPolicy(
                host=entry["host"],
                policy=NelPolicyHeader(**entry["policy"]),
                groups=groups,
                received_at=entry["received_at"],
                expires_at=entry["expires_at"],
            )
