#!/usr/bin/env python3
"""Show how long an injected policy keeps leaking after a MitM window.

Runs mitm_persistence and mitigation_scrub side by side and prints a
day-by-day timeline of attacker-bound deliveries, which makes the
asymmetry obvious: injection takes minutes, persistence lasts as long as
max_age, and only a max_age=0 scrub ends it early.
"""

import sys
from pathlib import Path
from urllib.parse import urlsplit

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from nellab.sim import DAY_MS, builtin_scenarios, run_scenario  # noqa: E402

ATTACKER = "evil-collector.example"


def describe(name: str) -> None:
    config = builtin_scenarios()[name]
    window = config.mitm_windows[0]
    trace = run_scenario(config)

    print(f"--- {name} ---")
    print(f"MitM window: {window.start / 1000:.0f}s .. {window.end / 1000:.0f}s")
    print(f"injected NEL: {window.headers['NEL']}")
    for event in trace.events:
        if event.kind == "policy_installed":
            print(f"  t={event.at / 1000:>12.0f}s  policy installed "
                  f"(max_age {event.data['max_age']}s)")
        if event.kind == "policy_removed":
            print(f"  t={event.at / 1000:>12.0f}s  policy scrubbed by max_age=0")
        if event.kind == "delivery_attempt":
            host = urlsplit(event.data["endpoint"]).hostname
            if host == ATTACKER and event.data["result"] == "delivered":
                days_after = (event.at - window.end) / DAY_MS
                print(f"  t={event.at / 1000:>12.0f}s  report delivered to "
                      f"attacker ({days_after:+.1f} days after window)")
    print()


def main() -> int:
    describe("mitm_persistence")
    describe("mitigation_scrub")
    return 0


if __name__ == "__main__":
    sys.exit(main())
