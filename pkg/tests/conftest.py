import threading

import pytest

from nellab.collector import Collector, CollectorConfig, make_server

# The canonical example report; several suites assert against it verbatim.
FIG1_REPORT = {
    "age": 0,
    "type": "network-error",
    "url": "https://www.example.com/",
    "body": {
        "sampling_fraction": 0.5,
        "referrer": "http://example.com/",
        "server_ip": "2001:DB8:0:0:0:0:0:42",
        "protocol": "h2",
        "method": "GET",
        "request_headers": {},
        "response_headers": {},
        "status_code": 200,
        "elapsed_time": 823,
        "phase": "application",
        "type": "http.protocol.error",
    },
}


@pytest.fixture
def fig1_report() -> dict:
    import copy

    return copy.deepcopy(FIG1_REPORT)


@pytest.fixture
def http_collector():
    """Factory starting a real collector HTTP server on an ephemeral port."""
    servers = []

    def start(config: CollectorConfig) -> tuple[Collector, str]:
        collector = Collector(config)
        server = make_server(collector, "127.0.0.1", 0)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append(server)
        host, port = server.server_address[:2]
        return collector, f"http://{host}:{port}"

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()
