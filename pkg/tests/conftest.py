import pytest

from pulselink.relay import RelayConfig, RelayServer


@pytest.fixture
def relay():
    """A started relay on an ephemeral loopback port."""
    server = RelayServer()
    server.start()
    yield server
    server.stop()


@pytest.fixture
def relay_factory():
    """Build relays with custom configs; all stopped on teardown."""
    servers: list[RelayServer] = []

    def make(config: RelayConfig | None = None) -> RelayServer:
        server = RelayServer(config=config)
        server.start()
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.stop()
