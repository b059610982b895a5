import json
import socket
import threading
import time
from pathlib import Path

import pytest
import uvicorn
from fastapi.testclient import TestClient

from scorer_service.app import ServiceConfig, create_app

SCHEMA_DIR = Path(__file__).parent / "schemas"


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def client() -> TestClient:
    return TestClient(create_app(ServiceConfig(max_batch=16)))


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class RunningService:
    """The app served over real HTTP for clients that need a socket."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.endpoint = f"http://{config.host}:{config.port}"
        uv_config = uvicorn.Config(create_app(config), host=config.host, port=config.port,
                                   log_level="error")
        self.server = uvicorn.Server(uv_config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def start(self):
        self.thread.start()
        deadline = time.monotonic() + 15
        import requests
        while time.monotonic() < deadline:
            try:
                if requests.get(self.endpoint + "/health", timeout=1).status_code == 200:
                    return self
            except requests.RequestException:
                time.sleep(0.05)
        raise RuntimeError("service did not come up")

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture(scope="session")
def live_service():
    service = RunningService(ServiceConfig(port=_free_port(), max_batch=256))
    service.start()
    yield service
    service.stop()
