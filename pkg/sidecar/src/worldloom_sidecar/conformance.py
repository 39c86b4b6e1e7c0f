"""Golden-fixture conformance: replay requests, validate response schemas.

The golden directory is produced by the primary component's protocol tests:
`NNN_request.json` holds {endpoint, body}; `NNN_response_schema.json` holds
the JSON Schema every conforming response must satisfy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
from fastapi.testclient import TestClient

from .config import ROLE_ENDPOINTS, SidecarConfig
from .service import create_app

ENDPOINT_ROLE = {
    endpoint: role for role, endpoints in ROLE_ENDPOINTS.items() for endpoint in endpoints
}


@dataclass
class FixtureResult:
    fixture: str
    endpoint: str
    ok: bool
    message: str = ""


@dataclass
class ConformanceReport:
    ok: bool
    results: list[FixtureResult] = field(default_factory=list)
    message: str = ""

    def summary_lines(self) -> list[str]:
        lines = [
            f"{'PASS' if r.ok else 'FAIL'} {r.fixture} {r.endpoint}"
            + (f" -- {r.message}" if r.message else "")
            for r in self.results
        ]
        if self.message:
            lines.append(self.message)
        lines.append("conformance: " + ("PASS" if self.ok else "FAIL"))
        return lines


def conformance(golden_dir: str | Path, configs: dict[str, SidecarConfig] | None = None) -> ConformanceReport:
    """Replay every golden request against the stub services for each role."""
    root = Path(golden_dir)
    if not root.is_dir():
        return ConformanceReport(
            ok=False, message=f"golden directory not found: {root}"
        )
    request_files = sorted(root.glob("*_request.json"))
    if not request_files:
        return ConformanceReport(
            ok=False, message=f"golden directory holds no *_request.json files: {root}"
        )

    clients: dict[str, TestClient] = {}

    def client_for(role: str) -> TestClient:
        if role not in clients:
            config = (configs or {}).get(role) or SidecarConfig(role=role)
            clients[role] = TestClient(create_app(config))
        return clients[role]

    results = []
    for req_path in request_files:
        name = req_path.name
        schema_path = root / name.replace("_request.json", "_response_schema.json")
        try:
            request_doc = json.loads(req_path.read_text(encoding="utf-8"))
            endpoint = request_doc["endpoint"]
            body = request_doc["body"]
            schema = json.loads(schema_path.read_text(encoding="utf-8"))
        except (OSError, ValueError, KeyError) as exc:
            results.append(FixtureResult(name, "?", False, f"unreadable fixture: {exc}"))
            continue
        role = ENDPOINT_ROLE.get(endpoint)
        if role is None:
            results.append(FixtureResult(name, endpoint, False, "unknown endpoint"))
            continue
        response = client_for(role).post(endpoint, json=body)
        if response.status_code != 200:
            results.append(
                FixtureResult(
                    name, endpoint, False,
                    f"status {response.status_code}: {response.text[:200]}",
                )
            )
            continue
        try:
            jsonschema.validate(response.json(), schema)
        except jsonschema.ValidationError as exc:
            results.append(FixtureResult(name, endpoint, False, exc.message))
            continue
        results.append(FixtureResult(name, endpoint, True))
    return ConformanceReport(ok=all(r.ok for r in results), results=results)
