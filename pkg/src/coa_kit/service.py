"""Small HTTP service for sharing playbook-bearing objects from a store.

Endpoints::

    POST /objects                 ingest a bundle
    GET  /objects/{id}[?modified] fetch one object (latest version by default)
    GET  /objects[?type=...]      list stored version keys

This borrows the feel of a TAXII objects endpoint but is not TAXII: there
are no collections, envelopes or pagination.
"""

from __future__ import annotations

import hmac
import json
import logging
from dataclasses import dataclass, fields
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import parse_qs, unquote, urlsplit

from coa_kit.codec import JsonSyntaxError, StructureError, dumps, parse_bundle, to_wire
from coa_kit.model import Bundle, MalformedIdentifier, MalformedTimestamp, parse_identifier, parse_timestamp
from coa_kit.store import NotFound, ObjectStore, StoreError, VersionConflict
from coa_kit.validate import validate_bundle

log = logging.getLogger(__name__)

REJECT_ON_ERROR = "reject-on-error"
ACCEPT_ALL = "accept-all"
POLICIES = (REJECT_ON_ERROR, ACCEPT_ALL)


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    store_root: str | None = None
    policy: str = REJECT_ON_ERROR
    token: str | None = None

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")

    @classmethod
    def from_file(cls, path: str, **overrides: Any) -> ServiceConfig:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("service config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown service config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def ingest(store: ObjectStore, bundle: Bundle, policy: str = REJECT_ON_ERROR) -> tuple[int, dict[str, Any]]:
    """Validate and store every object of ``bundle``.

    Returns an HTTP status and the summary body. Mixed outcomes are reported
    per object with status 200 overall; 409 is used only when nothing was
    stored and every rejection was a version conflict.
    """
    report = validate_bundle(bundle)
    results = []
    stored = conflicts = 0
    for index, obj in enumerate(bundle.objects):
        label = str(obj.id) if obj.id is not None else f"<{obj.type}>"
        obj_report = report.for_object(label)
        entry: dict[str, Any] = {
            "index": index,
            "id": label,
            "type": obj.type,
            "findings": [f.to_dict() for f in obj_report.findings],
        }
        if policy == REJECT_ON_ERROR and not obj_report.is_clean():
            entry.update(status="rejected", code=422, reason="validation errors")
        else:
            try:
                key = store.put(obj)
            except VersionConflict as exc:
                conflicts += 1
                entry.update(status="rejected", code=409, reason=str(exc))
            except StoreError as exc:
                entry.update(status="rejected", code=422, reason=str(exc))
            else:
                stored += 1
                entry.update(status="stored", code=201, modified=str(key.modified))
        results.append(entry)
    rejected = len(results) - stored
    status = 409 if results and stored == 0 and conflicts == rejected else 200
    return status, {"stored": stored, "rejected": rejected, "results": results}


class PlaybookService:
    """Request routing, independent of the HTTP server plumbing."""

    def __init__(self, config: ServiceConfig, store: ObjectStore | None = None) -> None:
        self.config = config
        self.store = store or ObjectStore(config.store_root)

    def handle(
        self, method: str, target: str, headers: dict[str, str], body: bytes = b""
    ) -> tuple[int, Any]:
        parts = urlsplit(target)
        path = parts.path.rstrip("/") or "/"
        query = parse_qs(parts.query)
        if path == "/objects":
            if method == "POST":
                return self._post(headers, body)
            if method == "GET":
                return self._list(query)
            return 405, {"error": f"{method} not allowed on /objects"}
        if path.startswith("/objects/"):
            if method != "GET":
                return 405, {"error": f"{method} not allowed on {path}"}
            return self._get(unquote(path[len("/objects/"):]), query)
        return 404, {"error": f"no route for {path}"}

    def _authorized(self, headers: dict[str, str]) -> bool:
        if not self.config.token:
            return True
        supplied = headers.get("authorization", "")
        expected = f"Bearer {self.config.token}"
        return hmac.compare_digest(supplied.encode(), expected.encode())

    def _post(self, headers: dict[str, str], body: bytes) -> tuple[int, Any]:
        if not self._authorized(headers):
            return 401, {"error": "missing or wrong bearer token"}
        try:
            bundle = parse_bundle(body)
        except (JsonSyntaxError, StructureError) as exc:
            return 400, {"error": str(exc)}
        return ingest(self.store, bundle, self.config.policy)

    def _get(self, raw_id: str, query: dict[str, list[str]]) -> tuple[int, Any]:
        try:
            ident = parse_identifier(raw_id)
            modified = parse_timestamp(query["modified"][0]) if "modified" in query else None
        except (MalformedIdentifier, MalformedTimestamp) as exc:
            return 400, {"error": str(exc)}
        try:
            return 200, to_wire(self.store.get(ident, modified))
        except NotFound as exc:
            return 404, {"error": str(exc)}

    def _list(self, query: dict[str, list[str]]) -> tuple[int, Any]:
        object_type = query["type"][0] if "type" in query else None
        return 200, [k.to_dict() for k in self.store.list(object_type)]


class _Handler(BaseHTTPRequestHandler):
    server: _Server
    protocol_version = "HTTP/1.1"

    def _dispatch(self) -> None:
        headers = {k.lower(): v for k, v in self.headers.items()}
        try:
            length = int(headers.get("content-length") or 0)
        except ValueError:
            length = -1
        try:
            if length < 0:
                status, payload = 400, {"error": "bad Content-Length"}
                self.close_connection = True
            else:
                body = self.rfile.read(length) if length else b""
                status, payload = self.server.service.handle(self.command, self.path, headers, body)
        except StoreError as exc:
            log.exception("store failure")
            status, payload = 500, {"error": str(exc)}
        data = dumps(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    do_GET = do_POST = do_PUT = do_DELETE = _dispatch

    def log_message(self, format: str, *args: Any) -> None:
        log.info("%s - %s", self.address_string(), format % args)


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, config: ServiceConfig, service: PlaybookService) -> None:
        self.service = service
        super().__init__((config.host, config.port), _Handler)


def make_server(config: ServiceConfig, store: ObjectStore | None = None) -> _Server:
    """Bind (but do not start) a server; port 0 picks a free port."""
    return _Server(config, PlaybookService(config, store))


def serve(config: ServiceConfig) -> None:
    server = make_server(config)
    host, port = server.server_address[:2]
    log.info("serving on http://%s:%s (store %s, policy %s)", host, port,
             server.service.store.root, config.policy)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
