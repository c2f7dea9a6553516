"""HTTP/1.1 binding for the service host.

Routes:
    POST /services/{name}          secured SOAP request (text/xml)
    GET  /services/{name}?wsdl     token-gated WSDL (X-Session-Token header)
    POST /auth/password            local password login -> session token
    POST /auth/challenge           PKI challenge issuance
    POST /auth/response            PKI challenge response -> session token
    POST /auth/delegate            delegated login -> single-session token
    GET  /admin/pending            pending approvals
    POST /admin/decision           operator decision
    POST /admin/busy               busy-mode toggle
    GET  /admin/stats              live phase-timing aggregates
    GET  /console/...              static operator console assets

Each TCP connection gets a stable identity string ("ip#serial"); keep-alive
lets a delegated login and the following service call share one session.
Admin routes accept loopback peers only (unless configured otherwise) plus
the shared admin secret.
"""

from __future__ import annotations

import hmac
import itertools
import json
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import crypto
from .envelope import canonical_serialize
from .errors import (
    AdminAuthFailed,
    AlreadyDecided,
    AuthServiceUnreachable,
    EndpointError,
    PocketHostError,
    UnknownRequestId,
    UnknownService,
)
from .host import FAULT_AUTH, FAULT_AUTHZ, FAULT_CLIENT, ServiceHost, _AuthzRefused, fault_envelope

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
}


class HostHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, service_host: ServiceHost):
        self.service_host = service_host
        self.connection_serial = itertools.count(1)
        address = (service_host.config.listen_host, service_host.config.listen_port)
        super().__init__(address, _Handler)

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def setup(self):
        super().setup()
        # one identity per TCP connection: keep-alive requests share it
        self.connection_id = next(self.server.connection_serial)

    @property
    def source(self) -> str:
        return f"{self.client_address[0]}#{self.connection_id}"

    @property
    def host(self) -> ServiceHost:
        return self.server.service_host

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- plumbing ------------------------------------------------------------

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, payload) -> None:
        self._send(status, json.dumps(payload).encode("utf-8"), "application/json")

    def _send_fault(self, status: int, code: str, detail: str) -> None:
        self._send(status, canonical_serialize(fault_envelope(code, detail)),
                   "text/xml; charset=utf-8")

    def _json_body(self) -> dict:
        try:
            payload = json.loads(self._read_body().decode("utf-8"))
        except ValueError:
            raise PocketHostError("request body must be JSON") from None
        if not isinstance(payload, dict):
            raise PocketHostError("request body must be a JSON object")
        return payload

    def _check_admin(self) -> None:
        peer = self.client_address[0]
        local = peer.startswith("127.") or peer in ("::1", "localhost")
        if not local and not self.host.config.admin_allow_remote:
            raise AdminAuthFailed("admin API is loopback-only")
        secret = self.headers.get("X-Admin-Secret", "")
        if not hmac.compare_digest(secret, self.host.config.admin_secret):
            raise AdminAuthFailed("bad admin credential")

    def _token_json(self, token) -> dict:
        return {
            "token_id": crypto.b64encode(token.token_id),
            "principal_id": token.principal_id,
            "issued": token.issued,
            "expires": token.expires,
            "single_use_service": token.single_use_service,
        }

    # -- routing ---------------------------------------------------------------

    def do_POST(self):
        path = urllib.parse.urlsplit(self.path).path
        try:
            if path.startswith("/services/"):
                self._post_service(urllib.parse.unquote(path[len("/services/"):]))
            elif path == "/auth/password":
                self._post_auth_password()
            elif path == "/auth/challenge":
                self._post_auth_challenge()
            elif path == "/auth/response":
                self._post_auth_response()
            elif path == "/auth/delegate":
                self._post_auth_delegate()
            elif path == "/admin/decision":
                self._check_admin()
                self._post_admin_decision()
            elif path == "/admin/busy":
                self._check_admin()
                payload = self._json_body()
                self._send_json(200, self.host.set_busy(bool(payload.get("busy"))))
            else:
                self._send_json(404, {"error": f"no such endpoint {path}"})
        except PocketHostError as exc:
            self._send_error(exc)

    def do_GET(self):
        url = urllib.parse.urlsplit(self.path)
        try:
            if url.path.startswith("/services/") and url.query == "wsdl":
                self._get_wsdl(urllib.parse.unquote(url.path[len("/services/"):]))
            elif url.path == "/admin/pending":
                self._check_admin()
                self._send_json(200, self.host.pending_approvals())
            elif url.path == "/admin/stats":
                self._check_admin()
                self._send_json(200, self.host.stats())
            elif url.path.startswith("/console"):
                self._get_console(url.path)
            else:
                self._send_json(404, {"error": f"no such endpoint {url.path}"})
        except PocketHostError as exc:
            self._send_error(exc)

    def _send_error(self, exc: PocketHostError) -> None:
        status, payload = 400, {"error": str(exc), "kind": type(exc).__name__}
        if isinstance(exc, AdminAuthFailed):
            status = 401
        elif isinstance(exc, AuthServiceUnreachable):
            status = 502
        elif isinstance(exc, UnknownRequestId):
            status = 404
        elif isinstance(exc, AlreadyDecided):
            status = 409
        elif isinstance(exc, EndpointError):
            status = 401
        self._send_json(status, payload)

    # -- handlers ---------------------------------------------------------------

    def _post_service(self, service: str) -> None:
        raw = self._read_body()
        out, _timings, fault_code = self.host.handle_request_http(raw, self.source, service)
        self._send(500 if fault_code else 200, out, "text/xml; charset=utf-8")

    def _get_wsdl(self, service: str) -> None:
        token_b64 = self.headers.get("X-Session-Token", "")
        if not token_b64:
            self._send_fault(401, FAULT_AUTH, "missing session token")
            return
        try:
            token_id = crypto.b64decode_strict(token_b64)
            doc = self.host.get_wsdl(service, token_id, source=self.source)
            self._send(200, doc, "application/xml")
        except UnknownService as exc:
            self._send_fault(404, FAULT_CLIENT, str(exc))
        except _AuthzRefused as exc:
            self._send_fault(403, FAULT_AUTHZ, str(exc))
        except PocketHostError as exc:
            self._send_fault(401, FAULT_AUTH, str(exc))

    def _post_auth_password(self) -> None:
        payload = self._json_body()
        if not self.host.config.local_auth:
            self._send_json(403, {"error": "local authentication disabled on this host"})
            return
        token = self.host.authenticator.authenticate_password(
            str(payload.get("principal_id", "")), str(payload.get("password", "")))
        self._send_json(200, self._token_json(token))

    def _post_auth_challenge(self) -> None:
        payload = self._json_body()
        challenge = self.host.authenticator.issue_challenge(str(payload.get("principal_id", "")))
        self._send_json(200, {"challenge": crypto.b64encode(challenge)})

    def _post_auth_response(self) -> None:
        payload = self._json_body()
        token = self.host.authenticator.verify_challenge(
            str(payload.get("principal_id", "")),
            crypto.b64decode_strict(str(payload.get("signature", ""))))
        self._send_json(200, self._token_json(token))

    def _post_auth_delegate(self) -> None:
        payload = self._json_body()
        endpoint = self.host.config.delegate_auth_endpoint
        if not endpoint:
            self._send_json(400, {"error": "delegated authentication not configured"})
            return
        token = self.host.authenticator.delegate_authenticate(
            str(payload.get("principal_id", "")), str(payload.get("password", "")),
            endpoint, self.source, str(payload.get("service", "")))
        self._send_json(200, self._token_json(token))

    def _post_admin_decision(self) -> None:
        payload = self._json_body()
        result = self.host.submit_decision(str(payload.get("request_id", "")),
                                           str(payload.get("outcome", "")))
        self._send_json(200, result)

    def _get_console(self, path: str) -> None:
        import os

        root = self.host.config.console_dir
        if not root:
            self._send_json(404, {"error": "no console assets configured"})
            return
        rel = path[len("/console"):].lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(root, rel))
        if not full.startswith(os.path.realpath(root) + os.sep) and full != os.path.realpath(root):
            self._send_json(404, {"error": "not found"})
            return
        if not os.path.isfile(full):
            self._send_json(404, {"error": "not found"})
            return
        ext = os.path.splitext(full)[1]
        with open(full, "rb") as fh:
            self._send(200, fh.read(), _CONTENT_TYPES.get(ext, "application/octet-stream"))


def serve(service_host: ServiceHost) -> HostHTTPServer:
    """Construct and return the HTTP server (caller decides threading)."""
    return HostHTTPServer(service_host)
