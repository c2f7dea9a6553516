"""The matching web-service client.

Builds the request (t_cc), secures it (t_reqec), serializes (t_reqs), sends
it over HTTP, then deserializes (t_resd), checks and decrypts (t_resdc) and
extracts the result (t_cp). Those six client-side phases come back with
every invocation; transmission and host phases belong to the host/loopback
harness.
"""

from __future__ import annotations

import http.client
import json
import urllib.parse
from dataclasses import dataclass

from . import crypto, msgsec, services
from .crypto import CryptoProfile, KeyPair
from .envelope import Element, Envelope, canonical_serialize, element, parse_envelope, request_envelope
from .errors import HostFault, MsgSecError, ResponseTampered, TransportError
from .host import fault_of
from .msgsec import PasswordClaim, SessionClaim, TrustedPeers
from .timing import PhaseClock, PhaseTimings


@dataclass
class PasswordCredentials:
    principal_id: str
    password: str


@dataclass
class KeyCredentials:
    """PKI path: prove possession of the registered private key."""
    principal_id: str
    keypair: KeyPair


@dataclass
class InvocationSpec:
    endpoint: str
    service: str
    operation: str
    params: list[tuple[str, str]]
    profile: CryptoProfile
    credentials: PasswordCredentials | KeyCredentials
    signing_keys: dict[str, KeyPair]          # own private keys by algorithm
    host_transport_public: dict[int, KeyPair]  # host RSA wrap keys by bits
    host_signing_public: dict[str, KeyPair]    # host verify keys by algorithm
    signer_id: str = "client"
    host_id: str = "host"

    def __post_init__(self):
        if self.profile.signature == "RSAwithSHA1" and "RSA" not in self.signing_keys:
            raise ValueError("profile needs an RSA signing key")
        if self.profile.signature == "DSAwithSHA1" and "DSA" not in self.signing_keys:
            raise ValueError("profile needs a DSA signing key")
        if not all(name for name, _ in self.params):
            raise ValueError("parameter names must be non-empty")

    def host_trust(self) -> TrustedPeers:
        trust = TrustedPeers()
        for key in self.host_signing_public.values():
            trust.add(self.host_id, key)
        return trust


@dataclass
class InvocationResult:
    result: Element
    timings: PhaseTimings
    request_octets: int = 0
    response_octets: int = 0


class HttpTransport:
    """One persistent HTTP/1.1 connection; POSTs envelopes and JSON."""

    def __init__(self, endpoint: str, timeout_s: float = 60.0):
        url = urllib.parse.urlsplit(endpoint)
        if url.scheme not in ("http", ""):
            raise TransportError(f"unsupported scheme {url.scheme!r}")
        self.host = url.hostname or "127.0.0.1"
        self.port = url.port or 80
        self.timeout_s = timeout_s
        self._conn: http.client.HTTPConnection | None = None

    def _connection(self) -> http.client.HTTPConnection:
        if self._conn is None:
            self._conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout_s)
        return self._conn

    def send_envelope(self, service: str, raw: bytes) -> bytes:
        try:
            conn = self._connection()
            conn.request("POST", f"/services/{urllib.parse.quote(service)}", raw,
                         {"Content-Type": "text/xml; charset=utf-8"})
            resp = conn.getresponse()
            body = resp.read()
        except (OSError, http.client.HTTPException) as exc:
            self.close()
            raise TransportError(f"exchange failed: {exc}") from None
        if resp.status not in (200, 500):
            raise TransportError(f"unexpected HTTP status {resp.status}")
        return body

    def post_json(self, path: str, payload: dict) -> tuple[int, dict]:
        try:
            conn = self._connection()
            conn.request("POST", path, json.dumps(payload).encode("utf-8"),
                         {"Content-Type": "application/json"})
            resp = conn.getresponse()
            body = resp.read()
        except (OSError, http.client.HTTPException) as exc:
            self.close()
            raise TransportError(f"exchange failed: {exc}") from None
        try:
            parsed = json.loads(body.decode("utf-8")) if body else {}
        except ValueError as exc:
            raise TransportError(f"bad JSON from host: {exc}") from None
        return resp.status, parsed

    def get(self, path: str, headers: dict | None = None) -> tuple[int, bytes]:
        try:
            conn = self._connection()
            conn.request("GET", path, headers=headers or {})
            resp = conn.getresponse()
            return resp.status, resp.read()
        except (OSError, http.client.HTTPException) as exc:
            self.close()
            raise TransportError(f"exchange failed: {exc}") from None

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None


def _claim_for(spec: InvocationSpec, transport: HttpTransport) -> msgsec.IdentityClaim:
    creds = spec.credentials
    if isinstance(creds, PasswordCredentials):
        return PasswordClaim(creds.principal_id, creds.password)
    # PKI: challenge-response handshake, then a session-token claim
    status, payload = transport.post_json("/auth/challenge", {"principal_id": creds.principal_id})
    if status != 200:
        raise HostFault("AuthFault", payload.get("error", "challenge refused"))
    challenge = crypto.b64decode_strict(payload["challenge"])
    algorithm = "RSAwithSHA1" if creds.keypair.algorithm == "RSA" else "DSAwithSHA1"
    signature = crypto.sign(challenge, creds.keypair, algorithm)
    status, payload = transport.post_json(
        "/auth/response",
        {"principal_id": creds.principal_id, "signature": crypto.b64encode(signature)})
    if status != 200:
        raise HostFault("AuthFault", payload.get("error", "challenge response refused"))
    return SessionClaim(crypto.b64decode_strict(payload["token_id"]))


def _raise_if_fault(env: Envelope) -> None:
    fault = fault_of(env)
    if fault is not None:
        raise HostFault(fault[0], fault[1])


def invoke_with_sender(spec: InvocationSpec, claim: msgsec.IdentityClaim,
                       sender) -> InvocationResult:
    """The six instrumented client steps around an arbitrary byte transport.

    ``sender(service, raw) -> bytes`` carries the secured request; HTTP and
    the loopback harness plug in here so both measure identical phases.
    """
    clock = PhaseClock()

    with clock.measure("t_cc"):
        operation = Element(spec.operation, [],
                            [element(k, None, v) for k, v in spec.params])
        env = request_envelope(operation)

    signer = spec.signing_keys["RSA" if spec.profile.signature == "RSAwithSHA1" else "DSA"]
    wrap_key = spec.host_transport_public.get(spec.profile.key_transport_bits)
    if wrap_key is None:
        raise TransportError(
            f"no host transport key for RSA-{spec.profile.key_transport_bits}")
    with clock.measure("t_reqec"):
        secured = msgsec.secure_detailed(env, spec.profile, signer, wrap_key,
                                         spec.signer_id, identity=claim)
    with clock.measure("t_reqs"):
        raw = canonical_serialize(secured.envelope)

    raw_response = sender(spec.service, raw)

    with clock.measure("t_resd"):
        response = parse_envelope(raw_response)
    with clock.measure("t_resdc"):
        if response.is_encrypted():
            try:
                opened = msgsec.open_secured(response, None, spec.host_trust(), None,
                                             session_key=secured.session_key)
            except MsgSecError as exc:
                raise ResponseTampered(str(exc)) from None
            plain = opened.envelope
        else:
            # plaintext fault from a stage before key unwrap
            plain = response
    with clock.measure("t_cp"):
        _raise_if_fault(plain)
        result = plain.body_child()
    return InvocationResult(result, clock.timings(), len(raw), len(raw_response))


def invoke(spec: InvocationSpec, transport: HttpTransport | None = None) -> InvocationResult:
    """One secured invocation over HTTP; returns the result element and the
    six client-side phase durations."""
    own_transport = transport is None
    transport = transport or HttpTransport(spec.endpoint)
    try:
        claim = _claim_for(spec, transport)
        return invoke_with_sender(spec, claim, transport.send_envelope)
    finally:
        if own_transport:
            transport.close()


def build_payload(target_request_bytes: int, target_response_bytes: int) -> list[tuple[str, str]]:
    """Deterministic Echo parameters hitting both plaintext size targets."""
    return services.request_params_for_targets(target_request_bytes, target_response_bytes)


def fetch_wsdl(spec_endpoint: str, service: str, token_id: bytes,
               transport: HttpTransport | None = None) -> bytes:
    """Token-gated WSDL download; raises HostFault on refusal."""
    own_transport = transport is None
    transport = transport or HttpTransport(spec_endpoint)
    try:
        status, body = transport.get(
            f"/services/{urllib.parse.quote(service)}?wsdl",
            {"X-Session-Token": crypto.b64encode(token_id)})
        if status != 200:
            env = parse_envelope(body)
            _raise_if_fault(env)
            raise HostFault("Client", f"unexpected status {status}")
        return body
    finally:
        if own_transport:
            transport.close()
