"""The service host runtime.

One fixed pipeline per request: rate policy, deserialize, message-security
checks, identity, authorization (ACL and, where required, the human
approval gate), dispatch, then response protection under the request's
session key. Every failure turns into a SOAP fault without touching the
handler; faults are encrypted when key unwrap already succeeded.
"""

from __future__ import annotations

import itertools
import json
import statistics
import threading
import time
from collections import deque
from dataclasses import dataclass, field as dc_field

from . import msgsec
from .crypto import KEY_TRANSPORT_BITS, CryptoProfile, KeyPair, RECOMMENDED_PROFILE
from .endpoint import (
    AccessControl,
    AclMode,
    ApprovalQueue,
    AuthSettings,
    Authenticator,
    Outcome,
    PrincipalRegistry,
    RateLimiter,
    SessionToken,
)
from .envelope import ENV_PREFIX, Element, Envelope, canonical_serialize, element, parse_envelope, request_envelope
from .errors import (
    AuthFailed,
    DuplicateService,
    EndpointError,
    InvariantViolation,
    MalformedXml,
    MsgSecError,
    NotAnEnvelope,
    PocketHostError,
    RateExceeded,
    UnknownService,
)
from .msgsec import NonceCache, PasswordClaim, SessionClaim, TrustedPeers
from .timing import PhaseClock, PhaseTimings, security_effort, total_invocation_time
from . import store as store_mod

FAULT_NAME = f"{ENV_PREFIX}:Fault"

FAULT_CLIENT = "Client"
FAULT_SECURITY = "SecurityFault"
FAULT_AUTH = "AuthFault"
FAULT_AUTHZ = "AuthzFault"
FAULT_SERVER = "Server"

STATS_RING_SIZE = 256


@dataclass(frozen=True)
class OperationDef:
    name: str
    input_elements: tuple[str, ...] = ()
    output_element: str = ""


@dataclass
class ServiceDescriptor:
    name: str
    operations: list[OperationDef]
    handler: object  # callable(op_name, op_element, RequestContext) -> Element
    requires_approval: bool = False
    wsdl_doc: bytes = b""


@dataclass
class RequestContext:
    source: str
    principal_id: str
    service: str
    operation: str


@dataclass
class HostConfig:
    transport_keys: dict[int, KeyPair]  # RSA decrypt keys by modulus bits
    signing_keys: dict[str, KeyPair]    # one signing key per algorithm
    trusted: TrustedPeers
    admin_secret: str
    signer_id: str = "host"
    listen_host: str = "127.0.0.1"
    listen_port: int = 8450
    profile: CryptoProfile = RECOMMENDED_PROFILE
    approval_timeout_s: float = 30.0
    nonce_window_s: float = msgsec.DEFAULT_WINDOW_S
    clock_skew_s: float = msgsec.DEFAULT_SKEW_S
    rate_capacity: int = 10
    rate_window_s: float = 60.0
    busy: bool = False
    local_auth: bool = True
    delegate_auth_endpoint: str | None = None
    store_path: str | None = None
    console_dir: str | None = None
    admin_allow_remote: bool = False
    auth: AuthSettings = dc_field(default_factory=AuthSettings)

    def __post_init__(self):
        for name in ("approval_timeout_s", "nonce_window_s", "clock_skew_s", "rate_window_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.transport_keys:
            raise ValueError("host needs at least one RSA transport keypair")
        for bits, key in self.transport_keys.items():
            if bits not in KEY_TRANSPORT_BITS or key.algorithm != "RSA" or key.bits != bits:
                raise ValueError(f"transport key entry {bits} must be a matching RSA-{bits} pair")
        if "RSA" not in self.signing_keys:
            raise ValueError("host needs an RSA signing keypair")

    @classmethod
    def from_json_file(cls, path: str) -> "HostConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        transport_keys = {}
        for bits in KEY_TRANSPORT_BITS:
            pem = raw.get(f"rsa_transport_{bits}_pem")
            if pem:
                transport_keys[bits] = KeyPair.from_private_pem(pem)
        signing_keys = {"RSA": KeyPair.from_private_pem(raw["rsa_signing_pem"])}
        if raw.get("dsa_signing_pem"):
            signing_keys["DSA"] = KeyPair.from_private_pem(raw["dsa_signing_pem"])
        trusted = TrustedPeers()
        for peer_id, pems in raw.get("trusted_peers", {}).items():
            for pem in pems if isinstance(pems, list) else [pems]:
                trusted.add(peer_id, KeyPair.from_public_pem(pem))
        listen = raw.get("listen", {})
        auth = AuthSettings(**raw.get("auth", {}))
        return cls(
            transport_keys=transport_keys,
            signing_keys=signing_keys,
            trusted=trusted,
            admin_secret=raw["admin_secret"],
            signer_id=raw.get("signer_id", "host"),
            listen_host=listen.get("host", "127.0.0.1"),
            listen_port=int(listen.get("port", 8450)),
            profile=CryptoProfile.parse(raw.get("profile", RECOMMENDED_PROFILE.label)),
            approval_timeout_s=float(raw.get("approval_timeout_s", 30.0)),
            nonce_window_s=float(raw.get("nonce_window_s", msgsec.DEFAULT_WINDOW_S)),
            clock_skew_s=float(raw.get("clock_skew_s", msgsec.DEFAULT_SKEW_S)),
            rate_capacity=int(raw.get("rate_capacity", 10)),
            rate_window_s=float(raw.get("rate_window_s", 60.0)),
            busy=bool(raw.get("busy", False)),
            local_auth=bool(raw.get("local_auth", True)),
            delegate_auth_endpoint=raw.get("delegate_auth_endpoint"),
            store_path=raw.get("store_path"),
            console_dir=raw.get("console_dir"),
            admin_allow_remote=bool(raw.get("admin_allow_remote", False)),
            auth=auth,
        )


def fault_envelope(code: str, detail: str) -> Envelope:
    return request_envelope(element(FAULT_NAME, None,
                                    element("faultcode", None, code),
                                    element("faultstring", None, detail)))


def fault_of(env: Envelope) -> tuple[str, str] | None:
    """(code, string) if the envelope body is a fault, else None."""
    child = env.body.element_children()
    if len(child) != 1 or child[0].name != FAULT_NAME:
        return None
    code = child[0].child("faultcode")
    detail = child[0].child("faultstring")
    return (code.text() if code else "", detail.text() if detail else "")


class _AuthzRefused(PocketHostError):
    def __init__(self, outcome: Outcome, detail: str):
        super().__init__(detail)
        self.outcome = outcome


def _fault_code_for(exc: PocketHostError) -> str:
    if isinstance(exc, _AuthzRefused):
        return FAULT_AUTHZ
    if isinstance(exc, EndpointError) and not isinstance(exc, RateExceeded):
        return FAULT_AUTH
    if isinstance(exc, MsgSecError):
        return FAULT_SECURITY
    if isinstance(exc, InvariantViolation):
        return FAULT_SERVER  # a handler produced an unserializable result
    return FAULT_CLIENT


class ServiceHost:
    """Registry, security pipeline, approval gate, admin surface."""

    def __init__(self, config: HostConfig,
                 registry: PrincipalRegistry | None = None,
                 acl: AccessControl | None = None):
        if config.store_path and registry is None and acl is None:
            registry, acl = store_mod.load_store(config.store_path)
        self.config = config
        self.registry = registry if registry is not None else PrincipalRegistry()
        self.acl = acl if acl is not None else AccessControl()
        self.authenticator = Authenticator(self.registry, config.auth)
        self.approvals = ApprovalQueue(config.approval_timeout_s)
        self.rate = RateLimiter(config.rate_capacity, config.rate_window_s)
        self.nonce_cache = NonceCache(config.nonce_window_s)
        self.services: dict[str, ServiceDescriptor] = {}
        self.invocations: dict[str, int] = {}
        self._seq = itertools.count(1)
        self._lock = threading.Lock()
        self._audit: list[dict] = []
        self._stats: deque[dict] = deque(maxlen=STATS_RING_SIZE)

    # -- registry ---------------------------------------------------------

    def deploy_service(self, desc: ServiceDescriptor) -> None:
        with self._lock:
            if desc.name in self.services:
                raise DuplicateService(f"service {desc.name!r} already deployed")
            for op in desc.operations:
                owner = self._op_owner_locked(op.name)
                if owner is not None:
                    raise DuplicateService(
                        f"operation {op.name!r} already dispatched by service {owner!r}")
            self.services[desc.name] = desc
            self.invocations.setdefault(desc.name, 0)

    def _op_owner_locked(self, op_name: str) -> str | None:
        for svc in self.services.values():
            if any(op.name == op_name for op in svc.operations):
                return svc.name
        return None

    def _resolve(self, env: Envelope, service_hint: str | None) -> tuple[ServiceDescriptor, OperationDef, Element]:
        op_el = env.body_child()
        for svc in self.services.values():
            for op in svc.operations:
                if op.name == op_el.name:
                    if service_hint is not None and svc.name != service_hint:
                        raise UnknownService(
                            f"operation {op.name!r} does not belong to service {service_hint!r}")
                    return svc, op, op_el
        raise UnknownService(f"unknown service operation {op_el.name!r}")

    # -- audit --------------------------------------------------------------

    def _note(self, seq: int, event: str, **details) -> None:
        with self._lock:
            self._audit.append({"seq": seq, "event": event, **details})

    def audit_log(self) -> list[dict]:
        with self._lock:
            return list(self._audit)

    # -- authentication of decrypted claims ----------------------------------

    def _authenticate(self, claim, source: str, service: str) -> SessionToken:
        if claim is None:
            raise AuthFailed("no identity claim")
        if isinstance(claim, PasswordClaim):
            if self.config.delegate_auth_endpoint:
                return self.authenticator.delegate_authenticate(
                    claim.principal_id, claim.password,
                    self.config.delegate_auth_endpoint, source, service)
            if not self.config.local_auth:
                raise AuthFailed("local authentication disabled on this host")
            return self.authenticator.authenticate_password(claim.principal_id, claim.password)
        if isinstance(claim, SessionClaim):
            return self.authenticator.validate_token(claim.token_id, source=source, service=service)
        raise AuthFailed("unsupported identity claim")

    # -- the pipeline ----------------------------------------------------------

    def handle_request(self, raw: bytes, source: str) -> bytes:
        return self._handle(raw, source, None)[0]

    def handle_request_timed(self, raw: bytes, source: str,
                             service_hint: str | None = None) -> tuple[bytes, PhaseTimings]:
        out, timings, _ = self._handle(raw, source, service_hint)
        return out, timings

    def handle_request_http(self, raw: bytes, source: str,
                            service_hint: str | None = None) -> tuple[bytes, PhaseTimings, str | None]:
        return self._handle(raw, source, service_hint)

    def _handle(self, raw: bytes, source: str,
                service_hint: str | None) -> tuple[bytes, PhaseTimings, str | None]:
        seq = next(self._seq)
        clock = PhaseClock()
        session_key = None
        signature_algorithm = self.config.profile.signature
        service_name = None
        self._note(seq, "received", source=source)
        try:
            if not self.rate.allow(source.split("#")[0]):
                raise RateExceeded("rate limit exceeded")

            with clock.measure("t_reqd"):
                env = parse_envelope(raw)

            with clock.measure("t_reqdc"):
                opened = msgsec.open_secured(
                    env, self.config.transport_keys, self.config.trusted, self.nonce_cache,
                    window_s=self.config.nonce_window_s, skew_s=self.config.clock_skew_s)
            session_key = opened.session_key
            signature_algorithm = opened.header.signature_algorithm

            svc, opdef, op_el = self._resolve(opened.envelope, service_hint)
            service_name = svc.name

            token = self._authenticate(opened.claim, source, svc.name)
            self._note(seq, "authenticated", principal=token.principal_id)

            roles = self.authenticator.roles_for(token)
            verdict = self.acl.decide(roles, svc.name)
            self._note(seq, "authorized", principal=token.principal_id,
                       service=svc.name, verdict=verdict.value)
            if verdict is AclMode.DENY:
                raise _AuthzRefused(Outcome.DENIED, f"access to {svc.name!r} denied")
            if verdict is AclMode.REQUIRE_APPROVAL or svc.requires_approval:
                decision = self.approvals.request_approval(
                    token.principal_id, svc.name, busy=self.config.busy,
                    on_enqueue=lambda req: self._note(seq, "approval_pending",
                                                      request_id=req.request_id))
                self._note(seq, "approval_decided", outcome=decision.outcome.value)
                if decision.outcome is not Outcome.APPROVED:
                    raise _AuthzRefused(decision.outcome,
                                        f"authorization {decision.outcome.value}")

            ctx = RequestContext(source, token.principal_id, svc.name, opdef.name)
            with clock.measure("t_process"):
                result = svc.handler(opdef.name, op_el, ctx)
                response = request_envelope(result)
            with self._lock:
                self.invocations[svc.name] += 1
            self._note(seq, "executed", service=svc.name, operation=opdef.name)

            with clock.measure("t_resec"):
                secured = self._protect_response(response, session_key, signature_algorithm)
            with clock.measure("t_ress"):
                out = canonical_serialize(secured)
            self._record_stats(clock.timings(), None, service_name)
            return out, clock.timings(), None

        except PocketHostError as exc:
            return self._fault_response(seq, exc, clock, session_key, signature_algorithm, service_name)
        except Exception as exc:  # handler bug: Server fault, never a crash
            fault = PocketHostError(f"internal error: {type(exc).__name__}")
            return self._fault_response(seq, fault, clock, session_key, signature_algorithm,
                                        service_name, code=FAULT_SERVER)

    def _protect_response(self, response: Envelope, session_key, signature_algorithm: str) -> Envelope:
        signer = self.config.signing_keys.get(
            "RSA" if signature_algorithm == "RSAwithSHA1" else "DSA")
        if signer is None:  # no matching key: answer with what the host has
            signer, signature_algorithm = self.config.signing_keys["RSA"], "RSAwithSHA1"
        return msgsec.secure_response(response, session_key, signer,
                                      self.config.signer_id, signature_algorithm)

    def _fault_response(self, seq: int, exc: PocketHostError, clock: PhaseClock,
                        session_key, signature_algorithm: str, service_name: str | None,
                        code: str | None = None) -> tuple[bytes, PhaseTimings, str]:
        code = code or _fault_code_for(exc)
        self._note(seq, "fault", code=code, kind=type(exc).__name__)
        env = fault_envelope(code, str(exc))
        # fault construction is untimed: phases after the failing stage stay zero
        if session_key is not None:
            out = canonical_serialize(self._protect_response(env, session_key, signature_algorithm))
        else:
            out = canonical_serialize(env)
        self._record_stats(clock.timings(), code, service_name)
        return out, clock.timings(), code

    # -- stats -----------------------------------------------------------------

    def _record_stats(self, timings: PhaseTimings, fault: str | None, service: str | None) -> None:
        with self._lock:
            self._stats.append({"phases": timings.as_dict(), "fault": fault, "service": service})

    def stats(self) -> dict:
        with self._lock:
            entries = list(self._stats)
        result: dict = {"invocations": len(entries),
                        "faults": sum(1 for e in entries if e["fault"]),
                        "latest": None, "medians": None}
        if entries:
            latest = entries[-1]["phases"]
            result["latest"] = self._with_totals(latest)
            medians = {
                name: statistics.median(e["phases"][name] for e in entries)
                for name in latest
            }
            result["medians"] = self._with_totals(medians)
        return result

    @staticmethod
    def _with_totals(phases: dict) -> dict:
        t = PhaseTimings.from_dict(phases)
        out = dict(phases)
        out["t_mwsp"] = total_invocation_time(t)
        out["t_mwsse"] = security_effort(t)
        return out

    def last_host_timings(self) -> PhaseTimings | None:
        with self._lock:
            if not self._stats:
                return None
            return PhaseTimings.from_dict(self._stats[-1]["phases"])

    # -- WSDL ---------------------------------------------------------------------

    def get_wsdl(self, service: str, token_id: bytes, source: str | None = None) -> bytes:
        desc = self.services.get(service)
        if desc is None:
            raise UnknownService(f"unknown service {service!r}")
        token = self.authenticator.validate_token(token_id, source=source, service=service)
        roles = self.authenticator.roles_for(token)
        if self.acl.decide(roles, service) is not AclMode.ALLOW:
            raise _AuthzRefused(Outcome.DENIED, f"WSDL for {service!r} denied")
        return desc.wsdl_doc

    # -- admin surface -------------------------------------------------------------

    def pending_approvals(self) -> list[dict]:
        return [
            {"request_id": r.request_id, "principal_id": r.principal_id,
             "service": r.service, "received": r.received, "deadline": r.deadline}
            for r in self.approvals.pending()
        ]

    def submit_decision(self, request_id: str, outcome: str) -> dict:
        try:
            parsed = Outcome(outcome)
        except ValueError:
            raise PocketHostError(f"unknown outcome {outcome!r}") from None
        if parsed not in (Outcome.APPROVED, Outcome.DENIED):
            raise PocketHostError("operator outcome must be Approved or Denied")
        decision = self.approvals.submit_decision(request_id, parsed)
        return {"request_id": decision.request_id, "outcome": decision.outcome.value,
                "decided": decision.decided}

    def set_busy(self, busy: bool) -> dict:
        self.config.busy = bool(busy)
        return {"busy": self.config.busy}
