"""End-point security: who may invoke what.

Covers the principal registry with salted-iterated password verifiers,
password and PKI challenge-response authentication with lockout, delegated
single-session authentication against a standalone service, ACL-based
authorization with deny-overrides, the human approval queue, and the
per-source token-bucket rate policy.
"""

from __future__ import annotations

import hashlib
import hmac
import http.client
import json
import threading
import time
import urllib.parse
import uuid
from dataclasses import dataclass, field
from enum import Enum

from . import crypto
from .crypto import KeyPair
from .errors import (
    AlreadyDecided,
    AuthFailed,
    AuthServiceUnreachable,
    ChallengeExpired,
    ChallengeReplayed,
    Locked,
    TokenExpired,
    TokenUnknown,
    UnknownRequestId,
)

DEFAULT_TOKEN_LIFETIME_S = 600.0
DEFAULT_LOCKOUT_THRESHOLD = 5
DEFAULT_LOCKOUT_S = 300.0
DEFAULT_CHALLENGE_LIFETIME_S = 60.0
CHALLENGE_LENGTH = 32
PBKDF2_ITERATIONS = 100_000


class AclMode(Enum):
    ALLOW = "Allow"
    REQUIRE_APPROVAL = "RequireApproval"
    DENY = "Deny"


class Outcome(Enum):
    APPROVED = "Approved"
    DENIED = "Denied"
    TIMED_OUT = "TimedOut"
    BUSY = "Busy"


@dataclass
class Principal:
    id: str
    salt: bytes
    verifier: bytes
    iterations: int
    roles: frozenset[str] = frozenset()
    public_key: KeyPair | None = None


def derive_verifier(password: str, salt: bytes, iterations: int = PBKDF2_ITERATIONS) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)


def make_principal(principal_id: str, password: str, roles=(),
                   public_key: KeyPair | None = None,
                   iterations: int = PBKDF2_ITERATIONS) -> Principal:
    salt = crypto.random_bytes(16)
    return Principal(principal_id, salt, derive_verifier(password, salt, iterations),
                     iterations, frozenset(roles), public_key)


@dataclass
class SessionToken:
    token_id: bytes
    principal_id: str
    issued: float
    expires: float
    single_use_service: str | None = None
    bound_source: str | None = None  # delegated tokens: transport connection identity
    roles: frozenset[str] | None = None  # delegated tokens carry roles with them
    consumed: bool = False

    def __post_init__(self):
        if self.expires <= self.issued:
            raise ValueError("token must expire after it is issued")


@dataclass(frozen=True)
class AclEntry:
    service: str
    role: str
    mode: AclMode


@dataclass
class ApprovalRequest:
    request_id: str
    principal_id: str
    service: str
    received: float
    deadline: float


@dataclass
class Decision:
    request_id: str
    outcome: Outcome
    decided: float


class PrincipalRegistry:
    """Read-mostly principal store; updates swap the whole snapshot."""

    def __init__(self):
        self._snapshot: dict[str, Principal] = {}
        self._lock = threading.Lock()

    def add(self, principal: Principal) -> None:
        with self._lock:
            fresh = dict(self._snapshot)
            fresh[principal.id] = principal
            self._snapshot = fresh

    def get(self, principal_id: str) -> Principal | None:
        return self._snapshot.get(principal_id)

    def ids(self) -> list[str]:
        return sorted(self._snapshot)


class AccessControl:
    """(service, role) -> mode table. Deny overrides, then the most
    permissive match wins; no match defaults to RequireApproval."""

    def __init__(self, entries: list[AclEntry] | None = None):
        self._entries: dict[tuple[str, str], AclMode] = {}
        self._lock = threading.Lock()
        for entry in entries or []:
            self.put(entry)

    def put(self, entry: AclEntry) -> None:
        with self._lock:
            fresh = dict(self._entries)
            fresh[(entry.service, entry.role)] = entry.mode
            self._entries = fresh

    def decide(self, roles, service: str) -> AclMode:
        table = self._entries
        modes = {table[(service, role)] for role in roles if (service, role) in table}
        if AclMode.DENY in modes:
            return AclMode.DENY
        if AclMode.ALLOW in modes:
            return AclMode.ALLOW
        return AclMode.REQUIRE_APPROVAL


@dataclass
class AuthSettings:
    token_lifetime_s: float = DEFAULT_TOKEN_LIFETIME_S
    lockout_threshold: int = DEFAULT_LOCKOUT_THRESHOLD
    lockout_s: float = DEFAULT_LOCKOUT_S
    challenge_lifetime_s: float = DEFAULT_CHALLENGE_LIFETIME_S


class Authenticator:
    """Issues and validates session tokens for the three auth paths."""

    def __init__(self, registry: PrincipalRegistry, settings: AuthSettings | None = None):
        self.registry = registry
        self.settings = settings or AuthSettings()
        self._lock = threading.Lock()
        self._tokens: dict[bytes, SessionToken] = {}
        self._failures: dict[str, int] = {}
        self._locked_until: dict[str, float] = {}
        self._challenges: dict[str, tuple[bytes, float]] = {}
        self._spent_challenges: dict[str, float] = {}

    # -- password path ------------------------------------------------------

    def authenticate_password(self, principal_id: str, password: str,
                              now: float | None = None) -> SessionToken:
        now = time.time() if now is None else now
        with self._lock:
            locked_until = self._locked_until.get(principal_id, 0.0)
            if now < locked_until:
                raise Locked(f"locked out for another {locked_until - now:.0f}s")
        principal = self.registry.get(principal_id)
        ok = False
        if principal is not None:
            attempt = derive_verifier(password, principal.salt, principal.iterations)
            ok = hmac.compare_digest(attempt, principal.verifier)
        else:
            # burn comparable time so unknown ids are not distinguishable by timing
            derive_verifier(password, b"\x00" * 16, PBKDF2_ITERATIONS)
        with self._lock:
            if not ok:
                count = self._failures.get(principal_id, 0) + 1
                self._failures[principal_id] = count
                if count >= self.settings.lockout_threshold:
                    self._locked_until[principal_id] = now + self.settings.lockout_s
                    self._failures[principal_id] = 0
                raise AuthFailed("authentication failed")
            self._failures.pop(principal_id, None)
        return self._issue(principal_id, now)

    # -- PKI challenge-response ----------------------------------------------

    def issue_challenge(self, principal_id: str, now: float | None = None,
                        rng=crypto.random_bytes) -> bytes:
        now = time.time() if now is None else now
        principal = self.registry.get(principal_id)
        if principal is None or principal.public_key is None:
            raise AuthFailed("authentication failed")
        challenge = rng(CHALLENGE_LENGTH)
        with self._lock:
            self._challenges[principal_id] = (challenge, now + self.settings.challenge_lifetime_s)
        return challenge

    def verify_challenge(self, principal_id: str, signed_challenge: bytes,
                         now: float | None = None) -> SessionToken:
        now = time.time() if now is None else now
        principal = self.registry.get(principal_id)
        with self._lock:
            outstanding = self._challenges.get(principal_id)
            if outstanding is None:
                if now < self._spent_challenges.get(principal_id, 0.0):
                    raise ChallengeReplayed("challenge already used")
                raise AuthFailed("authentication failed")
            challenge, expires = outstanding
            if now > expires:
                del self._challenges[principal_id]
                raise ChallengeExpired("challenge expired")
        if principal is None or principal.public_key is None:
            raise AuthFailed("authentication failed")
        algorithm = "RSAwithSHA1" if principal.public_key.algorithm == "RSA" else "DSAwithSHA1"
        try:
            crypto.verify(challenge, signed_challenge, principal.public_key, algorithm)
        except Exception:
            raise AuthFailed("authentication failed") from None
        with self._lock:
            self._challenges.pop(principal_id, None)
            self._spent_challenges[principal_id] = now + self.settings.challenge_lifetime_s
        return self._issue(principal_id, now)

    # -- delegated single-session path ----------------------------------------

    def delegate_authenticate(self, principal_id: str, password: str, auth_endpoint: str,
                              source: str, service: str, now: float | None = None,
                              timeout_s: float = 5.0) -> SessionToken:
        """Forward credentials to the standalone service; never falls back locally.

        The issued token is bound to the requesting connection identity and
        marked single-use for the named service, so the authorization request
        and the service request must share one session.
        """
        now = time.time() if now is None else now
        url = urllib.parse.urlsplit(auth_endpoint)
        body = json.dumps({"principal_id": principal_id, "password": password,
                           "service": service}).encode("utf-8")
        try:
            conn = http.client.HTTPConnection(url.hostname, url.port or 80, timeout=timeout_s)
            try:
                conn.request("POST", url.path or "/", body,
                             {"Content-Type": "application/json"})
                resp = conn.getresponse()
                payload = json.loads(resp.read().decode("utf-8"))
                status = resp.status
            finally:
                conn.close()
        except (OSError, ValueError) as exc:
            raise AuthServiceUnreachable(f"authentication service unreachable: {exc}") from None
        if status != 200 or not isinstance(payload, dict):
            raise AuthServiceUnreachable(f"authentication service answered {status}")
        if not payload.get("approved"):
            raise AuthFailed("authentication failed")
        roles = frozenset(payload.get("roles", []))
        return self._issue(principal_id, now, single_use_service=service,
                           bound_source=source, roles=roles)

    # -- tokens ----------------------------------------------------------------

    def _issue(self, principal_id: str, now: float, **extra) -> SessionToken:
        token = SessionToken(
            token_id=crypto.random_bytes(16),
            principal_id=principal_id,
            issued=now,
            expires=now + self.settings.token_lifetime_s,
            **extra,
        )
        with self._lock:
            self._tokens[token.token_id] = token
        return token

    def validate_token(self, token_id: bytes, now: float | None = None,
                       source: str | None = None, service: str | None = None) -> SessionToken:
        """Strict validation; single-use tokens are consumed by their first success."""
        now = time.time() if now is None else now
        with self._lock:
            token = self._tokens.get(token_id)
            if token is None:
                raise TokenUnknown("unknown session token")
            if now > token.expires:
                raise TokenExpired("session token expired")
            if token.bound_source is not None and token.bound_source != source:
                raise TokenUnknown("unknown session token")  # bound to another session
            if token.single_use_service is not None:
                if token.consumed:
                    raise TokenUnknown("unknown session token")  # already spent
                if service is not None and token.single_use_service != service:
                    raise TokenUnknown("unknown session token")
                token.consumed = True
            return token

    def roles_for(self, token: SessionToken) -> frozenset[str]:
        if token.roles is not None:
            return token.roles
        principal = self.registry.get(token.principal_id)
        return principal.roles if principal else frozenset()


class ApprovalQueue:
    """Human-in-the-loop gate with decide-once semantics.

    Request handlers block in request_approval; the operator (or the
    deadline) settles each item exactly once even when both race.
    """

    @dataclass
    class _Pending:
        request: ApprovalRequest
        event: threading.Event = field(default_factory=threading.Event)
        decision: Decision | None = None

    def __init__(self, timeout_s: float = 30.0):
        self.timeout_s = timeout_s
        self._lock = threading.Lock()
        self._items: dict[str, ApprovalQueue._Pending] = {}

    def request_approval(self, principal_id: str, service: str, busy: bool = False,
                         now: float | None = None, timeout_s: float | None = None,
                         on_enqueue=None) -> Decision:
        now = time.time() if now is None else now
        if busy:
            return Decision(uuid.uuid4().hex, Outcome.BUSY, now)
        timeout_s = self.timeout_s if timeout_s is None else timeout_s
        request = ApprovalRequest(uuid.uuid4().hex, principal_id, service, now, now + timeout_s)
        pending = self._Pending(request)
        with self._lock:
            self._items[request.request_id] = pending
        if on_enqueue is not None:
            on_enqueue(request)
        pending.event.wait(timeout_s)
        with self._lock:
            if pending.decision is None:
                pending.decision = Decision(request.request_id, Outcome.TIMED_OUT, time.time())
                pending.event.set()
            return pending.decision

    def submit_decision(self, request_id: str, outcome: Outcome,
                        now: float | None = None) -> Decision:
        if outcome not in (Outcome.APPROVED, Outcome.DENIED):
            raise ValueError("operator outcome must be Approved or Denied")
        now = time.time() if now is None else now
        with self._lock:
            pending = self._items.get(request_id)
            if pending is None:
                raise UnknownRequestId(f"no approval request {request_id!r}")
            if pending.decision is not None:
                raise AlreadyDecided(f"request {request_id!r} already {pending.decision.outcome.value}")
            if now > pending.request.deadline:
                pending.decision = Decision(request_id, Outcome.TIMED_OUT, now)
                pending.event.set()
                raise AlreadyDecided(f"request {request_id!r} already TimedOut")
            pending.decision = Decision(request_id, outcome, now)
            pending.event.set()
            return pending.decision

    def pending(self, now: float | None = None) -> list[ApprovalRequest]:
        now = time.time() if now is None else now
        with self._lock:
            return sorted(
                (p.request for p in self._items.values()
                 if p.decision is None and p.request.deadline > now),
                key=lambda r: r.received,
            )

    def decision_of(self, request_id: str) -> Decision | None:
        with self._lock:
            pending = self._items.get(request_id)
            return pending.decision if pending else None


class RateLimiter:
    """Per-source token bucket: default 10 requests per 60 s window."""

    def __init__(self, capacity: int = 10, window_s: float = 60.0):
        self.capacity = capacity
        self.refill_per_s = capacity / window_s
        self._lock = threading.Lock()
        self._buckets: dict[str, tuple[float, float]] = {}  # source -> (tokens, stamp)

    def allow(self, source: str, now: float | None = None) -> bool:
        now = time.monotonic() if now is None else now
        with self._lock:
            tokens, stamp = self._buckets.get(source, (float(self.capacity), now))
            tokens = min(float(self.capacity), tokens + max(0.0, now - stamp) * self.refill_per_s)
            if tokens >= 1.0:
                self._buckets[source] = (tokens - 1.0, now)
                return True
            self._buckets[source] = (tokens, now)
            return False
