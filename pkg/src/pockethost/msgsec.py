"""Message-level security: confidentiality, integrity, freshness.

Layering (fixed by the wire profile, see docs/profile.md):

* the body operation element is encrypted under a fresh symmetric session
  key (CBC, PKCS#7, random IV prepended, base64 on the wire);
* the session key travels RSA-PKCS#1-v1.5-wrapped to the recipient
  (responses reuse the request's session key and carry no wrapped key);
* a detached signature binds ciphertext, timestamp and nonce:
  sign(canonical(EncryptedData) || created || nonce);
* receivers check in a fixed order: header structure, freshness (staleness
  then replay), signature, key unwrap, decryption + body digest, identity
  claim. The nonce enters the replay cache only once everything passed.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from heapq import heappop, heappush

from . import crypto
from .crypto import CryptoProfile, KeyPair, SymmetricKey
from .envelope import (
    BODY_NAME,
    ENCRYPTED_DATA_NAME,
    SECURITY_BLOCK_NAME,
    SECURITY_NS,
    Element,
    Envelope,
    canonical_serialize,
    element,
    is_security_block,
    parse_element_bytes,
)
from .errors import (
    CiphertextMalformed,
    InvariantViolation,
    KeyTransportFailure,
    MalformedSecurityHeader,
    MalformedXml,
    ReplayDetected,
    SignatureInvalid,
    StaleMessage,
    UnknownSigner,
)

NONCE_LENGTH = 16
DEFAULT_WINDOW_S = 300.0
DEFAULT_SKEW_S = 120.0

_CREATED_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def format_created(epoch: float) -> str:
    return time.strftime(_CREATED_FORMAT, time.gmtime(epoch))


def parse_created(text: str) -> float:
    try:
        stamp = datetime.strptime(text, _CREATED_FORMAT)
    except ValueError:
        raise MalformedSecurityHeader(f"unparseable timestamp {text!r}") from None
    return stamp.replace(tzinfo=timezone.utc).timestamp()


# --- identity claims ----------------------------------------------------------


@dataclass
class PasswordClaim:
    principal_id: str
    password: str


@dataclass
class SessionClaim:
    token_id: bytes


IdentityClaim = PasswordClaim | SessionClaim


def _claim_to_element(claim: IdentityClaim) -> Element:
    if isinstance(claim, PasswordClaim):
        return element("Claim", {"kind": "password"},
                       element("Id", None, claim.principal_id),
                       element("Secret", None, claim.password))
    return element("Claim", {"kind": "session"},
                   element("TokenId", None, crypto.b64encode(claim.token_id)))


def _claim_from_element(el: Element) -> IdentityClaim:
    kind = el.attr("kind")
    if el.name != "Claim" or kind not in ("password", "session"):
        raise CiphertextMalformed("identity claim payload malformed")
    if kind == "password":
        ident, secret = el.child("Id"), el.child("Secret")
        if ident is None or secret is None:
            raise CiphertextMalformed("password claim missing fields")
        return PasswordClaim(ident.text(), secret.text())
    token = el.child("TokenId")
    if token is None:
        raise CiphertextMalformed("session claim missing token id")
    return SessionClaim(crypto.b64decode_strict(token.text()))


# --- security header ----------------------------------------------------------


@dataclass
class SecurityHeader:
    """Decoded Security block. ``created`` keeps the exact wire string since
    the signature covers it byte-for-byte."""

    cipher_id: str
    created: str
    nonce: bytes
    body_digest: bytes
    signature_value: bytes
    signer_id: str
    signature_algorithm: str
    wrapped_key: bytes | None = None
    key_transport: str | None = None  # e.g. "RSA1024", present with wrapped_key
    token_ciphertext: bytes | None = None

    def created_epoch(self) -> float:
        return parse_created(self.created)

    def to_element(self) -> Element:
        kids: list[Element | str] = [
            element("Created", None, self.created),
            element("Nonce", None, crypto.b64encode(self.nonce)),
            element("Cipher", None, self.cipher_id),
        ]
        if self.wrapped_key is not None:
            kids.append(element("WrappedKey", {"transport": self.key_transport or ""},
                                crypto.b64encode(self.wrapped_key)))
        kids.append(element("BodyDigest", None, crypto.b64encode(self.body_digest)))
        if self.token_ciphertext is not None:
            kids.append(element("Identity", None, crypto.b64encode(self.token_ciphertext)))
        kids.append(element("Signature", {"alg": self.signature_algorithm, "signer": self.signer_id},
                            crypto.b64encode(self.signature_value)))
        return Element(SECURITY_BLOCK_NAME, [("xmlns", SECURITY_NS)], kids)

    @classmethod
    def from_element(cls, el: Element) -> "SecurityHeader":
        def required(name: str) -> Element:
            child = el.child(name)
            if child is None:
                raise MalformedSecurityHeader(f"security header missing <{name}>")
            return child

        def decode(name: str, text: str) -> bytes:
            try:
                return crypto.b64decode_strict(text)
            except CiphertextMalformed as exc:
                raise MalformedSecurityHeader(f"<{name}>: {exc}") from None

        created = required("Created").text()
        parse_created(created)  # validate now; freshness judged later
        nonce = decode("Nonce", required("Nonce").text())
        if len(nonce) != NONCE_LENGTH:
            raise MalformedSecurityHeader(f"nonce must be {NONCE_LENGTH} octets, got {len(nonce)}")
        cipher_id = required("Cipher").text()
        if cipher_id not in crypto.SYMMETRIC_ALGORITHMS:
            raise MalformedSecurityHeader(f"unknown cipher id {cipher_id!r}")
        signature_el = required("Signature")
        algorithm = signature_el.attr("alg") or ""
        if algorithm not in crypto.SIGNATURE_ALGORITHMS:
            raise MalformedSecurityHeader(f"unknown signature algorithm {algorithm!r}")
        signer_id = signature_el.attr("signer") or ""
        if not signer_id:
            raise MalformedSecurityHeader("signature missing signer id")
        wrapped_el = el.child("WrappedKey")
        wrapped = decode("WrappedKey", wrapped_el.text()) if wrapped_el is not None else None
        transport = wrapped_el.attr("transport") if wrapped_el is not None else None
        if wrapped is not None and transport not in ("RSA1024", "RSA2048"):
            raise MalformedSecurityHeader(f"unknown key transport {transport!r}")
        token_el = el.child("Identity")
        token_ct = decode("Identity", token_el.text()) if token_el is not None else None
        return cls(
            cipher_id=cipher_id,
            created=created,
            nonce=nonce,
            body_digest=decode("BodyDigest", required("BodyDigest").text()),
            signature_value=decode("Signature", signature_el.text()),
            signer_id=signer_id,
            signature_algorithm=algorithm,
            wrapped_key=wrapped,
            key_transport=transport,
            token_ciphertext=token_ct,
        )


# --- nonce cache ----------------------------------------------------------------


class NonceCache:
    """Replay window with atomic check-and-insert.

    Shared by all request handlers; the lock makes concurrent duplicates
    collapse to exactly one admission.
    """

    def __init__(self, window_s: float = DEFAULT_WINDOW_S):
        if window_s <= 0:
            raise ValueError("window must be positive")
        self.window_s = window_s
        self._lock = threading.Lock()
        self._entries: dict[bytes, float] = {}
        self._expiries: list[tuple[float, bytes]] = []

    def _evict(self, now: float) -> None:
        while self._expiries and self._expiries[0][0] <= now:
            expiry, nonce = heappop(self._expiries)
            if self._entries.get(nonce) == expiry:
                del self._entries[nonce]

    def seen(self, nonce: bytes, now: float | None = None) -> bool:
        now = time.time() if now is None else now
        with self._lock:
            self._evict(now)
            return nonce in self._entries

    def admit(self, nonce: bytes, now: float | None = None) -> bool:
        """True if the nonce was fresh and is now recorded."""
        now = time.time() if now is None else now
        with self._lock:
            self._evict(now)
            if nonce in self._entries:
                return False
            expiry = now + self.window_s
            self._entries[nonce] = expiry
            heappush(self._expiries, (expiry, nonce))
            return True

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


# --- trusted peers ----------------------------------------------------------------


class TrustedPeers:
    """signer_id -> {signature algorithm -> public KeyPair}."""

    def __init__(self):
        self._keys: dict[str, dict[str, KeyPair]] = {}

    def add(self, signer_id: str, key: KeyPair) -> None:
        self._keys.setdefault(signer_id, {})[key.algorithm] = key.public_only()

    def resolve(self, signer_id: str, signature_algorithm: str) -> KeyPair | None:
        algorithm = "RSA" if signature_algorithm == "RSAwithSHA1" else "DSA"
        return self._keys.get(signer_id, {}).get(algorithm)

    def ids(self) -> list[str]:
        return sorted(self._keys)


# --- body encryption ----------------------------------------------------------------


def _encrypted_data_element(blob: bytes) -> Element:
    return Element(ENCRYPTED_DATA_NAME, [("xmlns", SECURITY_NS)], [crypto.b64encode(blob)])


def encrypt_body(env: Envelope, key: SymmetricKey, rng=crypto.random_bytes) -> Envelope:
    if env.is_encrypted():
        raise InvariantViolation("body is already encrypted")
    plaintext = canonical_serialize(env.body_child())
    blob = crypto.cbc_encrypt(key, plaintext, rng)
    return Envelope(headers=list(env.headers),
                    body=Element(BODY_NAME, [], [_encrypted_data_element(blob)]))


def _decrypt_body_bytes(env: Envelope, key: SymmetricKey) -> bytes:
    if not env.is_encrypted():
        raise CiphertextMalformed("body holds no EncryptedData element")
    blob = crypto.b64decode_strict(env.body_child().text())
    return crypto.cbc_decrypt(key, blob)


def _plain_envelope(env: Envelope, plaintext: bytes) -> Envelope:
    try:
        child = parse_element_bytes(plaintext)
    except MalformedXml as exc:
        raise CiphertextMalformed(f"decrypted body is not an element: {exc}") from None
    headers = [h for h in env.headers if not is_security_block(h)]
    return Envelope(headers=headers, body=Element(BODY_NAME, [], [child]))


def decrypt_body(env: Envelope, key: SymmetricKey) -> Envelope:
    """Inverse of encrypt_body; verifies the header's body digest when present."""
    plaintext = _decrypt_body_bytes(env, key)
    header_el = env.security_header()
    if header_el is not None:
        digest = SecurityHeader.from_element(header_el).body_digest
        if crypto.sha1(plaintext) != digest:
            raise CiphertextMalformed("body digest mismatch")
    return _plain_envelope(env, plaintext)


# --- signing ----------------------------------------------------------------


def signature_base(encrypted_data: Element, created: str, nonce: bytes) -> bytes:
    return canonical_serialize(encrypted_data) + created.encode("ascii") + nonce


def _replace_security_header(env: Envelope, header: SecurityHeader) -> Envelope:
    headers = [h for h in env.headers if not is_security_block(h)]
    headers.append(header.to_element())
    return Envelope(headers=headers, body=env.body)


def sign_envelope(env: Envelope, signer: KeyPair, profile: CryptoProfile,
                  signer_id: str | None = None) -> Envelope:
    """Fill the Signature slot of an already-encrypted envelope."""
    header_el = env.security_header()
    if header_el is None or not env.is_encrypted():
        raise InvariantViolation("sign needs EncryptedData and a security header")
    hdr = SecurityHeader.from_element(header_el)
    if signer_id is not None:
        hdr.signer_id = signer_id
    hdr.signature_algorithm = profile.signature
    base = signature_base(env.body_child(), hdr.created, hdr.nonce)
    hdr.signature_value = crypto.sign(base, signer, profile.signature)
    return _replace_security_header(env, hdr)


@dataclass
class VerificationReport:
    signer_id: str
    signature_algorithm: str
    covered_octets: int


def verify_signature(env: Envelope, signer_public: KeyPair | TrustedPeers) -> VerificationReport:
    """Raises SignatureInvalid / UnknownSigner unless the covered bytes are intact."""
    header_el = env.security_header()
    if header_el is None or not env.is_encrypted():
        raise MalformedSecurityHeader("nothing to verify: missing security header or ciphertext")
    hdr = SecurityHeader.from_element(header_el)
    key = _resolve_signer(signer_public, hdr)
    base = signature_base(env.body_child(), hdr.created, hdr.nonce)
    crypto.verify(base, hdr.signature_value, key, hdr.signature_algorithm)
    return VerificationReport(hdr.signer_id, hdr.signature_algorithm, len(base))


def _resolve_signer(peer: KeyPair | TrustedPeers, hdr: SecurityHeader) -> KeyPair:
    if isinstance(peer, TrustedPeers):
        key = peer.resolve(hdr.signer_id, hdr.signature_algorithm)
        if key is None:
            raise UnknownSigner(f"no trusted key for signer {hdr.signer_id!r}")
        return key
    return peer


# --- secure / unsecure ----------------------------------------------------------------


def _assemble_secured(env: Envelope, profile: CryptoProfile, own: KeyPair, signer_id: str,
                      session_key: SymmetricKey, wrapped_key: bytes | None,
                      nonce: bytes, created: str, identity: IdentityClaim | None,
                      rng) -> Envelope:
    """Deterministic assembly given all material; secure() feeds it fresh values."""
    body_digest = crypto.sha1(canonical_serialize(env.body_child()))
    encrypted = encrypt_body(env, session_key, rng)
    token_ct = None
    if identity is not None:
        claim_bytes = canonical_serialize(_claim_to_element(identity))
        token_ct = crypto.cbc_encrypt(session_key, claim_bytes, rng)
    hdr = SecurityHeader(
        cipher_id=profile.symmetric,
        created=created,
        nonce=nonce,
        body_digest=body_digest,
        signature_value=b"",
        signer_id=signer_id,
        signature_algorithm=profile.signature,
        wrapped_key=wrapped_key,
        key_transport=f"RSA{profile.key_transport_bits}" if wrapped_key is not None else None,
        token_ciphertext=token_ct,
    )
    return sign_envelope(_replace_security_header(encrypted, hdr), own, profile)


@dataclass
class SecuredRequest:
    envelope: Envelope
    session_key: SymmetricKey


def secure_detailed(env: Envelope, profile: CryptoProfile, own: KeyPair, peer_public: KeyPair,
                    signer_id: str, identity: IdentityClaim | None = None,
                    rng=crypto.random_bytes, now: float | None = None) -> SecuredRequest:
    """secure() plus the generated session key, which the sender keeps to
    open the response (responses reuse it instead of a second key transport).

    RNG consumption order: session key, nonce, body IV, token IV.
    """
    if peer_public.bits != profile.key_transport_bits:
        raise InvariantViolation(
            f"profile wants RSA-{profile.key_transport_bits} transport, "
            f"peer key is {peer_public.bits} bits")
    session_key = crypto.generate_session_key(profile, rng)
    nonce = rng(NONCE_LENGTH)
    created = format_created(time.time() if now is None else now)
    wrapped = crypto.wrap_key(session_key, peer_public)
    secured = _assemble_secured(env, profile, own, signer_id, session_key, wrapped,
                                nonce, created, identity, rng)
    return SecuredRequest(secured, session_key)


def secure(env: Envelope, profile: CryptoProfile, own: KeyPair, peer_public: KeyPair,
           signer_id: str, identity: IdentityClaim | None = None,
           rng=crypto.random_bytes, now: float | None = None) -> Envelope:
    """Encrypt-then-sign a plaintext envelope, self-contained for unsecure()."""
    return secure_detailed(env, profile, own, peer_public, signer_id, identity, rng, now).envelope


def secure_response(env: Envelope, session_key: SymmetricKey, own: KeyPair, signer_id: str,
                    signature_algorithm: str, identity: IdentityClaim | None = None,
                    rng=crypto.random_bytes, now: float | None = None) -> Envelope:
    """Protect a response under the request's session key (no key transport)."""
    profile = CryptoProfile(session_key.algorithm, crypto.KEY_TRANSPORT_BITS[0], signature_algorithm)
    nonce = rng(NONCE_LENGTH)
    created = format_created(time.time() if now is None else now)
    return _assemble_secured(env, profile, own, signer_id, session_key, None,
                             nonce, created, identity, rng)


@dataclass
class UnsecuredMessage:
    envelope: Envelope
    session_key: SymmetricKey
    header: SecurityHeader
    claim: IdentityClaim | None


def _transport_key(own: KeyPair | dict[int, KeyPair] | None, hdr: SecurityHeader) -> KeyPair:
    bits = 1024 if hdr.key_transport == "RSA1024" else 2048
    if isinstance(own, dict):
        key = own.get(bits)
        if key is None:
            raise KeyTransportFailure(f"no RSA-{bits} transport key available")
        return key
    if own is None:
        raise MalformedSecurityHeader("no private key to unwrap the session key")
    return own


def open_secured(env: Envelope, own: KeyPair | dict[int, KeyPair] | None,
                 peer: KeyPair | TrustedPeers,
                 cache: NonceCache | None, session_key: SymmetricKey | None = None,
                 now: float | None = None, window_s: float = DEFAULT_WINDOW_S,
                 skew_s: float = DEFAULT_SKEW_S) -> UnsecuredMessage:
    """Run the full receive-side check sequence; see module docstring for order.

    ``own`` is the receiver's RSA transport key, or a dict keyed by modulus
    bits when the host serves both sizes. ``session_key`` serves the response
    path (no wrapped key on the wire); ``cache=None`` skips replay tracking.
    """
    now = time.time() if now is None else now

    # structure
    header_el = env.security_header()
    if header_el is None:
        raise MalformedSecurityHeader("no security header block")
    if not env.is_encrypted():
        raise MalformedSecurityHeader("body is not encrypted")
    hdr = SecurityHeader.from_element(header_el)

    # freshness: staleness, then replay lookup
    created_at = hdr.created_epoch()
    if created_at < now - window_s:
        raise StaleMessage(f"created {hdr.created} is older than the {window_s:.0f}s window")
    if created_at > now + skew_s:
        raise StaleMessage(f"created {hdr.created} is too far in the future")
    if cache is not None and cache.seen(hdr.nonce, now):
        raise ReplayDetected("nonce already seen within the window")

    # signature over ciphertext || created || nonce
    key = _resolve_signer(peer, hdr)
    crypto.verify(signature_base(env.body_child(), hdr.created, hdr.nonce),
                  hdr.signature_value, key, hdr.signature_algorithm)

    # key transport
    if hdr.wrapped_key is not None:
        session_key = crypto.unwrap_key(hdr.wrapped_key, _transport_key(own, hdr), hdr.cipher_id)
    elif session_key is None:
        raise MalformedSecurityHeader("no wrapped key and no session key supplied")
    elif session_key.algorithm != hdr.cipher_id:
        raise MalformedSecurityHeader("cipher id does not match the session key")

    # decryption + digest + claim
    plaintext = _decrypt_body_bytes(env, session_key)
    if crypto.sha1(plaintext) != hdr.body_digest:
        raise CiphertextMalformed("body digest mismatch")
    plain_env = _plain_envelope(env, plaintext)
    claim = None
    if hdr.token_ciphertext is not None:
        claim_bytes = crypto.cbc_decrypt(session_key, hdr.token_ciphertext)
        try:
            claim = _claim_from_element(parse_element_bytes(claim_bytes))
        except MalformedXml as exc:
            raise CiphertextMalformed(f"identity claim malformed: {exc}") from None

    # everything passed: the nonce may now burn its replay slot
    if cache is not None and not cache.admit(hdr.nonce, now):
        raise ReplayDetected("nonce already seen within the window")
    return UnsecuredMessage(plain_env, session_key, hdr, claim)


def unsecure(env: Envelope, own: KeyPair | None, peer: KeyPair | TrustedPeers,
             cache: NonceCache | None, **kwargs) -> Envelope:
    """Spec-shaped entry point: checks everything, returns the plaintext envelope."""
    return open_secured(env, own, peer, cache, **kwargs).envelope
