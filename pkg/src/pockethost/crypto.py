"""Primitive layer: algorithm matrix, keys, ciphers, signatures, key transport.

Everything here delegates the actual cryptography to the `cryptography`
package; this module owns algorithm identifiers, length rules, and the
strict encodings the wire profile depends on. SHA-1, RSA-1024 and 3DES are
deliberate period-faithful choices, not recommendations (see README).
"""

from __future__ import annotations

import base64
import binascii
import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, padding as sym_padding, serialization
from cryptography.hazmat.primitives.asymmetric import dsa, padding as asym_padding, rsa
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

try:  # moved in cryptography 43
    from cryptography.hazmat.decrepit.ciphers.algorithms import TripleDES
except ImportError:  # pragma: no cover
    from cryptography.hazmat.primitives.ciphers.algorithms import TripleDES

from .errors import (
    CiphertextMalformed,
    KeyTransportFailure,
    PaddingError,
    RngFailure,
    SignatureInvalid,
)

# (key octets, block octets) per symmetric algorithm, in matrix order.
SYMMETRIC_ALGORITHMS: dict[str, tuple[int, int]] = {
    "TRIPLEDES": (24, 8),
    "AES128": (16, 16),
    "AES192": (24, 16),
    "AES256": (32, 16),
}
SYMMETRIC_ORDER = tuple(SYMMETRIC_ALGORITHMS)
KEY_TRANSPORT_BITS = (1024, 2048)
SIGNATURE_ALGORITHMS = ("DSAwithSHA1", "RSAwithSHA1")
DSA_BITS = 1024  # the classical DSS pairing with SHA-1


@dataclass(frozen=True, order=True)
class CryptoProfile:
    """One cell of the evaluation matrix: cipher x key-transport x signer."""

    symmetric: str
    key_transport_bits: int
    signature: str

    def __post_init__(self):
        if self.symmetric not in SYMMETRIC_ALGORITHMS:
            raise ValueError(f"unknown symmetric algorithm {self.symmetric!r}")
        if self.key_transport_bits not in KEY_TRANSPORT_BITS:
            raise ValueError(f"key transport must be one of {KEY_TRANSPORT_BITS}")
        if self.signature not in SIGNATURE_ALGORITHMS:
            raise ValueError(f"unknown signature algorithm {self.signature!r}")

    @property
    def key_length(self) -> int:
        return SYMMETRIC_ALGORITHMS[self.symmetric][0]

    @property
    def block_length(self) -> int:
        return SYMMETRIC_ALGORITHMS[self.symmetric][1]

    @property
    def label(self) -> str:
        return f"{self.symmetric}/RSA{self.key_transport_bits}/{self.signature}"

    @classmethod
    def parse(cls, label: str) -> "CryptoProfile":
        parts = label.split("/")
        if len(parts) != 3 or not parts[1].startswith("RSA"):
            raise ValueError(f"profile label must look like AES256/RSA1024/RSAwithSHA1, got {label!r}")
        return cls(parts[0], int(parts[1][3:]), parts[2])

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (
            SYMMETRIC_ORDER.index(self.symmetric),
            self.key_transport_bits,
            SIGNATURE_ALGORITHMS.index(self.signature),
        )


# Recommended default: strongest cipher at the cheaper asymmetric cost.
RECOMMENDED_PROFILE = CryptoProfile("AES256", 1024, "RSAwithSHA1")


def all_profiles() -> list[CryptoProfile]:
    """The full 16-cell matrix in deterministic (symmetric, bits, signature) order."""
    cells = [
        CryptoProfile(sym, bits, sig)
        for sym in SYMMETRIC_ORDER
        for bits in KEY_TRANSPORT_BITS
        for sig in SIGNATURE_ALGORITHMS
    ]
    return sorted(cells, key=lambda p: p.sort_key)


def random_bytes(n: int) -> bytes:
    try:
        data = os.urandom(n)
    except OSError as exc:  # pragma: no cover
        raise RngFailure(str(exc)) from exc
    if len(data) != n:  # pragma: no cover
        raise RngFailure(f"asked for {n} octets, got {len(data)}")
    return data


@dataclass
class SymmetricKey:
    algorithm: str
    octets: bytes

    def __post_init__(self):
        expected = SYMMETRIC_ALGORITHMS[self.algorithm][0]
        if len(self.octets) != expected:
            raise ValueError(f"{self.algorithm} key must be {expected} octets, got {len(self.octets)}")

    @property
    def block_length(self) -> int:
        return SYMMETRIC_ALGORITHMS[self.algorithm][1]


def generate_session_key(profile: CryptoProfile, rng=random_bytes) -> SymmetricKey:
    return SymmetricKey(profile.symmetric, rng(profile.key_length))


@dataclass
class KeyPair:
    """RSA or DSA key material; ``private`` is None for public-only views."""

    algorithm: str  # "RSA" | "DSA"
    public: object
    private: object | None
    bits: int

    @classmethod
    def generate_rsa(cls, bits: int) -> "KeyPair":
        if bits not in KEY_TRANSPORT_BITS:
            raise ValueError(f"RSA size must be one of {KEY_TRANSPORT_BITS}")
        key = rsa.generate_private_key(public_exponent=65537, key_size=bits)
        return cls("RSA", key.public_key(), key, bits)

    @classmethod
    def generate_dsa(cls, bits: int = DSA_BITS) -> "KeyPair":
        key = dsa.generate_private_key(key_size=bits)
        return cls("DSA", key.public_key(), key, bits)

    def public_only(self) -> "KeyPair":
        return KeyPair(self.algorithm, self.public, None, self.bits)

    def private_pem(self) -> str:
        return self.private.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        ).decode("ascii")

    def public_pem(self) -> str:
        return self.public.public_bytes(
            serialization.Encoding.PEM,
            serialization.PublicFormat.SubjectPublicKeyInfo,
        ).decode("ascii")

    @classmethod
    def from_private_pem(cls, pem: str) -> "KeyPair":
        key = serialization.load_pem_private_key(pem.encode("ascii"), password=None)
        return cls(_algorithm_of(key), key.public_key(), key, key.key_size)

    @classmethod
    def from_public_pem(cls, pem: str) -> "KeyPair":
        key = serialization.load_pem_public_key(pem.encode("ascii"))
        return cls(_algorithm_of(key), key, None, key.key_size)


def _algorithm_of(key) -> str:
    if isinstance(key, (rsa.RSAPrivateKey, rsa.RSAPublicKey)):
        return "RSA"
    if isinstance(key, (dsa.DSAPrivateKey, dsa.DSAPublicKey)):
        return "DSA"
    raise ValueError(f"unsupported key type {type(key).__name__}")


# --- key transport (RSA PKCS#1 v1.5) -----------------------------------------


def wrap_key(key: SymmetricKey, recipient_public: KeyPair) -> bytes:
    if recipient_public.algorithm != "RSA" or recipient_public.bits not in KEY_TRANSPORT_BITS:
        raise KeyTransportFailure("recipient key must be RSA of 1024 or 2048 bits")
    return recipient_public.public.encrypt(key.octets, asym_padding.PKCS1v15())


def unwrap_key(wrapped: bytes, recipient: KeyPair, algorithm: str) -> SymmetricKey:
    """Recover and length-check a session key.

    OpenSSL's implicit-rejection countermeasure makes a bad PKCS#1 v1.5
    decryption return garbage instead of raising, so the length check is the
    load-bearing validation; right-length garbage gets caught downstream by
    the body digest.
    """
    if recipient.algorithm != "RSA" or recipient.private is None:
        raise KeyTransportFailure("unwrap needs an RSA private key")
    if len(wrapped) != recipient.bits // 8:
        raise KeyTransportFailure(
            f"wrapped key must be {recipient.bits // 8} octets, got {len(wrapped)}"
        )
    try:
        raw = recipient.private.decrypt(wrapped, asym_padding.PKCS1v15())
    except ValueError as exc:
        raise KeyTransportFailure(f"key transport padding violation: {exc}") from None
    expected = SYMMETRIC_ALGORITHMS[algorithm][0]
    if len(raw) != expected:
        raise KeyTransportFailure(f"recovered key has {len(raw)} octets, expected {expected}")
    return SymmetricKey(algorithm, raw)


# --- symmetric CBC with PKCS#7 ------------------------------------------------


def _cipher(key: SymmetricKey, iv: bytes) -> Cipher:
    if key.algorithm == "TRIPLEDES":
        return Cipher(TripleDES(key.octets), modes.CBC(iv))
    return Cipher(algorithms.AES(key.octets), modes.CBC(iv))


def cbc_encrypt(key: SymmetricKey, plaintext: bytes, rng=random_bytes) -> bytes:
    """Encrypt under CBC with PKCS#7 padding; returns iv || ciphertext."""
    block = key.block_length
    iv = rng(block)
    padder = sym_padding.PKCS7(block * 8).padder()
    padded = padder.update(plaintext) + padder.finalize()
    enc = _cipher(key, iv).encryptor()
    return iv + enc.update(padded) + enc.finalize()


def cbc_decrypt(key: SymmetricKey, blob: bytes) -> bytes:
    block = key.block_length
    if len(blob) < 2 * block or (len(blob) - block) % block != 0:
        raise CiphertextMalformed(
            f"ciphertext must be iv plus a positive multiple of {block} octets, got {len(blob)}"
        )
    iv, ct = blob[:block], blob[block:]
    dec = _cipher(key, iv).decryptor()
    padded = dec.update(ct) + dec.finalize()
    unpadder = sym_padding.PKCS7(block * 8).unpadder()
    try:
        return unpadder.update(padded) + unpadder.finalize()
    except ValueError as exc:
        raise PaddingError(f"padding check failed: {exc}") from None


# --- digests and signatures ---------------------------------------------------


def sha1(data: bytes) -> bytes:
    digest = hashes.Hash(hashes.SHA1())
    digest.update(data)
    return digest.finalize()


def sign(data: bytes, signer: KeyPair, signature_algorithm: str) -> bytes:
    if signer.private is None:
        raise SignatureInvalid("signing needs a private key")
    if signature_algorithm == "RSAwithSHA1":
        if signer.algorithm != "RSA":
            raise SignatureInvalid("RSAwithSHA1 needs an RSA key")
        return signer.private.sign(data, asym_padding.PKCS1v15(), hashes.SHA1())
    if signature_algorithm == "DSAwithSHA1":
        if signer.algorithm != "DSA":
            raise SignatureInvalid("DSAwithSHA1 needs a DSA key")
        return signer.private.sign(data, hashes.SHA1())
    raise SignatureInvalid(f"unknown signature algorithm {signature_algorithm!r}")


def verify(data: bytes, signature: bytes, signer_public: KeyPair, signature_algorithm: str) -> None:
    try:
        if signature_algorithm == "RSAwithSHA1":
            if signer_public.algorithm != "RSA":
                raise InvalidSignature
            signer_public.public.verify(signature, data, asym_padding.PKCS1v15(), hashes.SHA1())
        elif signature_algorithm == "DSAwithSHA1":
            if signer_public.algorithm != "DSA":
                raise InvalidSignature
            signer_public.public.verify(signature, data, hashes.SHA1())
        else:
            raise InvalidSignature
    except InvalidSignature:
        raise SignatureInvalid("signature does not verify over the covered bytes") from None


# --- strict base64 -------------------------------------------------------------


def b64encode(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64decode_strict(text: str) -> bytes:
    """Decode, rejecting any non-canonical encoding.

    Plain b64decode accepts non-zero trailing bits ('QR==' decodes like
    'QQ=='), which would let some single-bit tampering survive unnoticed.
    """
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, UnicodeEncodeError) as exc:
        raise CiphertextMalformed(f"invalid base64: {exc}") from None
    if base64.b64encode(raw).decode("ascii") != text:
        raise CiphertextMalformed("non-canonical base64 encoding")
    return raw
