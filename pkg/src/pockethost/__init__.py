"""Secured SOAP service host, matching client, and phase-timed benchmark."""

from .crypto import CryptoProfile, KeyPair, SymmetricKey, all_profiles
from .envelope import Element, Envelope, canonical_serialize, parse_envelope
from .timing import PhaseTimings, security_effort, total_invocation_time

__version__ = "0.1.0"

__all__ = [
    "CryptoProfile",
    "Element",
    "Envelope",
    "KeyPair",
    "PhaseTimings",
    "SymmetricKey",
    "all_profiles",
    "canonical_serialize",
    "parse_envelope",
    "security_effort",
    "total_invocation_time",
    "__version__",
]
