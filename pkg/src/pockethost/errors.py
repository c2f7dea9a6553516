"""Exception hierarchy shared across the package.

Every failure surfaced to callers is one of these types; the host maps them
onto SOAP fault codes (see host.FAULT_CODES).
"""


class PocketHostError(Exception):
    """Base class for all package errors."""


# --- envelope codec ---------------------------------------------------------

class MalformedXml(PocketHostError):
    """Input violates the XML subset grammar (unbalanced tags, duplicate
    attributes, forbidden constructs, bad UTF-8, size/depth limits)."""


class NotAnEnvelope(PocketHostError):
    """Well-formed XML, but not a recognizable SOAP envelope structure."""


class InvariantViolation(PocketHostError):
    """An in-memory Element/Envelope breaks a structural invariant."""


# --- message-level security -------------------------------------------------

class MsgSecError(PocketHostError):
    """Base for message security failures."""


class RngFailure(MsgSecError):
    """The OS random source failed to deliver bytes."""


class MalformedSecurityHeader(MsgSecError):
    """Security header missing, or a field fails structural validation
    (bad base64, wrong nonce length, unknown algorithm id, unparseable
    timestamp)."""


class StaleMessage(MsgSecError):
    """Timestamp outside the freshness window (too old or far future)."""


class ReplayDetected(MsgSecError):
    """Nonce already seen within the replay window."""


class SignatureInvalid(MsgSecError):
    """Signature does not verify over the covered bytes."""


class UnknownSigner(SignatureInvalid):
    """Signer id is not among the trusted peers."""


class KeyTransportFailure(MsgSecError):
    """Wrapped session key cannot be recovered (size/padding violation)."""


class CiphertextMalformed(MsgSecError):
    """Encrypted payload structurally broken (length, base64, digest)."""


class PaddingError(CiphertextMalformed):
    """Block-cipher padding check failed after decryption."""


# --- end-point security -----------------------------------------------------

class EndpointError(PocketHostError):
    """Base for authentication/authorization failures."""


class AuthFailed(EndpointError):
    """Credentials rejected. Deliberately identical for wrong password and
    unknown principal."""


class Locked(EndpointError):
    """Too many consecutive failures; principal temporarily locked out."""


class ChallengeExpired(EndpointError):
    """Challenge no longer valid."""


class ChallengeReplayed(EndpointError):
    """Challenge already consumed by a successful verification."""


class AuthServiceUnreachable(EndpointError):
    """Delegated authentication service did not answer."""


class TokenExpired(EndpointError):
    """Session token past its expiry."""


class TokenUnknown(EndpointError):
    """Session token not recognized (never issued, consumed, or bound to a
    different session)."""


class RateExceeded(EndpointError):
    """Per-source request budget exhausted."""


# --- host runtime -----------------------------------------------------------

class HostError(PocketHostError):
    """Base for host runtime errors."""


class DuplicateService(HostError):
    """Service name already deployed."""


class UnknownService(HostError):
    """No such service in the registry."""


class AdminAuthFailed(HostError):
    """Admin request lacked a valid admin credential."""


class UnknownRequestId(HostError):
    """Approval decision names a request id that was never enqueued."""


class AlreadyDecided(HostError):
    """Approval request already reached its terminal decision."""


# --- client -----------------------------------------------------------------

class ClientError(PocketHostError):
    """Base for client-side errors."""


class TransportError(ClientError):
    """Could not reach the host or the exchange broke mid-flight."""


class ResponseTampered(ClientError):
    """Response failed client-side security checks."""


class TargetTooSmall(ClientError):
    """Requested payload size below the fixed envelope overhead."""


class HostFault(ClientError):
    """Host answered with a SOAP fault."""

    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


class BenchmarkRowFailed(PocketHostError):
    """A benchmark repetition failed; the whole row is aborted."""
