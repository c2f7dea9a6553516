"""Shared host/request builders for the host, HTTP and acceptance tests."""

from __future__ import annotations

from pockethost import msgsec, services
from pockethost.crypto import CryptoProfile
from pockethost.endpoint import AclEntry, AclMode, make_principal
from pockethost.envelope import Envelope, canonical_serialize, element, parse_envelope, request_envelope
from pockethost.host import HostConfig, OperationDef, ServiceDescriptor, ServiceHost, fault_of
from pockethost.msgsec import PasswordClaim, TrustedPeers

RECOMMENDED = CryptoProfile("AES256", 1024, "RSAwithSHA1")
ADMIN_SECRET = "test-admin-secret"

# low iteration count keeps per-test auth fast; production default is higher
TEST_PBKDF2_ITERATIONS = 1000


def build_host(keys, *, echo_acl: AclMode | None = AclMode.ALLOW,
               requires_approval: bool = False, approval_timeout_s: float = 30.0,
               rate_capacity: int = 100_000, rate_window_s: float = 60.0,
               busy: bool = False, local_auth: bool = True,
               delegate_auth_endpoint: str | None = None,
               nonce_window_s: float = 300.0, listen_port: int = 0,
               console_dir: str | None = None) -> ServiceHost:
    trusted = TrustedPeers()
    trusted.add("alice", keys.client_rsa)
    trusted.add("alice", keys.client_dsa)
    config = HostConfig(
        transport_keys={1024: keys.host_transport_1024, 2048: keys.host_transport_2048},
        signing_keys={"RSA": keys.host_rsa, "DSA": keys.host_dsa},
        trusted=trusted,
        admin_secret=ADMIN_SECRET,
        approval_timeout_s=approval_timeout_s,
        rate_capacity=rate_capacity,
        rate_window_s=rate_window_s,
        busy=busy,
        local_auth=local_auth,
        delegate_auth_endpoint=delegate_auth_endpoint,
        nonce_window_s=nonce_window_s,
        listen_port=listen_port,
        console_dir=console_dir,
    )
    host = ServiceHost(config)
    host.registry.add(make_principal("alice", "s3cret", roles=("friend",),
                                     public_key=keys.client_rsa.public_only(),
                                     iterations=TEST_PBKDF2_ITERATIONS))
    host.registry.add(make_principal("denied-dan", "s3cret", roles=("blocked",),
                                     iterations=TEST_PBKDF2_ITERATIONS))
    if echo_acl is not None:
        host.acl.put(AclEntry(services.ECHO_SERVICE, "friend", echo_acl))
    host.acl.put(AclEntry(services.ECHO_SERVICE, "blocked", AclMode.DENY))
    host.deploy_service(ServiceDescriptor(
        name=services.ECHO_SERVICE,
        operations=[OperationDef(services.ECHO_OPERATION, ("payload",), services.ECHO_RESPONSE)],
        handler=services.echo_handler,
        requires_approval=requires_approval,
        wsdl_doc=services.ECHO_WSDL,
    ))
    return host


def echo_envelope(payload: str = "hi") -> Envelope:
    return request_envelope(element(services.ECHO_OPERATION, None,
                                    element("payload", None, payload)))


def make_secured(keys, env: Envelope | None = None,
                 claim=PasswordClaim("alice", "s3cret"),
                 profile: CryptoProfile = RECOMMENDED, signer_id: str = "alice",
                 now: float | None = None):
    """Returns (wire bytes, session key) for a signed+encrypted request."""
    env = env if env is not None else echo_envelope()
    signer = None
    if profile.signature == "RSAwithSHA1":
        signer = keys.client_rsa
    else:
        signer = keys.client_dsa
    transport = keys.host_transport_1024 if profile.key_transport_bits == 1024 \
        else keys.host_transport_2048
    secured = msgsec.secure_detailed(env, profile, signer, transport.public_only(),
                                     signer_id, identity=claim, now=now)
    return canonical_serialize(secured.envelope), secured.session_key


def decode_response(keys, raw: bytes, session_key):
    """('ok', Element) for results, ('fault', code, detail) for faults."""
    env = parse_envelope(raw)
    if env.is_encrypted():
        trust = TrustedPeers()
        trust.add("host", keys.host_rsa)
        trust.add("host", keys.host_dsa)
        opened = msgsec.open_secured(env, None, trust, None, session_key=session_key)
        env = opened.envelope
    fault = fault_of(env)
    if fault is not None:
        return ("fault", fault[0], fault[1])
    return ("ok", env.body_child())
