"""Built-in Echo service and the deterministic payload sizing it shares with
the client's benchmark payload builder.

The Echo operation mirrors its child elements back; when a ``respond-bytes``
child names a target, the response instead carries filler text sized so the
plaintext canonical response document hits that target exactly.
"""

from __future__ import annotations

from .envelope import Element, canonical_serialize, element, request_envelope
from .errors import TargetTooSmall

_FILLER_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"

ECHO_SERVICE = "Echo"
ECHO_OPERATION = "Echo"
ECHO_RESPONSE = "EchoResponse"
RESPOND_BYTES_PARAM = "respond-bytes"
PAYLOAD_PARAM = "payload"


def filler(n: int) -> str:
    """Deterministic XML-safe filler text of exactly n characters."""
    reps = n // len(_FILLER_ALPHABET) + 1
    return (_FILLER_ALPHABET * reps)[:n]


def _echo_request(params: list[tuple[str, str]]) -> Element:
    return Element(ECHO_OPERATION, [], [element(k, None, v) for k, v in params])


def request_params_for_targets(request_bytes: int, response_bytes: int) -> list[tuple[str, str]]:
    """Parameters making the plaintext canonical request document exactly
    request_bytes long while asking Echo for a response_bytes-long reply."""
    # probe with one filler char: an empty payload would self-close and
    # misstate the per-character overhead
    probe = [(PAYLOAD_PARAM, "x"), (RESPOND_BYTES_PARAM, str(response_bytes))]
    overhead = len(canonical_serialize(request_envelope(_echo_request(probe)))) - 1
    pad = request_bytes - overhead
    if pad < 1:
        raise TargetTooSmall(
            f"request target {request_bytes} is below the {overhead + 1}-octet envelope overhead"
        )
    return [(PAYLOAD_PARAM, filler(pad)), (RESPOND_BYTES_PARAM, str(response_bytes))]


def sized_response(response_bytes: int) -> Element:
    """EchoResponse whose canonical response document is exactly response_bytes."""
    probe = element(ECHO_RESPONSE, None, element(PAYLOAD_PARAM, None, "x"))
    overhead = len(canonical_serialize(request_envelope(probe))) - 1
    pad = response_bytes - overhead
    if pad < 1:
        raise TargetTooSmall(
            f"response target {response_bytes} is below the {overhead + 1}-octet envelope overhead"
        )
    return element(ECHO_RESPONSE, None, element(PAYLOAD_PARAM, None, filler(pad)))


def echo_handler(op_name: str, op: Element, ctx=None) -> Element:
    target = op.child(RESPOND_BYTES_PARAM)
    if target is not None:
        return sized_response(int(target.text()))
    mirrored = [Element(kid.name, list(kid.attributes), list(kid.children))
                for kid in op.element_children()]
    return Element(ECHO_RESPONSE, [], mirrored)


ECHO_WSDL = b"""<definitions name="Echo" targetNamespace="urn:pockethost:echo">
  <portType name="EchoPort">
    <operation name="Echo">
      <input message="Echo"/>
      <output message="EchoResponse"/>
    </operation>
  </portType>
</definitions>
"""
