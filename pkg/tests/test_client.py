"""Client-side payload sizing and invocation behavior."""

import pytest

from pockethost.client import build_payload
from pockethost.envelope import canonical_serialize, element, request_envelope
from pockethost.errors import TargetTooSmall
from pockethost.services import (
    ECHO_OPERATION,
    echo_handler,
    request_params_for_targets,
    sized_response,
)


def request_doc_size(params) -> int:
    op = element(ECHO_OPERATION, None, *[element(k, None, v) for k, v in params])
    return len(canonical_serialize(request_envelope(op)))


class TestBuildPayload:
    def test_benchmark_scenario_sizes_within_two_percent(self):
        params = build_payload(1024, 2048)
        size = request_doc_size(params)
        assert abs(size - 1024) <= 1024 * 0.02
        response = echo_handler(ECHO_OPERATION,
                                element(ECHO_OPERATION, None,
                                        *[element(k, None, v) for k, v in params]))
        response_size = len(canonical_serialize(request_envelope(response)))
        assert abs(response_size - 2048) <= 2048 * 0.02

    def test_sizes_hit_exactly(self):
        params = build_payload(1024, 2048)
        assert request_doc_size(params) == 1024
        response = sized_response(2048)
        assert len(canonical_serialize(request_envelope(response))) == 2048

    def test_determinism(self):
        assert build_payload(1024, 2048) == build_payload(1024, 2048)
        first = canonical_serialize(sized_response(2048))
        second = canonical_serialize(sized_response(2048))
        assert first == second

    def test_target_below_overhead_rejected(self):
        with pytest.raises(TargetTooSmall):
            build_payload(10, 2048)
        with pytest.raises(TargetTooSmall):
            sized_response(10)

    def test_various_targets(self):
        for request_target, response_target in ((300, 400), (1024, 2048), (8192, 16384)):
            params = request_params_for_targets(request_target, response_target)
            assert request_doc_size(params) == request_target


class TestEchoHandler:
    def test_mirrors_params_without_target(self):
        op = element(ECHO_OPERATION, None, element("text", None, "hi"))
        out = echo_handler(ECHO_OPERATION, op)
        assert out.name == "EchoResponse"
        assert out.child("text").text() == "hi"

    def test_sized_mode(self):
        op = element(ECHO_OPERATION, None, element("respond-bytes", None, "512"))
        out = echo_handler(ECHO_OPERATION, op)
        assert len(canonical_serialize(request_envelope(out))) == 512
