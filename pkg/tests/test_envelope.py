"""Envelope codec: canonical rules, round-trips, strict rejection."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from pockethost.envelope import (
    ENV_XMLNS_ATTR,
    ENVELOPE_NAME,
    MAX_DEPTH,
    MAX_DOCUMENT_BYTES,
    SOAP_ENV_NS,
    Element,
    Envelope,
    canonical_serialize,
    element,
    parse_element_bytes,
    parse_envelope,
    request_envelope,
)
from pockethost.errors import InvariantViolation, MalformedXml, NotAnEnvelope


class TestCanonicalRules:
    def test_attributes_sorted_by_name(self):
        el = Element("a", [("z", "1"), ("b", "2")])
        assert canonical_serialize(el) == b'<a b="2" z="1"/>'

    def test_text_escaping(self):
        el = element("p", None, "x<y")
        assert canonical_serialize(el) == b"<p>x&lt;y</p>"

    def test_all_five_entities_escaped(self):
        el = element("p", {"a": "\"'&<>"}, "\"'&<>")
        raw = canonical_serialize(el)
        assert raw == b'<p a="&quot;&apos;&amp;&lt;&gt;">&quot;&apos;&amp;&lt;&gt;</p>'

    def test_empty_element_self_closes(self):
        assert canonical_serialize(Element("a")) == b"<a/>"

    def test_empty_text_child_same_bytes_as_no_child(self):
        assert canonical_serialize(element("a", None, "")) == canonical_serialize(Element("a"))

    def test_duplicate_attributes_rejected(self):
        el = Element("a", [("k", "1"), ("k", "2")])
        with pytest.raises(InvariantViolation):
            canonical_serialize(el)

    def test_control_characters_rejected(self):
        with pytest.raises(InvariantViolation):
            canonical_serialize(element("a", None, "bad\x01"))

    def test_tab_and_newline_allowed(self):
        el = element("a", None, "one\ttwo\nthree")
        assert parse_element_bytes(canonical_serialize(el)) == el

    def test_utf8_content(self):
        el = element("a", None, "grüße ❤")
        assert parse_element_bytes(canonical_serialize(el)) == el

    def test_attribute_order_insignificant_for_equality_and_bytes(self):
        a = Element("a", [("x", "1"), ("y", "2")])
        b = Element("a", [("y", "2"), ("x", "1")])
        assert a == b
        assert canonical_serialize(a) == canonical_serialize(b)


class TestParserRejection:
    @pytest.mark.parametrize("doc", [
        b"<a>",                      # unclosed
        b"<a></b>",                  # mismatched
        b"<a x='1' x='2'/>",         # duplicate attribute
        b"<a><!-- no comments --></a>",
        b"<?xml version='1.0'?><a/>",
        b"<a><![CDATA[x]]></a>",
        b"<!DOCTYPE a><a/>",
        b"<a>&unknown;</a>",
        b"<a>&amp</a>",              # unterminated entity
        b"<a x=1/>",                 # unquoted attribute
        b"<a/><b/>",                 # trailing content
        b"bare text",
        b"<a \x01='v'/>",
        b"",
    ])
    def test_malformed_documents(self, doc):
        with pytest.raises(MalformedXml):
            parse_element_bytes(doc)

    def test_bad_utf8(self):
        with pytest.raises(MalformedXml):
            parse_element_bytes(b"<a>\xff\xfe</a>")

    def test_size_limit(self):
        big = b"<a>" + b"x" * MAX_DOCUMENT_BYTES + b"</a>"
        with pytest.raises(MalformedXml):
            parse_element_bytes(big)

    def test_depth_limit(self):
        doc = b"<d>" * (MAX_DEPTH + 1) + b"</d>" * (MAX_DEPTH + 1)
        with pytest.raises(MalformedXml):
            parse_element_bytes(doc)

    def test_depth_at_limit_accepted(self):
        doc = b"<d>" * (MAX_DEPTH - 1) + b"<leaf/>" + b"</d>" * (MAX_DEPTH - 1)
        parse_element_bytes(doc)

    def test_raw_gt_in_text_accepted(self):
        el = parse_element_bytes(b"<a>x>y</a>")
        assert el.text() == "x>y"

    def test_single_quoted_attributes_accepted(self):
        el = parse_element_bytes(b"<a k='v'/>")
        assert el.attr("k") == "v"


class TestEnvelopeStructure:
    def test_minimal_envelope(self):
        raw = (b'<env:Envelope xmlns:env="http://schemas.xmlsoap.org/soap/envelope/">'
               b"<env:Body><Echo/></env:Body></env:Envelope>")
        env = parse_envelope(raw)
        assert env.headers == []
        assert env.body_child().name == "Echo"

    def test_indented_envelope_parses(self):
        raw = (b'<env:Envelope xmlns:env="http://schemas.xmlsoap.org/soap/envelope/">\n'
               b"  <env:Header>\n    <Block/>\n  </env:Header>\n"
               b"  <env:Body>\n    <Echo/>\n  </env:Body>\n</env:Envelope>")
        env = parse_envelope(raw)
        assert [h.name for h in env.headers] == ["Block"]
        assert env.body_child().name == "Echo"

    @pytest.mark.parametrize("doc", [
        b"<Envelope><Body><X/></Body></Envelope>",  # wrong names / no namespace
        b'<env:Envelope xmlns:env="urn:wrong"><env:Body><X/></env:Body></env:Envelope>',
        b'<env:Envelope xmlns:env="http://schemas.xmlsoap.org/soap/envelope/"/>',
        b'<env:Envelope xmlns:env="http://schemas.xmlsoap.org/soap/envelope/">'
        b"<env:Body/></env:Envelope>",  # empty body
        b'<env:Envelope xmlns:env="http://schemas.xmlsoap.org/soap/envelope/">'
        b"<env:Body><A/><B/></env:Body></env:Envelope>",  # two operation elements
        b'<env:Envelope xmlns:env="http://schemas.xmlsoap.org/soap/envelope/">'
        b"<env:Body>text<A/></env:Body></env:Envelope>",  # stray text in body
    ])
    def test_not_an_envelope(self, doc):
        with pytest.raises(NotAnEnvelope):
            parse_envelope(doc)

    def test_two_security_headers_rejected(self):
        block = b'<Security xmlns="urn:pockethost:security:1"/>'
        raw = (b'<env:Envelope xmlns:env="http://schemas.xmlsoap.org/soap/envelope/">'
               b"<env:Header>" + block + block + b"</env:Header>"
               b"<env:Body><X/></env:Body></env:Envelope>")
        with pytest.raises(NotAnEnvelope):
            parse_envelope(raw)

    def test_1kb_request_parses_and_reserializes_compactly(self):
        # benchmark-sized request document
        payload = "ab" * 450
        env = request_envelope(element("Echo", None, element("payload", None, payload)))
        raw = canonical_serialize(env)
        assert 900 <= len(raw) <= 1100
        again = canonical_serialize(parse_envelope(raw))
        assert again == raw


# --- randomized round-trip oracles -------------------------------------------

_NAME_ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
_TEXT_ALPHABET = "abc<>&\"' \t\nxyz0189éλ"


def random_element(rnd: random.Random, depth: int = 0) -> Element:
    name = rnd.choice(_NAME_ALPHABET) + "".join(
        rnd.choice(_NAME_ALPHABET + "0123456789.-") for _ in range(rnd.randrange(0, 8)))
    attr_names = rnd.sample("abcdefghij", rnd.randrange(0, 4))
    attributes = [(n, "".join(rnd.choice(_TEXT_ALPHABET) for _ in range(rnd.randrange(0, 10))))
                  for n in attr_names]
    children: list = []
    if depth < 4:
        previous_was_text = False
        for _ in range(rnd.randrange(0, 4)):
            if rnd.random() < 0.5 and not previous_was_text:
                text = "".join(rnd.choice(_TEXT_ALPHABET) for _ in range(rnd.randrange(1, 12)))
                children.append(text)
                previous_was_text = True
            else:
                children.append(random_element(rnd, depth + 1))
                previous_was_text = False
    return Element(name, attributes, children)


def random_envelope(rnd: random.Random) -> Envelope:
    headers = [random_element(rnd) for _ in range(rnd.randrange(0, 3))]
    return Envelope(headers=headers,
                    body=Element("env:Body", [], [random_element(rnd)]))


class TestRoundTripOracles:
    def test_ten_thousand_random_envelopes_round_trip(self):
        rnd = random.Random(0xE57)
        for _ in range(10_000):
            env = random_envelope(rnd)
            raw = canonical_serialize(env)
            assert parse_envelope(raw) == env

    def test_fixed_point_over_random_trees(self):
        rnd = random.Random(0xF1)
        for _ in range(1000):
            tree = random_element(rnd)
            once = canonical_serialize(tree)
            assert canonical_serialize(parse_element_bytes(once)) == once


# hypothesis strategies for shrinkable edge discovery

_names = st.text(alphabet=_NAME_ALPHABET, min_size=1, max_size=6)
_texts = st.text(alphabet=_TEXT_ALPHABET, min_size=1, max_size=12)


def _elements(depth: int):
    children = st.lists(
        _texts if depth == 0 else st.one_of(_texts, _elements(depth - 1)),
        max_size=3)
    attrs = st.dictionaries(_names, st.text(alphabet=_TEXT_ALPHABET, max_size=8), max_size=3)
    return st.builds(lambda n, a, c: Element(n, list(a.items()), c), _names, attrs, children)


class TestHypothesisProperties:
    @settings(max_examples=300, deadline=None)
    @given(_elements(2))
    def test_parse_of_canonical_is_identity(self, tree):
        raw = canonical_serialize(tree)
        assert parse_element_bytes(raw) == tree

    @settings(max_examples=300, deadline=None)
    @given(_elements(2))
    def test_canonical_is_deterministic_under_attr_shuffle(self, tree):
        shuffled = Element(tree.name, list(reversed(tree.attributes)), tree.children)
        assert canonical_serialize(shuffled) == canonical_serialize(tree)
