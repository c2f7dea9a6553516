"""SOAP 1.1 envelope model over a strict XML subset.

The codec understands just enough XML to carry document-literal SOAP:
elements, attributes, character data, and the five built-in entities.
DTDs, processing instructions, comments, CDATA, and an XML declaration are
all rejected. Namespace prefixes are opaque parts of names; ``xmlns``
declarations are ordinary attributes that the profile fixes literally.

``canonical_serialize`` is the byte-exact form signatures and timings are
defined over: attributes sorted by name, all five entities escaped, no
insignificant whitespace, UTF-8 output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvariantViolation, MalformedXml, NotAnEnvelope

SOAP_ENV_NS = "http://schemas.xmlsoap.org/soap/envelope/"
ENV_PREFIX = "env"
ENVELOPE_NAME = f"{ENV_PREFIX}:Envelope"
HEADER_NAME = f"{ENV_PREFIX}:Header"
BODY_NAME = f"{ENV_PREFIX}:Body"
ENV_XMLNS_ATTR = f"xmlns:{ENV_PREFIX}"

# The message-security profile's namespace and its header block name live
# here because the envelope model enforces the at-most-one-security-header
# invariant.
SECURITY_NS = "urn:pockethost:security:1"
SECURITY_BLOCK_NAME = "Security"
ENCRYPTED_DATA_NAME = "EncryptedData"

MAX_DOCUMENT_BYTES = 1 << 20  # 1 MiB
MAX_DEPTH = 64

_ESCAPES = (("&", "&amp;"), ("<", "&lt;"), (">", "&gt;"), ('"', "&quot;"), ("'", "&apos;"))
_ENTITIES = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'"}

_NAME_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_NAME_CHARS = _NAME_START | set("0123456789.-:")


def _check_text(text: str) -> None:
    for ch in text:
        code = ord(ch)
        if code < 0x20 and ch not in "\t\n":
            raise InvariantViolation(f"control character U+{code:04X} in text content")


def _escape(text: str) -> str:
    for raw, ent in _ESCAPES:
        text = text.replace(raw, ent)
    return text


@dataclass
class Element:
    """One element node: qualified name, ordered attributes, ordered children.

    Children are ``Element`` nodes or plain ``str`` text nodes. Attribute
    order is preserved from the source but never significant: equality and
    canonical output treat attributes as a name->value mapping.
    """

    name: str
    attributes: list[tuple[str, str]] = field(default_factory=list)
    children: list["Element | str"] = field(default_factory=list)

    def attr(self, name: str) -> str | None:
        for key, value in self.attributes:
            if key == name:
                return value
        return None

    def child(self, name: str) -> "Element | None":
        for node in self.children:
            if isinstance(node, Element) and node.name == name:
                return node
        return None

    def element_children(self) -> list["Element"]:
        return [node for node in self.children if isinstance(node, Element)]

    def text(self) -> str:
        """Concatenated direct text content."""
        return "".join(node for node in self.children if isinstance(node, str))

    def _merged_children(self) -> list["Element | str"]:
        merged: list[Element | str] = []
        for node in self.children:
            if isinstance(node, str):
                if not node:
                    continue
                if merged and isinstance(merged[-1], str):
                    merged[-1] = merged[-1] + node
                    continue
            merged.append(node)
        return merged

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Element):
            return NotImplemented
        return (
            self.name == other.name
            and dict(self.attributes) == dict(other.attributes)
            and self._merged_children() == other._merged_children()
        )

    __hash__ = None  # mutable


def element(name: str, attrs: dict[str, str] | None = None, *children: Element | str) -> Element:
    """Shorthand constructor used heavily by builders and tests."""
    return Element(name, list((attrs or {}).items()), list(children))


@dataclass
class Envelope:
    """Parsed SOAP envelope: header blocks plus the Body element.

    ``body`` is the ``env:Body`` element itself; its single element child is
    the operation element (or the EncryptedData element once secured).
    """

    headers: list[Element] = field(default_factory=list)
    body: Element = field(default_factory=lambda: Element(BODY_NAME))

    def body_child(self) -> Element:
        kids = self.body.element_children()
        if len(kids) != 1:
            raise InvariantViolation(f"body must hold exactly one element, found {len(kids)}")
        return kids[0]

    def is_encrypted(self) -> bool:
        kids = self.body.element_children()
        return len(kids) == 1 and kids[0].name == ENCRYPTED_DATA_NAME

    def security_header(self) -> Element | None:
        for block in self.headers:
            if is_security_block(block):
                return block
        return None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Envelope):
            return NotImplemented
        return self.headers == other.headers and self.body == other.body

    __hash__ = None


def is_security_block(el: Element) -> bool:
    return el.name == SECURITY_BLOCK_NAME and el.attr("xmlns") == SECURITY_NS


def request_envelope(operation: Element, headers: list[Element] | None = None) -> Envelope:
    """Wrap an operation element into a fresh envelope."""
    return Envelope(headers=list(headers or []), body=Element(BODY_NAME, [], [operation]))


# --- canonical serialization -------------------------------------------------


def _serialize_element(el: Element, out: list[str], depth: int) -> None:
    if depth > MAX_DEPTH:
        raise InvariantViolation(f"nesting deeper than {MAX_DEPTH}")
    _check_name(el.name)
    seen = set()
    for key, _ in el.attributes:
        if key in seen:
            raise InvariantViolation(f"duplicate attribute {key!r} on <{el.name}>")
        seen.add(key)
    out.append(f"<{el.name}")
    for key, value in sorted(el.attributes):
        _check_name(key)
        _check_text(value)
        out.append(f' {key}="{_escape(value)}"')
    children = el._merged_children()  # empty text nodes must not affect the bytes
    if not children:
        out.append("/>")
        return
    out.append(">")
    for node in children:
        if isinstance(node, str):
            _check_text(node)
            out.append(_escape(node))
        else:
            _serialize_element(node, out, depth + 1)
    out.append(f"</{el.name}>")


def _check_name(name: str) -> None:
    if not name or name[0] not in _NAME_START or any(c not in _NAME_CHARS for c in name):
        raise InvariantViolation(f"invalid element/attribute name {name!r}")


def _envelope_root(env: Envelope) -> Element:
    children: list[Element | str] = []
    if env.headers:
        children.append(Element(HEADER_NAME, [], list(env.headers)))
    children.append(env.body)
    return Element(ENVELOPE_NAME, [(ENV_XMLNS_ATTR, SOAP_ENV_NS)], children)


def canonical_serialize(node: Element | Envelope) -> bytes:
    """Deterministic UTF-8 bytes: equal trees yield identical output."""
    if isinstance(node, Envelope):
        if sum(1 for b in node.headers if is_security_block(b)) > 1:
            raise InvariantViolation("more than one security header block")
        node = _envelope_root(node)
    out: list[str] = []
    _serialize_element(node, out, 1)
    return "".join(out).encode("utf-8")


def canonical_equal(a: Element | Envelope, b: Element | Envelope) -> bool:
    return canonical_serialize(a) == canonical_serialize(b)


# --- parsing ------------------------------------------------------------------


class _Parser:
    """Recursive-descent parser for the XML subset."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.n = len(text)

    def fail(self, message: str) -> MalformedXml:
        return MalformedXml(f"{message} at offset {self.pos}")

    def parse_document(self) -> Element:
        self.skip_whitespace()
        if not self.starts_with("<"):
            raise self.fail("document must start with an element")
        root = self.parse_element(1)
        self.skip_whitespace()
        if self.pos != self.n:
            raise self.fail("trailing content after document element")
        return root

    def skip_whitespace(self) -> None:
        while self.pos < self.n and self.text[self.pos] in " \t\n":
            self.pos += 1

    def starts_with(self, token: str) -> bool:
        return self.text.startswith(token, self.pos)

    def parse_name(self) -> str:
        start = self.pos
        if self.pos >= self.n or self.text[self.pos] not in _NAME_START:
            raise self.fail("expected a name")
        self.pos += 1
        while self.pos < self.n and self.text[self.pos] in _NAME_CHARS:
            self.pos += 1
        return self.text[start:self.pos]

    def parse_element(self, depth: int) -> Element:
        if depth > MAX_DEPTH:
            raise self.fail(f"nesting deeper than {MAX_DEPTH}")
        assert self.text[self.pos] == "<"
        self.pos += 1
        if self.pos < self.n and self.text[self.pos] in "?!":
            raise self.fail("processing instructions, comments, DTDs and CDATA are not supported")
        name = self.parse_name()
        attributes: list[tuple[str, str]] = []
        seen: set[str] = set()
        while True:
            had_space = self.pos < self.n and self.text[self.pos] in " \t\n"
            self.skip_whitespace()
            if self.pos >= self.n:
                raise self.fail(f"unterminated start tag <{name}>")
            ch = self.text[self.pos]
            if ch == ">":
                self.pos += 1
                break
            if ch == "/":
                if not self.starts_with("/>"):
                    raise self.fail("expected '/>'")
                self.pos += 2
                return Element(name, attributes, [])
            if not had_space:
                raise self.fail("expected whitespace before attribute")
            key = self.parse_name()
            if key in seen:
                raise self.fail(f"duplicate attribute {key!r}")
            seen.add(key)
            if self.pos >= self.n or self.text[self.pos] != "=":
                raise self.fail("expected '=' after attribute name")
            self.pos += 1
            attributes.append((key, self.parse_attribute_value()))
        children = self.parse_content(name, depth)
        return Element(name, attributes, children)

    def parse_attribute_value(self) -> str:
        if self.pos >= self.n or self.text[self.pos] not in "\"'":
            raise self.fail("attribute value must be quoted")
        quote = self.text[self.pos]
        self.pos += 1
        value = self.scan_text(stop_chars=quote + "<")
        if self.pos >= self.n or self.text[self.pos] != quote:
            raise self.fail("unterminated attribute value")
        self.pos += 1
        return value

    def parse_content(self, name: str, depth: int) -> list[Element | str]:
        children: list[Element | str] = []
        while True:
            if self.pos >= self.n:
                raise self.fail(f"unclosed element <{name}>")
            if self.text[self.pos] == "<":
                if self.starts_with("</"):
                    self.pos += 2
                    end_name = self.parse_name()
                    if end_name != name:
                        raise self.fail(f"mismatched end tag </{end_name}> for <{name}>")
                    self.skip_whitespace()
                    if self.pos >= self.n or self.text[self.pos] != ">":
                        raise self.fail("expected '>' in end tag")
                    self.pos += 1
                    return children
                children.append(self.parse_element(depth + 1))
            else:
                text = self.scan_text(stop_chars="<")
                if text:
                    children.append(text)

    def scan_text(self, stop_chars: str) -> str:
        parts: list[str] = []
        while self.pos < self.n:
            ch = self.text[self.pos]
            if ch in stop_chars:
                break
            if ch == "&":
                semi = self.text.find(";", self.pos + 1, self.pos + 7)
                if semi < 0:
                    raise self.fail("bad entity reference")
                entity = self.text[self.pos + 1:semi]
                if entity not in _ENTITIES:
                    raise self.fail(f"unknown entity &{entity};")
                parts.append(_ENTITIES[entity])
                self.pos = semi + 1
                continue
            code = ord(ch)
            if code < 0x20 and ch not in "\t\n":
                raise self.fail(f"control character U+{code:04X}")
            parts.append(ch)
            self.pos += 1
        return "".join(parts)


def parse_element_bytes(data: bytes) -> Element:
    """Parse one element document from UTF-8 bytes (no envelope structuring)."""
    if len(data) > MAX_DOCUMENT_BYTES:
        raise MalformedXml(f"document exceeds {MAX_DOCUMENT_BYTES} bytes")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedXml(f"not valid UTF-8: {exc}") from None
    return _Parser(text).parse_document()


def _strip_whitespace_nodes(nodes: list[Element | str], where: str) -> list[Element]:
    kept: list[Element] = []
    for node in nodes:
        if isinstance(node, str):
            if node.strip(" \t\n"):
                raise NotAnEnvelope(f"unexpected text inside {where}")
            continue
        kept.append(node)
    return kept


def parse_envelope(data: bytes) -> Envelope:
    """Parse and structure a SOAP envelope document.

    Whitespace-only text between the structural elements (Envelope, Header,
    around the single Body child) is dropped so hand-indented documents
    parse; everything inside the operation element is preserved verbatim.
    """
    root = parse_element_bytes(data)
    if root.name != ENVELOPE_NAME or root.attr(ENV_XMLNS_ATTR) != SOAP_ENV_NS:
        raise NotAnEnvelope(f"root must be <{ENVELOPE_NAME}> in the SOAP 1.1 namespace")
    if len(root.attributes) != 1:
        raise NotAnEnvelope("envelope element carries exactly the xmlns:env declaration")
    top = _strip_whitespace_nodes(root.children, ENVELOPE_NAME)
    headers: list[Element] = []
    if top and top[0].name == HEADER_NAME:
        if top[0].attributes:
            raise NotAnEnvelope("header element carries no attributes")
        headers = _strip_whitespace_nodes(top[0].children, HEADER_NAME)
        top = top[1:]
    if len(top) != 1 or top[0].name != BODY_NAME:
        raise NotAnEnvelope("envelope must hold exactly one Body (after an optional Header)")
    body = top[0]
    body_kids = _strip_whitespace_nodes(body.children, BODY_NAME)
    if len(body_kids) != 1:
        raise NotAnEnvelope(f"body must hold exactly one element, found {len(body_kids)}")
    if sum(1 for b in headers if is_security_block(b)) > 1:
        raise NotAnEnvelope("more than one security header block")
    return Envelope(headers=headers, body=Element(BODY_NAME, list(body.attributes), [body_kids[0]]))
