"""Deterministic canonical XML plus strict parsers for federation documents.

The canonical form is this toolkit's own: attributes sorted by
(namespace URI, local name), namespace declarations emitted on first use,
no insignificant whitespace, UTF-8, no XML declaration. Identical logical
documents always serialize to identical bytes, which is what signing and
verification operate on. Interop with W3C exclusive C14N is a non-goal.

Parsing is strict for SAML-namespace content (unknown elements rejected)
and preserves foreign-namespace elements opaquely so signature coverage
survives. DTDs and external entities are rejected outright.
"""

from __future__ import annotations

import base64
import binascii
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace

from .core import (
    Assertion,
    Attribute,
    AuthnRequest,
    AuthnStatement,
    Conditions,
    EncryptedAssertion,
    EntityId,
    Instant,
    LogoutRequest,
    LogoutResponse,
    Response,
    SamlError,
    Signature,
    Subject,
    SubjectConfirmation,
)

NS_ASSERTION = "urn:oasis:names:tc:SAML:2.0:assertion"
NS_PROTOCOL = "urn:oasis:names:tc:SAML:2.0:protocol"
NS_METADATA = "urn:oasis:names:tc:SAML:2.0:metadata"
NS_DSIG = "http://www.w3.org/2000/09/xmldsig#"
NS_XMLENC = "http://www.w3.org/2001/04/xmlenc#"
NS_XML = "http://www.w3.org/XML/1998/namespace"
NS_ENVELOPE = "http://schemas.xmlsoap.org/soap/envelope/"

_SAML_NAMESPACES = {NS_ASSERTION, NS_PROTOCOL, NS_METADATA}

PREFERRED_PREFIXES = {
    NS_ASSERTION: "saml",
    NS_PROTOCOL: "samlp",
    NS_METADATA: "md",
    NS_DSIG: "ds",
    NS_XMLENC: "xenc",
    NS_ENVELOPE: "env",
}

BINDING_HTTP_POST = "urn:oasis:names:tc:SAML:2.0:bindings:HTTP-POST"
BINDING_HTTP_REDIRECT = "urn:oasis:names:tc:SAML:2.0:bindings:HTTP-Redirect"
BINDING_HTTP_ARTIFACT = "urn:oasis:names:tc:SAML:2.0:bindings:HTTP-Artifact"
BINDING_SOAP = "urn:oasis:names:tc:SAML:2.0:bindings:SOAP"
KNOWN_BINDINGS = frozenset(
    [BINDING_HTTP_POST, BINDING_HTTP_REDIRECT, BINDING_HTTP_ARTIFACT, BINDING_SOAP]
)

ALG_AES128_CBC = "http://www.w3.org/2001/04/xmlenc#aes128-cbc"
ALG_RSA_SHA256 = "http://www.w3.org/2001/04/xmldsig-more#rsa-sha256"
ALG_SHA256 = "http://www.w3.org/2001/04/xmlenc#sha256"


class MalformedXml(SamlError):
    pass


class MissingRequiredElement(SamlError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


class BadTimestamp(SamlError):
    pass


class UnknownRole(SamlError):
    pass


class DuplicateDefaultAcs(SamlError):
    pass


# ---------------------------------------------------------------------------
# Element model and canonical serialization
# ---------------------------------------------------------------------------

AttrKey = tuple[str, str]  # (namespace URI, local name); "" = no namespace


@dataclass(frozen=True)
class XmlElement:
    """Namespace-resolved element: sorted attributes, ordered children.

    ``text`` and ``children`` are mutually exclusive; mixed content is not
    representable and is rejected at parse time.
    """

    ns: str
    local: str
    attrs: tuple[tuple[AttrKey, str], ...] = ()
    children: tuple[XmlElement, ...] = ()
    text: str = ""

    def attr(self, name: str, ns: str = "") -> str | None:
        for key, value in self.attrs:
            if key == (ns, name):
                return value
        return None

    def find(self, local: str, ns: str) -> XmlElement | None:
        for child in self.children:
            if child.local == local and child.ns == ns:
                return child
        return None

    def find_all(self, local: str, ns: str) -> tuple[XmlElement, ...]:
        return tuple(c for c in self.children if c.local == local and c.ns == ns)

    def require(self, local: str, ns: str) -> XmlElement:
        found = self.find(local, ns)
        if found is None:
            raise MissingRequiredElement(local)
        return found


def element(
    ns: str,
    local: str,
    attrs: dict[str | AttrKey, str] | None = None,
    children: tuple[XmlElement, ...] | list[XmlElement] = (),
    text: str = "",
) -> XmlElement:
    """Build an XmlElement; plain-string attribute keys mean "no namespace"."""
    normalized: list[tuple[AttrKey, str]] = []
    for key, value in (attrs or {}).items():
        if isinstance(key, str):
            key = ("", key)
        normalized.append((key, value))
    normalized.sort(key=lambda item: item[0])
    if text and children:
        raise ValueError("element cannot carry both text and children")
    return XmlElement(ns, local, tuple(normalized), tuple(children), text)


_ILLEGAL_CHARS = re.compile(
    "[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff￾￿]"
)


def _check_legal(value: str) -> str:
    if _ILLEGAL_CHARS.search(value):
        raise MalformedXml("string contains characters not representable in XML 1.0")
    return value


def _escape_text(value: str) -> str:
    return (
        _check_legal(value)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace("\r", "&#xD;")
    )


def _escape_attr(value: str) -> str:
    return (
        _check_legal(value)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace('"', "&quot;")
        .replace("\t", "&#x9;")
        .replace("\n", "&#xA;")
        .replace("\r", "&#xD;")
    )


def canonicalize(elem: XmlElement) -> bytes:
    """Serialize to this toolkit's canonical bytes (deterministic, UTF-8)."""
    out: list[str] = []
    _write(elem, {NS_XML: "xml"}, [0], out)
    return "".join(out).encode("utf-8")


def _write(elem: XmlElement, scope: dict[str, str], counter: list[int], out: list[str]) -> None:
    scope = dict(scope)
    declarations: list[tuple[str, str]] = []

    def ensure(ns: str) -> str:
        if ns in scope:
            return scope[ns]
        prefix = PREFERRED_PREFIXES.get(ns)
        if prefix is None or prefix in scope.values():
            while True:
                prefix = f"ns{counter[0]}"
                counter[0] += 1
                if prefix not in scope.values():
                    break
        scope[ns] = prefix
        declarations.append((prefix, ns))
        return prefix

    if not elem.ns:
        raise MalformedXml(f"element {elem.local!r} has no namespace")
    tag = f"{ensure(elem.ns)}:{elem.local}"
    rendered_attrs: list[tuple[AttrKey, str, str]] = []
    for (ans, aname), value in elem.attrs:
        shown = aname if not ans else f"{ensure(ans)}:{aname}"
        rendered_attrs.append(((ans, aname), shown, value))

    out.append(f"<{tag}")
    for prefix, uri in sorted(declarations):
        out.append(f' xmlns:{prefix}="{_escape_attr(uri)}"')
    for _, shown, value in rendered_attrs:
        out.append(f' {shown}="{_escape_attr(value)}"')
    if not elem.children and not elem.text:
        out.append("/>")
        return
    out.append(">")
    if elem.text:
        out.append(_escape_text(elem.text))
    for child in elem.children:
        _write(child, scope, counter, out)
    out.append(f"</{tag}>")


def pretty(elem: XmlElement, indent: int = 2) -> str:
    """Human-oriented rendering for CLI inspection; not canonical."""
    lines: list[str] = []
    _pretty(elem, {NS_XML: "xml"}, [0], 0, indent, lines)
    return "\n".join(lines)


def _pretty(
    elem: XmlElement,
    scope: dict[str, str],
    counter: list[int],
    depth: int,
    indent: int,
    lines: list[str],
) -> None:
    scope = dict(scope)
    declarations: list[tuple[str, str]] = []

    def ensure(ns: str) -> str:
        if ns in scope:
            return scope[ns]
        prefix = PREFERRED_PREFIXES.get(ns)
        if prefix is None or prefix in scope.values():
            prefix = f"ns{counter[0]}"
            counter[0] += 1
        scope[ns] = prefix
        declarations.append((prefix, ns))
        return prefix

    tag = f"{ensure(elem.ns)}:{elem.local}"
    parts = [f"<{tag}"]
    for prefix, uri in sorted(declarations):
        parts.append(f' xmlns:{prefix}="{_escape_attr(uri)}"')
    for (ans, aname), value in elem.attrs:
        shown = aname if not ans else f"{ensure(ans)}:{aname}"
        parts.append(f' {shown}="{_escape_attr(value)}"')
    pad = " " * (depth * indent)
    if not elem.children and not elem.text:
        lines.append(pad + "".join(parts) + "/>")
        return
    if elem.text:
        lines.append(pad + "".join(parts) + ">" + _escape_text(elem.text) + f"</{tag}>")
        return
    lines.append(pad + "".join(parts) + ">")
    for child in elem.children:
        _pretty(child, scope, counter, depth + 1, indent, lines)
    lines.append(pad + f"</{tag}>")


_DOCTYPE_MARKERS = (b"<!DOCTYPE", b"<!ENTITY", b"<!doctype", b"<!entity")


def parse_xml(data: bytes | str) -> XmlElement:
    """Parse UTF-8 XML into the element model; rejects DTDs and mixed content."""
    raw = data.encode("utf-8") if isinstance(data, str) else data
    if not isinstance(raw, (bytes, bytearray)):
        raise MalformedXml(f"expected bytes, got {type(raw).__name__}")
    for marker in _DOCTYPE_MARKERS:
        if marker in raw:
            raise MalformedXml("document type declarations are not accepted")
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from None
    except ValueError as exc:
        raise MalformedXml(str(exc)) from None
    return _convert(root)


def _split_tag(tag: str) -> tuple[str, str]:
    if tag.startswith("{"):
        ns, _, local = tag[1:].partition("}")
        return ns, local
    return "", tag


# XML whitespace is the four ASCII characters only; Unicode spacing such as
# NBSP is significant content and must survive round-trips.
_XML_WS = " \t\n\r"


def _convert(node: ET.Element) -> XmlElement:
    ns, local = _split_tag(node.tag)
    attrs: dict[str | AttrKey, str] = {}
    for key, value in node.attrib.items():
        attrs[_split_tag(key)] = value
    children = tuple(_convert(child) for child in node)
    text = (node.text or "").strip(_XML_WS)
    if children:
        if text:
            raise MalformedXml(f"mixed content inside <{local}> is not accepted")
        for child in node:
            if (child.tail or "").strip(_XML_WS):
                raise MalformedXml(f"mixed content inside <{local}> is not accepted")
        return element(ns, local, attrs, children)
    return element(ns, local, attrs, (), text)


# ---------------------------------------------------------------------------
# Shared low-level helpers
# ---------------------------------------------------------------------------


def _parse_instant(value: str | None, where: str) -> Instant:
    if value is None:
        raise MissingRequiredElement(where)
    try:
        return Instant.parse(value)
    except ValueError:
        raise BadTimestamp(f"{where}: {value!r} is not an ISO-8601 UTC timestamp ending in Z") from None


def _require_attr(elem: XmlElement, name: str) -> str:
    value = elem.attr(name)
    if value is None:
        raise MissingRequiredElement(f"{elem.local}@{name}")
    return value


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str, where: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, UnicodeEncodeError):
        raise MalformedXml(f"{where}: invalid base64 content") from None


def _check_version(elem: XmlElement) -> None:
    if elem.attr("Version") != "2.0":
        raise MalformedXml(f"<{elem.local}> must declare Version=\"2.0\"")


def _reject_unknown(elem: XmlElement, allowed: set[tuple[str, str]]) -> None:
    """Strict-parse rule: SAML-namespace children must be known; foreign
    namespaces are preserved opaquely in the element tree but ignored here."""
    for child in elem.children:
        if child.ns in _SAML_NAMESPACES and (child.ns, child.local) not in allowed:
            raise MalformedXml(f"unexpected element <{child.local}> inside <{elem.local}>")


# ---------------------------------------------------------------------------
# Signature and encrypted-assertion fragments
# ---------------------------------------------------------------------------


def signature_element(sig: Signature) -> XmlElement:
    signed_info = element(
        NS_DSIG,
        "SignedInfo",
        children=[
            element(NS_DSIG, "SignatureMethod", {"Algorithm": sig.signature_algorithm}),
            element(
                NS_DSIG,
                "Reference",
                {"URI": "#" + sig.reference_id},
                children=[
                    element(NS_DSIG, "DigestMethod", {"Algorithm": sig.digest_algorithm}),
                    element(NS_DSIG, "DigestValue", text=_b64(sig.digest_value)),
                ],
            ),
        ],
    )
    children = [signed_info, element(NS_DSIG, "SignatureValue", text=_b64(sig.signature_value))]
    if sig.certificate:
        # KeyInfo is optional; redirect-bound messages omit it to fit the URL
        # budget and the verifier falls back to metadata-pinned certificates.
        children.append(
            element(
                NS_DSIG,
                "KeyInfo",
                children=[
                    element(
                        NS_DSIG,
                        "X509Data",
                        children=[element(NS_DSIG, "X509Certificate", text=_b64(sig.certificate))],
                    )
                ],
            )
        )
    return element(NS_DSIG, "Signature", children=children)


def signature_from_element(elem: XmlElement) -> Signature:
    signed_info = elem.require("SignedInfo", NS_DSIG)
    method = signed_info.require("SignatureMethod", NS_DSIG)
    reference = signed_info.require("Reference", NS_DSIG)
    digest_method = reference.require("DigestMethod", NS_DSIG)
    digest_value = reference.require("DigestValue", NS_DSIG)
    uri = _require_attr(reference, "URI")
    if not uri.startswith("#"):
        raise MalformedXml(f"signature reference URI must be a fragment, got {uri!r}")
    sig_value = elem.require("SignatureValue", NS_DSIG)
    key_info = elem.find("KeyInfo", NS_DSIG)
    certificate = b""
    if key_info is not None:
        cert = key_info.require("X509Data", NS_DSIG).require("X509Certificate", NS_DSIG)
        certificate = _unb64(cert.text, "X509Certificate")
    return Signature(
        digest_algorithm=_require_attr(digest_method, "Algorithm"),
        signature_algorithm=_require_attr(method, "Algorithm"),
        reference_id=uri[1:],
        digest_value=_unb64(digest_value.text, "DigestValue"),
        signature_value=_unb64(sig_value.text, "SignatureValue"),
        certificate=certificate,
    )


def strip_signature(elem: XmlElement) -> tuple[XmlElement, XmlElement | None]:
    """Remove the enveloped ds:Signature child, returning (stripped, signature)."""
    sig = elem.find("Signature", NS_DSIG)
    if sig is None:
        return elem, None
    remaining = tuple(c for c in elem.children if c is not sig)
    return replace(elem, children=remaining), sig


def signed_payload_bytes(elem: XmlElement) -> bytes:
    """Canonical bytes an enveloped signature over ``elem`` covers."""
    stripped, _ = strip_signature(elem)
    return canonicalize(stripped)


def encrypted_assertion_element(enc: EncryptedAssertion) -> XmlElement:
    encrypted_key = element(
        NS_XMLENC,
        "EncryptedKey",
        children=[
            element(
                NS_XMLENC,
                "CipherData",
                children=[element(NS_XMLENC, "CipherValue", text=_b64(enc.encrypted_key))],
            )
        ],
    )
    data = element(
        NS_XMLENC,
        "EncryptedData",
        children=[
            element(NS_XMLENC, "EncryptionMethod", {"Algorithm": enc.algorithm}),
            element(NS_DSIG, "KeyInfo", children=[encrypted_key]),
            element(
                NS_XMLENC,
                "CipherData",
                children=[element(NS_XMLENC, "CipherValue", text=_b64(enc.iv + enc.ciphertext))],
            ),
        ],
    )
    return element(NS_ASSERTION, "EncryptedAssertion", children=[data])


def encrypted_assertion_from_element(elem: XmlElement) -> EncryptedAssertion:
    data = elem.require("EncryptedData", NS_XMLENC)
    method = data.require("EncryptionMethod", NS_XMLENC)
    key_info = data.require("KeyInfo", NS_DSIG)
    enc_key = key_info.require("EncryptedKey", NS_XMLENC)
    wrapped = _unb64(
        enc_key.require("CipherData", NS_XMLENC).require("CipherValue", NS_XMLENC).text,
        "EncryptedKey CipherValue",
    )
    cipher = _unb64(
        data.require("CipherData", NS_XMLENC).require("CipherValue", NS_XMLENC).text,
        "CipherValue",
    )
    if len(cipher) < 32:
        raise MalformedXml("cipher value shorter than IV plus one block")
    return EncryptedAssertion(
        algorithm=_require_attr(method, "Algorithm"),
        encrypted_key=wrapped,
        iv=cipher[:16],
        ciphertext=cipher[16:],
    )


# ---------------------------------------------------------------------------
# Assertion
# ---------------------------------------------------------------------------


def assertion_element(assertion: Assertion) -> XmlElement:
    children: list[XmlElement] = [element(NS_ASSERTION, "Issuer", text=assertion.issuer)]
    if assertion.signature is not None:
        children.append(signature_element(assertion.signature))

    subject = assertion.subject
    name_attrs: dict[str | AttrKey, str] = {}
    if subject.name_id_format:
        name_attrs["Format"] = subject.name_id_format
    children.append(
        element(
            NS_ASSERTION,
            "Subject",
            children=[
                element(NS_ASSERTION, "NameID", name_attrs, text=subject.name_id),
                element(
                    NS_ASSERTION,
                    "SubjectConfirmation",
                    {"Method": subject.confirmation.method},
                    children=[
                        element(
                            NS_ASSERTION,
                            "SubjectConfirmationData",
                            {
                                "NotOnOrAfter": subject.confirmation.not_on_or_after.isoformat(),
                                "Recipient": subject.confirmation.recipient,
                            },
                        )
                    ],
                ),
            ],
        )
    )

    cond_children: list[XmlElement] = []
    if assertion.conditions.audiences:
        cond_children.append(
            element(
                NS_ASSERTION,
                "AudienceRestriction",
                children=[
                    element(NS_ASSERTION, "Audience", text=a.value)
                    for a in assertion.conditions.audiences
                ],
            )
        )
    children.append(
        element(
            NS_ASSERTION,
            "Conditions",
            {
                "NotBefore": assertion.conditions.not_before.isoformat(),
                "NotOnOrAfter": assertion.conditions.not_on_or_after.isoformat(),
            },
            children=cond_children,
        )
    )

    stmt = assertion.authn_statement
    locality_attrs: dict[str | AttrKey, str] = {}
    if stmt.locality_address is not None:
        locality_attrs["Address"] = stmt.locality_address
    if stmt.locality_dns is not None:
        locality_attrs["DNSName"] = stmt.locality_dns
    children.append(
        element(
            NS_ASSERTION,
            "AuthnStatement",
            {"AuthnInstant": stmt.authn_instant.isoformat(), "SessionIndex": stmt.session_index},
            children=[element(NS_ASSERTION, "SubjectLocality", locality_attrs)]
            if locality_attrs
            else [],
        )
    )

    if assertion.attributes:
        children.append(
            element(
                NS_ASSERTION,
                "AttributeStatement",
                children=[_attribute_element(attr) for attr in assertion.attributes],
            )
        )

    return element(
        NS_ASSERTION,
        "Assertion",
        {
            "ID": assertion.id,
            "IssueInstant": assertion.issue_instant.isoformat(),
            "Version": "2.0",
        },
        children=children,
    )


def _attribute_element(attr: Attribute) -> XmlElement:
    attrs: dict[str | AttrKey, str] = {"Name": attr.name}
    if attr.friendly_name is not None:
        attrs["FriendlyName"] = attr.friendly_name
    if attr.name_format is not None:
        attrs["NameFormat"] = attr.name_format
    return element(
        NS_ASSERTION,
        "Attribute",
        attrs,
        children=[element(NS_ASSERTION, "AttributeValue", text=v) for v in attr.values],
    )


def emit_assertion(assertion: Assertion) -> bytes:
    return canonicalize(assertion_element(assertion))


_ASSERTION_CHILDREN = {
    (NS_ASSERTION, "Issuer"),
    (NS_ASSERTION, "Subject"),
    (NS_ASSERTION, "Conditions"),
    (NS_ASSERTION, "AuthnStatement"),
    (NS_ASSERTION, "AttributeStatement"),
    (NS_ASSERTION, "AuthzDecisionStatement"),  # parsed-and-ignored
}


def assertion_from_element(elem: XmlElement) -> Assertion:
    if (elem.ns, elem.local) != (NS_ASSERTION, "Assertion"):
        raise MalformedXml(f"expected <Assertion>, got <{elem.local}>")
    _check_version(elem)
    _reject_unknown(elem, _ASSERTION_CHILDREN)

    issuer = elem.require("Issuer", NS_ASSERTION)
    subject_elem = elem.require("Subject", NS_ASSERTION)
    name_id = subject_elem.require("NameID", NS_ASSERTION)
    confirmation_elem = subject_elem.require("SubjectConfirmation", NS_ASSERTION)
    data = confirmation_elem.require("SubjectConfirmationData", NS_ASSERTION)
    confirmation = SubjectConfirmation(
        method=_require_attr(confirmation_elem, "Method"),
        not_on_or_after=_parse_instant(data.attr("NotOnOrAfter"), "SubjectConfirmationData@NotOnOrAfter"),
        recipient=_require_attr(data, "Recipient"),
    )
    subject = Subject(
        name_id=name_id.text or "",
        confirmation=confirmation,
        name_id_format=name_id.attr("Format"),
    )

    cond_elem = elem.require("Conditions", NS_ASSERTION)
    audiences: list[EntityId] = []
    for restriction in cond_elem.find_all("AudienceRestriction", NS_ASSERTION):
        for audience in restriction.find_all("Audience", NS_ASSERTION):
            if audience.text:
                audiences.append(EntityId(audience.text))
    conditions = Conditions(
        not_before=_parse_instant(cond_elem.attr("NotBefore"), "Conditions@NotBefore"),
        not_on_or_after=_parse_instant(cond_elem.attr("NotOnOrAfter"), "Conditions@NotOnOrAfter"),
        audiences=tuple(audiences),
    )

    stmt_elem = elem.require("AuthnStatement", NS_ASSERTION)
    locality = stmt_elem.find("SubjectLocality", NS_ASSERTION)
    statement = AuthnStatement(
        authn_instant=_parse_instant(stmt_elem.attr("AuthnInstant"), "AuthnStatement@AuthnInstant"),
        session_index=_require_attr(stmt_elem, "SessionIndex"),
        locality_address=locality.attr("Address") if locality is not None else None,
        locality_dns=locality.attr("DNSName") if locality is not None else None,
    )

    attributes: list[Attribute] = []
    attr_stmt = elem.find("AttributeStatement", NS_ASSERTION)
    if attr_stmt is not None:
        for attr_elem in attr_stmt.find_all("Attribute", NS_ASSERTION):
            values = tuple(
                v.text or "" for v in attr_elem.find_all("AttributeValue", NS_ASSERTION)
            )
            attributes.append(
                Attribute(
                    name=_require_attr(attr_elem, "Name"),
                    values=values,
                    friendly_name=attr_elem.attr("FriendlyName"),
                    name_format=attr_elem.attr("NameFormat"),
                )
            )

    sig_elem = elem.find("Signature", NS_DSIG)
    try:
        return Assertion(
            id=_require_attr(elem, "ID"),
            issue_instant=_parse_instant(elem.attr("IssueInstant"), "Assertion@IssueInstant"),
            issuer=issuer.text or "",
            subject=subject,
            conditions=conditions,
            authn_statement=statement,
            attributes=tuple(attributes),
            signature=signature_from_element(sig_elem) if sig_elem is not None else None,
        )
    except ValueError as exc:
        raise MalformedXml(str(exc)) from None


def parse_assertion(data: bytes | str) -> Assertion:
    return assertion_from_element(parse_xml(data))


# ---------------------------------------------------------------------------
# Response
# ---------------------------------------------------------------------------


def response_element(response: Response) -> XmlElement:
    attrs: dict[str | AttrKey, str] = {
        "ID": response.id,
        "IssueInstant": response.issue_instant.isoformat(),
        "Version": "2.0",
        "Destination": response.destination,
    }
    if response.consent is not None:
        attrs["Consent"] = response.consent
    children: list[XmlElement] = [element(NS_ASSERTION, "Issuer", text=response.issuer)]
    if response.signature is not None:
        children.append(signature_element(response.signature))
    children.append(
        element(
            NS_PROTOCOL,
            "Status",
            children=[element(NS_PROTOCOL, "StatusCode", {"Value": response.status})],
        )
    )
    if isinstance(response.assertion, Assertion):
        children.append(assertion_element(response.assertion))
    elif isinstance(response.assertion, EncryptedAssertion):
        children.append(encrypted_assertion_element(response.assertion))
    return element(NS_PROTOCOL, "Response", attrs, children=children)


def emit_response(response: Response) -> bytes:
    return canonicalize(response_element(response))


_RESPONSE_CHILDREN = {
    (NS_ASSERTION, "Issuer"),
    (NS_PROTOCOL, "Status"),
    (NS_ASSERTION, "Assertion"),
    (NS_ASSERTION, "EncryptedAssertion"),
}


def response_from_element(elem: XmlElement) -> Response:
    if (elem.ns, elem.local) != (NS_PROTOCOL, "Response"):
        raise MalformedXml(f"expected <Response>, got <{elem.local}>")
    _check_version(elem)
    _reject_unknown(elem, _RESPONSE_CHILDREN)

    issuer = elem.require("Issuer", NS_ASSERTION)
    status = (
        elem.require("Status", NS_PROTOCOL).require("StatusCode", NS_PROTOCOL)
    )
    assertion_elem = elem.find("Assertion", NS_ASSERTION)
    encrypted_elem = elem.find("EncryptedAssertion", NS_ASSERTION)
    if assertion_elem is not None and encrypted_elem is not None:
        raise MalformedXml("response carries both a plain and an encrypted assertion")
    assertion: Assertion | EncryptedAssertion | None = None
    if assertion_elem is not None:
        assertion = assertion_from_element(assertion_elem)
    elif encrypted_elem is not None:
        assertion = encrypted_assertion_from_element(encrypted_elem)

    sig_elem = elem.find("Signature", NS_DSIG)
    return Response(
        id=_require_attr(elem, "ID"),
        issue_instant=_parse_instant(elem.attr("IssueInstant"), "Response@IssueInstant"),
        issuer=issuer.text or "",
        destination=_require_attr(elem, "Destination"),
        status=_require_attr(status, "Value"),
        assertion=assertion,
        signature=signature_from_element(sig_elem) if sig_elem is not None else None,
        consent=elem.attr("Consent"),
    )


def parse_response(data: bytes | str) -> Response:
    return response_from_element(parse_xml(data))


# ---------------------------------------------------------------------------
# AuthnRequest / Logout messages / ArtifactResolve
# ---------------------------------------------------------------------------


def authn_request_element(request: AuthnRequest) -> XmlElement:
    children: list[XmlElement] = [element(NS_ASSERTION, "Issuer", text=request.issuer.value)]
    if request.signature is not None:
        children.append(signature_element(request.signature))
    return element(
        NS_PROTOCOL,
        "AuthnRequest",
        {
            "ID": request.id,
            "IssueInstant": request.issue_instant.isoformat(),
            "Version": "2.0",
            "AssertionConsumerServiceURL": request.acs_url,
        },
        children=children,
    )


def emit_authn_request(request: AuthnRequest) -> bytes:
    return canonicalize(authn_request_element(request))


def authn_request_from_element(elem: XmlElement) -> AuthnRequest:
    if (elem.ns, elem.local) != (NS_PROTOCOL, "AuthnRequest"):
        raise MalformedXml(f"expected <AuthnRequest>, got <{elem.local}>")
    _check_version(elem)
    _reject_unknown(elem, {(NS_ASSERTION, "Issuer")})
    issuer = elem.require("Issuer", NS_ASSERTION)
    sig_elem = elem.find("Signature", NS_DSIG)
    try:
        issuer_id = EntityId(issuer.text or "")
    except ValueError:
        raise MalformedXml("issuer must be a non-empty entity id") from None
    return AuthnRequest(
        id=_require_attr(elem, "ID"),
        issue_instant=_parse_instant(elem.attr("IssueInstant"), "AuthnRequest@IssueInstant"),
        issuer=issuer_id,
        acs_url=_require_attr(elem, "AssertionConsumerServiceURL"),
        signature=signature_from_element(sig_elem) if sig_elem is not None else None,
    )


def parse_authn_request(data: bytes | str) -> AuthnRequest:
    return authn_request_from_element(parse_xml(data))


def logout_request_element(request: LogoutRequest) -> XmlElement:
    children: list[XmlElement] = [element(NS_ASSERTION, "Issuer", text=request.issuer.value)]
    if request.signature is not None:
        children.append(signature_element(request.signature))
    children.append(element(NS_ASSERTION, "NameID", text=request.name_id))
    children.append(element(NS_PROTOCOL, "SessionIndex", text=request.session_index))
    return element(
        NS_PROTOCOL,
        "LogoutRequest",
        {"ID": request.id, "IssueInstant": request.issue_instant.isoformat(), "Version": "2.0"},
        children=children,
    )


def emit_logout_request(request: LogoutRequest) -> bytes:
    return canonicalize(logout_request_element(request))


def logout_request_from_element(elem: XmlElement) -> LogoutRequest:
    if (elem.ns, elem.local) != (NS_PROTOCOL, "LogoutRequest"):
        raise MalformedXml(f"expected <LogoutRequest>, got <{elem.local}>")
    _check_version(elem)
    _reject_unknown(
        elem,
        {(NS_ASSERTION, "Issuer"), (NS_ASSERTION, "NameID"), (NS_PROTOCOL, "SessionIndex")},
    )
    issuer = elem.require("Issuer", NS_ASSERTION)
    name_id = elem.require("NameID", NS_ASSERTION)
    session_index = elem.require("SessionIndex", NS_PROTOCOL)
    sig_elem = elem.find("Signature", NS_DSIG)
    try:
        issuer_id = EntityId(issuer.text or "")
    except ValueError:
        raise MalformedXml("issuer must be a non-empty entity id") from None
    return LogoutRequest(
        id=_require_attr(elem, "ID"),
        issue_instant=_parse_instant(elem.attr("IssueInstant"), "LogoutRequest@IssueInstant"),
        issuer=issuer_id,
        name_id=name_id.text or "",
        session_index=session_index.text or "",
        signature=signature_from_element(sig_elem) if sig_elem is not None else None,
    )


def parse_logout_request(data: bytes | str) -> LogoutRequest:
    return logout_request_from_element(parse_xml(data))


def logout_response_element(response: LogoutResponse) -> XmlElement:
    attrs: dict[str | AttrKey, str] = {
        "ID": response.id,
        "IssueInstant": response.issue_instant.isoformat(),
        "Version": "2.0",
    }
    if response.in_response_to is not None:
        attrs["InResponseTo"] = response.in_response_to
    children: list[XmlElement] = [element(NS_ASSERTION, "Issuer", text=response.issuer.value)]
    if response.signature is not None:
        children.append(signature_element(response.signature))
    children.append(
        element(
            NS_PROTOCOL,
            "Status",
            children=[element(NS_PROTOCOL, "StatusCode", {"Value": response.status})],
        )
    )
    return element(NS_PROTOCOL, "LogoutResponse", attrs, children=children)


def emit_logout_response(response: LogoutResponse) -> bytes:
    return canonicalize(logout_response_element(response))


def logout_response_from_element(elem: XmlElement) -> LogoutResponse:
    if (elem.ns, elem.local) != (NS_PROTOCOL, "LogoutResponse"):
        raise MalformedXml(f"expected <LogoutResponse>, got <{elem.local}>")
    _check_version(elem)
    _reject_unknown(elem, {(NS_ASSERTION, "Issuer"), (NS_PROTOCOL, "Status")})
    issuer = elem.require("Issuer", NS_ASSERTION)
    status = elem.require("Status", NS_PROTOCOL).require("StatusCode", NS_PROTOCOL)
    sig_elem = elem.find("Signature", NS_DSIG)
    try:
        issuer_id = EntityId(issuer.text or "")
    except ValueError:
        raise MalformedXml("issuer must be a non-empty entity id") from None
    return LogoutResponse(
        id=_require_attr(elem, "ID"),
        issue_instant=_parse_instant(elem.attr("IssueInstant"), "LogoutResponse@IssueInstant"),
        issuer=issuer_id,
        status=_require_attr(status, "Value"),
        in_response_to=elem.attr("InResponseTo"),
        signature=signature_from_element(sig_elem) if sig_elem is not None else None,
    )


def parse_logout_response(data: bytes | str) -> LogoutResponse:
    return logout_response_from_element(parse_xml(data))


def artifact_resolve_element(request_id: str, issue_instant: Instant, issuer: EntityId,
                             artifacts: tuple[str, ...]) -> XmlElement:
    children: list[XmlElement] = [element(NS_ASSERTION, "Issuer", text=issuer.value)]
    children.extend(element(NS_PROTOCOL, "Artifact", text=a) for a in artifacts)
    return element(
        NS_PROTOCOL,
        "ArtifactResolve",
        {"ID": request_id, "IssueInstant": issue_instant.isoformat(), "Version": "2.0"},
        children=children,
    )


def emit_artifact_resolve(request_id: str, issue_instant: Instant, issuer: EntityId,
                          artifacts: tuple[str, ...]) -> bytes:
    return canonicalize(artifact_resolve_element(request_id, issue_instant, issuer, artifacts))


def parse_artifact_resolve(data: bytes | str) -> tuple[EntityId, tuple[str, ...]]:
    elem = parse_xml(data)
    if (elem.ns, elem.local) != (NS_PROTOCOL, "ArtifactResolve"):
        raise MalformedXml(f"expected <ArtifactResolve>, got <{elem.local}>")
    _check_version(elem)
    _reject_unknown(elem, {(NS_ASSERTION, "Issuer"), (NS_PROTOCOL, "Artifact")})
    issuer = elem.require("Issuer", NS_ASSERTION)
    artifacts = tuple(a.text for a in elem.find_all("Artifact", NS_PROTOCOL) if a.text)
    if not artifacts:
        raise MissingRequiredElement("Artifact")
    try:
        issuer_id = EntityId(issuer.text or "")
    except ValueError:
        raise MalformedXml("issuer must be a non-empty entity id") from None
    return issuer_id, artifacts


# ---------------------------------------------------------------------------
# Metadata
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Endpoint:
    binding: str
    location: str


@dataclass(frozen=True)
class IndexedEndpoint:
    index: int
    binding: str
    location: str
    is_default: bool = False


@dataclass(frozen=True)
class EncryptionKey:
    """Encryption key descriptor; the certificate stays opaque base64 text
    until crypto actually needs it (sample metadata may carry placeholders)."""

    certificate: str
    algorithm: str | None = None
    key_size: int | None = None

    def __post_init__(self) -> None:
        # KeySize is carried inside EncryptionMethod and cannot stand alone.
        if self.key_size is not None and self.algorithm is None:
            raise ValueError("key_size requires an encryption algorithm")


@dataclass(frozen=True)
class IdpSsoDescriptor:
    want_authn_requests_signed: bool
    protocol_support: str
    sso_endpoints: tuple[Endpoint, ...]
    signing_certs: tuple[str, ...] = ()
    encryption_keys: tuple[EncryptionKey, ...] = ()
    single_logout_endpoints: tuple[Endpoint, ...] = ()
    artifact_resolution_endpoints: tuple[IndexedEndpoint, ...] = ()

    def __post_init__(self) -> None:
        if not self.sso_endpoints:
            raise ValueError("IdP descriptor needs at least one single-sign-on endpoint")


@dataclass(frozen=True)
class SpSsoDescriptor:
    authn_requests_signed: bool
    want_assertions_signed: bool
    protocol_support: str
    acs_endpoints: tuple[IndexedEndpoint, ...]
    name_id_formats: tuple[str, ...] = ()
    signing_certs: tuple[str, ...] = ()
    encryption_keys: tuple[EncryptionKey, ...] = ()
    single_logout_endpoints: tuple[Endpoint, ...] = ()

    def __post_init__(self) -> None:
        if not self.acs_endpoints:
            raise ValueError("SP descriptor needs at least one assertion consumer endpoint")
        indices = [e.index for e in self.acs_endpoints]
        if len(set(indices)) != len(indices):
            raise ValueError("assertion consumer endpoint indices must be unique")

    def default_acs(self) -> IndexedEndpoint:
        marked = [e for e in self.acs_endpoints if e.is_default]
        if marked:
            return marked[0]
        return min(self.acs_endpoints, key=lambda e: e.index)


@dataclass(frozen=True)
class Organization:
    name: str
    display_name: str
    url: str
    name_lang: str = "en-us"
    display_name_lang: str = "en-us"
    url_lang: str = "en-us"


@dataclass(frozen=True)
class EntityDescriptor:
    entity_id: EntityId
    role: IdpSsoDescriptor | SpSsoDescriptor
    document_id: str | None = None
    organization: Organization | None = None

    @property
    def is_idp(self) -> bool:
        return isinstance(self.role, IdpSsoDescriptor)


def _key_descriptor_elements(
    signing_certs: tuple[str, ...], encryption_keys: tuple[EncryptionKey, ...]
) -> list[XmlElement]:
    out: list[XmlElement] = []
    for cert in signing_certs:
        out.append(
            element(
                NS_METADATA,
                "KeyDescriptor",
                {"use": "signing"},
                children=[_key_info(cert)],
            )
        )
    for key in encryption_keys:
        children = [_key_info(key.certificate)]
        if key.algorithm is not None:
            method_children = []
            if key.key_size is not None:
                method_children.append(element(NS_XMLENC, "KeySize", text=str(key.key_size)))
            children.append(
                element(
                    NS_METADATA,
                    "EncryptionMethod",
                    {"Algorithm": key.algorithm},
                    children=method_children,
                )
            )
        out.append(
            element(NS_METADATA, "KeyDescriptor", {"use": "encryption"}, children=children)
        )
    return out


def _key_info(cert_text: str) -> XmlElement:
    return element(
        NS_DSIG,
        "KeyInfo",
        children=[
            element(
                NS_DSIG,
                "X509Data",
                children=[element(NS_DSIG, "X509Certificate", text=cert_text)],
            )
        ],
    )


def metadata_element(entity: EntityDescriptor) -> XmlElement:
    role = entity.role
    if isinstance(role, IdpSsoDescriptor):
        role_children = _key_descriptor_elements(role.signing_certs, role.encryption_keys)
        for ep in role.artifact_resolution_endpoints:
            attrs: dict[str | AttrKey, str] = {
                "index": str(ep.index),
                "Binding": ep.binding,
                "Location": ep.location,
            }
            if ep.is_default:
                attrs["isDefault"] = "true"
            role_children.append(element(NS_METADATA, "ArtifactResolutionService", attrs))
        for ep in role.single_logout_endpoints:
            role_children.append(
                element(
                    NS_METADATA,
                    "SingleLogoutService",
                    {"Binding": ep.binding, "Location": ep.location},
                )
            )
        for ep in role.sso_endpoints:
            role_children.append(
                element(
                    NS_METADATA,
                    "SingleSignOnService",
                    {"Binding": ep.binding, "Location": ep.location},
                )
            )
        role_elem = element(
            NS_METADATA,
            "IDPSSODescriptor",
            {
                "WantAuthnRequestsSigned": "true" if role.want_authn_requests_signed else "false",
                "protocolSupportEnumeration": role.protocol_support,
            },
            children=role_children,
        )
    else:
        role_children = _key_descriptor_elements(role.signing_certs, role.encryption_keys)
        for ep in role.single_logout_endpoints:
            role_children.append(
                element(
                    NS_METADATA,
                    "SingleLogoutService",
                    {"Binding": ep.binding, "Location": ep.location},
                )
            )
        for fmt in role.name_id_formats:
            role_children.append(element(NS_METADATA, "NameIDFormat", text=fmt))
        for ep in role.acs_endpoints:
            attrs = {"index": str(ep.index), "Binding": ep.binding, "Location": ep.location}
            if ep.is_default:
                attrs["isDefault"] = "true"
            role_children.append(element(NS_METADATA, "AssertionConsumerService", attrs))
        role_elem = element(
            NS_METADATA,
            "SPSSODescriptor",
            {
                "AuthnRequestsSigned": "true" if role.authn_requests_signed else "false",
                "WantAssertionsSigned": "true" if role.want_assertions_signed else "false",
                "protocolSupportEnumeration": role.protocol_support,
            },
            children=role_children,
        )

    attrs = {"entityID": entity.entity_id.value}
    if entity.document_id is not None:
        attrs["ID"] = entity.document_id
    children = [role_elem]
    if entity.organization is not None:
        org = entity.organization
        children.append(
            element(
                NS_METADATA,
                "Organization",
                children=[
                    element(
                        NS_METADATA,
                        "OrganizationName",
                        {(NS_XML, "lang"): org.name_lang},
                        text=org.name,
                    ),
                    element(
                        NS_METADATA,
                        "OrganizationDisplayName",
                        {(NS_XML, "lang"): org.display_name_lang},
                        text=org.display_name,
                    ),
                    element(
                        NS_METADATA,
                        "OrganizationURL",
                        {(NS_XML, "lang"): org.url_lang},
                        text=org.url,
                    ),
                ],
            )
        )
    return element(NS_METADATA, "EntityDescriptor", attrs, children=children)


def emit_metadata(entity: EntityDescriptor) -> bytes:
    return canonicalize(metadata_element(entity))


def _parse_bool(value: str | None, default: bool = False) -> bool:
    if value is None:
        return default
    if value in ("true", "1"):
        return True
    if value in ("false", "0"):
        return False
    raise MalformedXml(f"expected boolean attribute value, got {value!r}")


def _parse_key_descriptors(
    role_elem: XmlElement,
) -> tuple[tuple[str, ...], tuple[EncryptionKey, ...]]:
    signing: list[str] = []
    encryption: list[EncryptionKey] = []
    for kd in role_elem.find_all("KeyDescriptor", NS_METADATA):
        cert_elem = (
            kd.require("KeyInfo", NS_DSIG)
            .require("X509Data", NS_DSIG)
            .require("X509Certificate", NS_DSIG)
        )
        cert_text = cert_elem.text
        method = kd.find("EncryptionMethod", NS_METADATA)
        algorithm = None
        key_size = None
        if method is not None:
            algorithm = _require_attr(method, "Algorithm")
            size_elem = method.find("KeySize", NS_XMLENC)
            if size_elem is not None:
                try:
                    key_size = int(size_elem.text)
                except ValueError:
                    raise MalformedXml(f"KeySize must be an integer, got {size_elem.text!r}") from None
        use = kd.attr("use")
        if use not in (None, "signing", "encryption"):
            raise MalformedXml(f"unknown key descriptor use {use!r}")
        # Absent "use" means the key serves both purposes.
        if use in (None, "signing"):
            signing.append(cert_text)
        if use in (None, "encryption"):
            encryption.append(EncryptionKey(cert_text, algorithm, key_size))
    return tuple(signing), tuple(encryption)


def _parse_endpoint(elem: XmlElement) -> Endpoint:
    binding = _require_attr(elem, "Binding")
    if binding not in KNOWN_BINDINGS:
        raise MalformedXml(f"unrecognized binding {binding!r}")
    return Endpoint(binding, _require_attr(elem, "Location"))


def _parse_indexed_endpoint(elem: XmlElement) -> IndexedEndpoint:
    plain = _parse_endpoint(elem)
    try:
        index = int(_require_attr(elem, "index"))
    except ValueError:
        raise MalformedXml(f"endpoint index must be an integer, got {elem.attr('index')!r}") from None
    return IndexedEndpoint(
        index=index,
        binding=plain.binding,
        location=plain.location,
        is_default=_parse_bool(elem.attr("isDefault"), default=False),
    )


_IDP_ROLE_CHILDREN = {
    (NS_METADATA, "KeyDescriptor"),
    (NS_METADATA, "SingleSignOnService"),
    (NS_METADATA, "SingleLogoutService"),
    (NS_METADATA, "ArtifactResolutionService"),
    (NS_METADATA, "NameIDFormat"),
}

_SP_ROLE_CHILDREN = {
    (NS_METADATA, "KeyDescriptor"),
    (NS_METADATA, "AssertionConsumerService"),
    (NS_METADATA, "SingleLogoutService"),
    (NS_METADATA, "NameIDFormat"),
}


def metadata_from_element(elem: XmlElement) -> EntityDescriptor:
    if (elem.ns, elem.local) != (NS_METADATA, "EntityDescriptor"):
        raise MalformedXml(f"expected <EntityDescriptor>, got <{elem.local}>")
    _reject_unknown(
        elem,
        {
            (NS_METADATA, "IDPSSODescriptor"),
            (NS_METADATA, "SPSSODescriptor"),
            (NS_METADATA, "Organization"),
        },
    )
    idp_elem = elem.find("IDPSSODescriptor", NS_METADATA)
    sp_elem = elem.find("SPSSODescriptor", NS_METADATA)
    if (idp_elem is None) == (sp_elem is None):
        raise UnknownRole("exactly one of IDPSSODescriptor or SPSSODescriptor is required")

    role: IdpSsoDescriptor | SpSsoDescriptor
    if idp_elem is not None:
        _reject_unknown(idp_elem, _IDP_ROLE_CHILDREN)
        signing, encryption = _parse_key_descriptors(idp_elem)
        sso = tuple(
            _parse_endpoint(e) for e in idp_elem.find_all("SingleSignOnService", NS_METADATA)
        )
        slo = tuple(
            _parse_endpoint(e) for e in idp_elem.find_all("SingleLogoutService", NS_METADATA)
        )
        ars = tuple(
            _parse_indexed_endpoint(e)
            for e in idp_elem.find_all("ArtifactResolutionService", NS_METADATA)
        )
        if not sso:
            raise MissingRequiredElement("SingleSignOnService")
        role = IdpSsoDescriptor(
            want_authn_requests_signed=_parse_bool(idp_elem.attr("WantAuthnRequestsSigned")),
            protocol_support=_require_attr(idp_elem, "protocolSupportEnumeration"),
            sso_endpoints=sso,
            signing_certs=signing,
            encryption_keys=encryption,
            single_logout_endpoints=slo,
            artifact_resolution_endpoints=ars,
        )
    else:
        _reject_unknown(sp_elem, _SP_ROLE_CHILDREN)
        signing, encryption = _parse_key_descriptors(sp_elem)
        acs = tuple(
            _parse_indexed_endpoint(e)
            for e in sp_elem.find_all("AssertionConsumerService", NS_METADATA)
        )
        if not acs:
            raise MissingRequiredElement("AssertionConsumerService")
        if sum(1 for e in acs if e.is_default) > 1:
            raise DuplicateDefaultAcs("more than one assertion consumer endpoint marked default")
        slo = tuple(
            _parse_endpoint(e) for e in sp_elem.find_all("SingleLogoutService", NS_METADATA)
        )
        formats = tuple(
            f.text for f in sp_elem.find_all("NameIDFormat", NS_METADATA) if f.text
        )
        try:
            role = SpSsoDescriptor(
                authn_requests_signed=_parse_bool(sp_elem.attr("AuthnRequestsSigned")),
                want_assertions_signed=_parse_bool(sp_elem.attr("WantAssertionsSigned")),
                protocol_support=_require_attr(sp_elem, "protocolSupportEnumeration"),
                acs_endpoints=acs,
                name_id_formats=formats,
                signing_certs=signing,
                encryption_keys=encryption,
                single_logout_endpoints=slo,
            )
        except ValueError as exc:
            raise MalformedXml(str(exc)) from None

    organization = None
    org_elem = elem.find("Organization", NS_METADATA)
    if org_elem is not None:
        name = org_elem.require("OrganizationName", NS_METADATA)
        display = org_elem.require("OrganizationDisplayName", NS_METADATA)
        url = org_elem.require("OrganizationURL", NS_METADATA)
        for lang_holder in (name, display, url):
            lang = lang_holder.attr("lang", NS_XML)
            if not lang:
                raise MalformedXml(f"<{lang_holder.local}> must carry a non-empty xml:lang")
        organization = Organization(
            name=name.text,
            display_name=display.text,
            url=url.text,
            name_lang=name.attr("lang", NS_XML),
            display_name_lang=display.attr("lang", NS_XML),
            url_lang=url.attr("lang", NS_XML),
        )

    entity_id_text = _require_attr(elem, "entityID")
    try:
        entity_id = EntityId(entity_id_text)
    except ValueError as exc:
        raise MalformedXml(str(exc)) from None
    return EntityDescriptor(
        entity_id=entity_id,
        role=role,
        document_id=elem.attr("ID"),
        organization=organization,
    )


def parse_metadata(data: bytes | str) -> EntityDescriptor:
    return metadata_from_element(parse_xml(data))
