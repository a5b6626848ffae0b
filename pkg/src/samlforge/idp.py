"""Asserting-party engine: attribute sourcing, assertion issuance, request
handling, artifact resolution (single and paired), single logout.

Attribute records file format (documented wire contract): one user per
line, whitespace-separated tokens::

    <user-key> <name-id> <name>=<value> [<name>=<value> ...]

Repeated names accumulate into one multi-valued attribute; ``#`` starts a
comment line. Values cannot contain whitespace.
"""

from __future__ import annotations

import logging
import secrets
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from . import bindings, cryptoseal, xmlcodec
from .core import (
    ATTRNAME_FORMAT_BASIC,
    BEARER_METHOD,
    STATUS_SUCCESS,
    Assertion,
    Attribute,
    AuthnStatement,
    Conditions,
    EntityId,
    Instant,
    LogoutRequest,
    Response,
    SamlError,
    Subject,
    SubjectConfirmation,
    TokenSource,
    new_message_id,
)
from .federation import (
    BEARER_GRACE_SECONDS,
    FederationRegistry,
    Partner,
    UnknownIssuer,
    default_acs,
)
from .sp import ReplayCache
from .xmlcodec import IdpSsoDescriptor, SpSsoDescriptor

logger = logging.getLogger(__name__)


class UnknownPartner(SamlError):
    pass


class UnknownUser(SamlError):
    pass


class PolicyViolation(SamlError):
    pass


class SignatureRequired(SamlError):
    pass


class InvalidRequestSignature(SamlError):
    pass


class ReplayedRequestId(SamlError):
    pass


class UnknownArtifact(SamlError):
    pass


class AlreadyConsumed(SamlError):
    pass


class ArtifactExpired(SamlError):
    pass


class WrongSourceId(SamlError):
    pass


class IncompletePair(SamlError):
    pass


class MismatchedPair(SamlError):
    pass


class UnknownSession(SamlError):
    pass


# ---------------------------------------------------------------------------
# Attribute source
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UserRecord:
    name_id: str
    attributes: tuple[Attribute, ...]


@dataclass(frozen=True)
class AttributeSource:
    """Deterministic user-key lookup; a missing user is an explicit error,
    never an empty attribute set."""

    records: Mapping[str, UserRecord]

    def lookup(self, user_key: str) -> UserRecord:
        try:
            return self.records[user_key]
        except KeyError:
            raise UnknownUser(user_key) from None


def parse_attribute_records(text: str) -> AttributeSource:
    records: dict[str, UserRecord] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) < 2:
            raise ValueError(f"line {lineno}: expected '<user-key> <name-id> [name=value ...]'")
        user_key, name_id = tokens[0], tokens[1]
        values: dict[str, list[str]] = {}
        order: list[str] = []
        for token in tokens[2:]:
            name, sep, value = token.partition("=")
            if not sep or not name:
                raise ValueError(f"line {lineno}: bad attribute token {token!r}")
            if name not in values:
                values[name] = []
                order.append(name)
            values[name].append(value)
        attributes = tuple(
            Attribute(
                name=name,
                values=tuple(values[name]),
                friendly_name=name,
                name_format=ATTRNAME_FORMAT_BASIC,
            )
            for name in order
        )
        records[user_key] = UserRecord(name_id, attributes)
    return AttributeSource(records)


def load_attribute_source(path: str | Path) -> AttributeSource:
    return parse_attribute_records(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Sessions and artifact store
# ---------------------------------------------------------------------------


@dataclass
class IdpSession:
    session_index: str
    user_key: str
    authenticated_at: Instant
    client_ip: str
    participating_sps: set[str] = field(default_factory=set)


@dataclass
class ArtifactEntry:
    response_bytes: bytes
    issued_at: Instant
    partner: str
    consumed: bool = False
    pair_handle: bytes | None = None


class ArtifactStore:
    """Single-use artifact entries; consumption is an atomic test-and-set."""

    def __init__(self, retention: int = 300) -> None:
        self.retention = retention
        self._entries: dict[bytes, ArtifactEntry] = {}
        self._lock = threading.Lock()

    def put(self, handle: bytes, entry: ArtifactEntry) -> None:
        with self._lock:
            self._entries[handle] = entry

    def link(self, first: bytes, second: bytes) -> None:
        with self._lock:
            self._entries[first].pair_handle = second
            self._entries[second].pair_handle = first

    def consume(self, handles: tuple[bytes, ...], now: Instant) -> bytes:
        """Atomically consume one entry (or one linked pair)."""
        with self._lock:
            entries = []
            for handle in handles:
                entry = self._entries.get(handle)
                if entry is None:
                    raise UnknownArtifact(handle.hex())
                entries.append(entry)
            if len(entries) == 1:
                entry = entries[0]
                if entry.pair_handle is not None:
                    raise IncompletePair(
                        "this artifact is half of a pair; both values are required"
                    )
            else:
                first, second = entries
                if (
                    first.pair_handle != handles[1]
                    or second.pair_handle != handles[0]
                    or handles[0] == handles[1]
                ):
                    raise MismatchedPair("artifacts do not belong to the same pair")
            for handle, entry in zip(handles, entries):
                if now.epoch - entry.issued_at.epoch >= self.retention:
                    raise ArtifactExpired(handle.hex())
            if any(entry.consumed for entry in entries):
                raise AlreadyConsumed(handles[0].hex())
            for entry in entries:
                entry.consumed = True
            return entries[0].response_bytes

    def sweep(self, now: Instant) -> None:
        with self._lock:
            stale = [
                h
                for h, e in self._entries.items()
                if now.epoch - e.issued_at.epoch >= self.retention
            ]
            for handle in stale:
                del self._entries[handle]


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class IdpEngine:
    """One identity provider: registry, keys, attribute source, sessions,
    artifact store, request replay cache."""

    def __init__(
        self,
        registry: FederationRegistry,
        store: cryptoseal.KeyStore,
        source: AttributeSource,
        token_source: TokenSource = secrets.token_bytes,
        artifact_retention: int = 300,
    ) -> None:
        if not isinstance(registry.local.role, IdpSsoDescriptor):
            raise ValueError("IdpEngine needs a registry whose local entity is an IdP")
        self._lock = threading.Lock()
        self.registry = registry
        self.store = store
        self.source = source
        self.token_source = token_source
        self.sessions: dict[str, IdpSession] = {}
        self.artifacts = ArtifactStore(retention=artifact_retention)
        self.request_replay = ReplayCache()
        # logout request id -> (session index, partner entity id)
        self._pending_logouts: dict[str, tuple[str, str]] = {}
        self._terminated: set[str] = set()

    @property
    def entity_id(self) -> EntityId:
        return self.registry.local.entity_id

    def register_partner(self, metadata_bytes: bytes, **kwargs) -> None:
        from .federation import register_partner

        with self._lock:
            self.registry = register_partner(self.registry, metadata_bytes, **kwargs)

    # -- sessions -----------------------------------------------------------

    def create_session(
        self,
        user_key: str,
        client_ip: str,
        now: Instant,
        session_index: str | None = None,
    ) -> IdpSession:
        """Harness-facing substitute for real user authentication."""
        self.source.lookup(user_key)  # fail fast on unknown users
        session = IdpSession(
            session_index=session_index or self.token_source(12).hex(),
            user_key=user_key,
            authenticated_at=now,
            client_ip=client_ip,
        )
        with self._lock:
            self.sessions[session.session_index] = session
        return session

    def session_for_user(self, user_key: str) -> IdpSession | None:
        with self._lock:
            for session in self.sessions.values():
                if session.user_key == user_key:
                    return session
        return None

    # -- issuance -----------------------------------------------------------

    def issue_assertion(
        self,
        session: IdpSession,
        partner_id: EntityId | str,
        now: Instant,
    ) -> Response:
        """Build, sign, and seal a Response per the partner's policy."""
        key = partner_id.value if isinstance(partner_id, EntityId) else partner_id
        partner = self.registry.partners.get(key)
        if partner is None:
            raise UnknownPartner(key)
        if not isinstance(partner.descriptor.role, SpSsoDescriptor):
            raise UnknownPartner(f"{key} is not a service provider")
        record = self.source.lookup(session.user_key)
        policy = partner.policy
        acs = default_acs(partner.descriptor).location

        validity = policy.validity
        conditions = Conditions(
            not_before=now,
            not_on_or_after=now.plus(validity),
            audiences=(partner.entity_id,),
        )
        confirmation = SubjectConfirmation(
            method=BEARER_METHOD,
            not_on_or_after=now.plus(validity + BEARER_GRACE_SECONDS),
            recipient=acs,
        )
        formats = partner.descriptor.role.name_id_formats
        assertion = Assertion(
            id=new_message_id(self.token_source),
            issue_instant=now,
            issuer=self.entity_id.value,
            subject=Subject(
                name_id=record.name_id,
                confirmation=confirmation,
                name_id_format=formats[0] if formats else None,
            ),
            conditions=conditions,
            authn_statement=AuthnStatement(
                authn_instant=session.authenticated_at,
                session_index=session.session_index,
                locality_address=session.client_ip,
            ),
            attributes=record.attributes,
        )

        signed = self._sign_assertion(assertion, policy)
        sealed = self._seal_assertion(signed, partner, policy)
        response = Response(
            id=new_message_id(self.token_source),
            issue_instant=now,
            issuer=self.entity_id.value,
            destination=acs,
            status=STATUS_SUCCESS,
            assertion=sealed,
        )
        if policy.sign_assertion:
            response = self._sign_response(response)
        with self._lock:
            session.participating_sps.add(partner.entity_id.value)
        return response

    def _signing_alias(self) -> str:
        if self.registry.signing_alias is None:
            raise PolicyViolation("partner policy requires signing but no signing key is configured")
        return self.registry.signing_alias

    def _sign_assertion(self, assertion: Assertion, policy) -> Assertion:
        if not policy.sign_assertion:
            return assertion
        payload = xmlcodec.emit_assertion(assertion)
        signature = cryptoseal.sign_element(payload, assertion.id, self._signing_alias(), self.store)
        return replace(assertion, signature=signature)

    def _seal_assertion(self, assertion: Assertion, partner: Partner, policy):
        if not policy.encrypt_assertion:
            return assertion
        ders = partner.encryption_cert_ders()
        pinned = self.store.with_trust_anchors(partner.entity_id, encryption=ders)
        return cryptoseal.encrypt_assertion(
            xmlcodec.emit_assertion(assertion), partner.entity_id, pinned
        )

    def _sign_response(self, response: Response) -> Response:
        payload = xmlcodec.emit_response(response)
        signature = cryptoseal.sign_element(payload, response.id, self._signing_alias(), self.store)
        return replace(response, signature=signature)

    def idp_initiated_post(
        self,
        session: IdpSession,
        partner_id: EntityId | str,
        now: Instant,
        relay_state: str | None = None,
    ) -> bindings.PostForm:
        """Issue and wrap a response for the POST binding (the kick-off flow)."""
        response = self.issue_assertion(session, partner_id, now)
        return bindings.encode_post(
            xmlcodec.emit_response(response), "response", response.destination, relay_state
        )

    # -- SP-initiated flow ----------------------------------------------------

    def handle_authn_request(
        self,
        request_input: bytes | str,
        session: IdpSession,
        now: Instant,
    ) -> bindings.PostForm:
        """Validate an inbound request and answer with a fresh response.

        Accepts a redirect URL, a POST form body, or raw request XML; the
        inbound RelayState is echoed back verbatim and never dereferenced.
        """
        request_bytes, relay_state = self._decode_request(request_input)
        request = xmlcodec.parse_authn_request(request_bytes)
        partner = self.registry.partners.get(request.issuer.value)
        if partner is None or not isinstance(partner.descriptor.role, SpSsoDescriptor):
            raise UnknownIssuer(request.issuer.value)

        if partner.descriptor.role.authn_requests_signed:
            if request.signature is None:
                raise SignatureRequired(
                    f"{partner.entity_id} metadata promises signed requests"
                )
            elem = xmlcodec.parse_xml(request_bytes)
            if request.signature.reference_id != request.id:
                raise InvalidRequestSignature("signature references a different ID")
            pinned = self.store.with_trust_anchors(
                partner.entity_id, signing=partner.signing_cert_ders()
            )
            result = cryptoseal.verify_signature(
                xmlcodec.signed_payload_bytes(elem),
                request.signature,
                partner.entity_id,
                pinned,
            )
            if not result.accepted:
                raise InvalidRequestSignature(result.reason or "rejected")

        expiry = request.issue_instant.plus(partner.policy.validity + BEARER_GRACE_SECONDS)
        if not self.request_replay.check_and_record(request.id, expiry, now):
            raise ReplayedRequestId(request.id)

        response = self.issue_assertion(session, request.issuer, now)
        return bindings.encode_post(
            xmlcodec.emit_response(response), "response", response.destination, relay_state
        )

    @staticmethod
    def _decode_request(request_input: bytes | str) -> tuple[bytes, str | None]:
        if isinstance(request_input, str):
            decoded = bindings.decode_redirect(request_input)
            return decoded.message, decoded.relay_state
        if request_input.lstrip()[:1] == b"<":
            return request_input, None
        decoded = bindings.decode_post(request_input)
        return decoded.message, decoded.relay_state

    # -- artifact profile ------------------------------------------------------

    def issue_artifact(
        self, response: Response, partner_id: EntityId | str, endpoint_index: int = 0
    ) -> bindings.Artifact:
        key = partner_id.value if isinstance(partner_id, EntityId) else partner_id
        if key not in self.registry.partners:
            raise UnknownPartner(key)
        artifact = bindings.new_artifact(self.entity_id, endpoint_index, self.token_source)
        self.artifacts.put(
            artifact.message_handle,
            ArtifactEntry(
                response_bytes=xmlcodec.emit_response(response),
                issued_at=response.issue_instant,
                partner=key,
            ),
        )
        return artifact

    def issue_artifact_pair(
        self, response: Response, partner_id: EntityId | str, endpoint_index: int = 0
    ) -> tuple[bindings.Artifact, bindings.Artifact]:
        """Two cross-referencing artifacts; the token is only valid when it
        consists of both values."""
        key = partner_id.value if isinstance(partner_id, EntityId) else partner_id
        if key not in self.registry.partners:
            raise UnknownPartner(key)
        payload = xmlcodec.emit_response(response)
        first = bindings.new_artifact(self.entity_id, endpoint_index, self.token_source)
        second = bindings.new_artifact(self.entity_id, endpoint_index, self.token_source)
        for artifact in (first, second):
            self.artifacts.put(
                artifact.message_handle,
                ArtifactEntry(
                    response_bytes=payload, issued_at=response.issue_instant, partner=key
                ),
            )
        self.artifacts.link(first.message_handle, second.message_handle)
        return first, second

    def resolve_artifact(self, request_bytes: bytes, now: Instant) -> bytes:
        """Resolve an artifact request to the stored response, exactly once."""
        _issuer, values = xmlcodec.parse_artifact_resolve(request_bytes)
        return self._resolve_values(values, now)

    def resolve_artifact_pair(self, first: str, second: str, now: Instant) -> bytes:
        return self._resolve_values((first, second), now)

    def _resolve_values(self, values: tuple[str, ...], now: Instant) -> bytes:
        if len(values) > 2:
            raise MismatchedPair("at most two artifact values are accepted")
        artifacts = [bindings.parse_artifact(v) for v in values]
        local_source = bindings.source_id_for(self.entity_id)
        for artifact in artifacts:
            if artifact.source_id != local_source:
                raise WrongSourceId("artifact was not issued by this entity")
        return self.artifacts.consume(tuple(a.message_handle for a in artifacts), now)

    # -- single logout -----------------------------------------------------------

    def initiate_single_logout(
        self, session_index: str, now: Instant
    ) -> list[bindings.PostForm]:
        """One LogoutRequest per participating SP; the session is removed
        once every response has arrived (or immediately when no SP holds it)."""
        with self._lock:
            session = self.sessions.get(session_index)
            if session is None:
                if session_index in self._terminated:
                    return []
                raise UnknownSession(session_index)
            participants = sorted(session.participating_sps)

        record = self.source.lookup(session.user_key)
        forms: list[bindings.PostForm] = []
        issued: list[tuple[str, str]] = []
        for sp_id in participants:
            partner = self.registry.partners.get(sp_id)
            if partner is None:
                continue
            role = partner.descriptor.role
            if role.single_logout_endpoints:
                destination = role.single_logout_endpoints[0].location
            else:
                destination = default_acs(partner.descriptor).location
            request = LogoutRequest(
                id=new_message_id(self.token_source),
                issue_instant=now,
                issuer=self.entity_id,
                name_id=record.name_id,
                session_index=session_index,
            )
            payload = xmlcodec.emit_logout_request(request)
            if self.registry.signing_alias is not None:
                signature = cryptoseal.sign_element(
                    payload, request.id, self.registry.signing_alias, self.store
                )
                payload = xmlcodec.emit_logout_request(replace(request, signature=signature))
            forms.append(bindings.encode_post(payload, "request", destination))
            issued.append((request.id, sp_id))

        with self._lock:
            if issued:
                for request_id, sp_id in issued:
                    self._pending_logouts[request_id] = (session_index, sp_id)
            else:
                self.sessions.pop(session_index, None)
                self._terminated.add(session_index)
        return forms

    def handle_logout_response(self, response_bytes: bytes, now: Instant) -> None:
        """Count a partner's logout response toward session termination."""
        response = xmlcodec.parse_logout_response(response_bytes)
        if response.issuer.value not in self.registry.partners:
            raise UnknownIssuer(response.issuer.value)
        if response.in_response_to is None:
            return
        with self._lock:
            pending = self._pending_logouts.pop(response.in_response_to, None)
            if pending is None:
                return
            session_index, _sp_id = pending
            if not any(s == session_index for s, _ in self._pending_logouts.values()):
                self.sessions.pop(session_index, None)
                self._terminated.add(session_index)

    def finalize_logout(self, session_index: str) -> None:
        """Timeout path: terminate regardless of outstanding responses."""
        with self._lock:
            for request_id in [
                r for r, (s, _) in self._pending_logouts.items() if s == session_index
            ]:
                del self._pending_logouts[request_id]
            self.sessions.pop(session_index, None)
            self._terminated.add(session_index)
