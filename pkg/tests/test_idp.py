import dataclasses
import threading

import pytest

from samlforge import bindings, xmlcodec
from samlforge.core import EncryptedAssertion, EntityId, new_message_id
from samlforge.cryptoseal import decrypt_assertion
from samlforge.federation import UnknownIssuer
from samlforge.harness.config import build_sp_descriptor
from samlforge.harness.scenarios import (
    CLIENT_IP,
    SIM_EPOCH,
    SP_ENTITY,
    SimulatedFederation,
)
from samlforge.idp import (
    AlreadyConsumed,
    ArtifactExpired,
    IncompletePair,
    InvalidRequestSignature,
    MismatchedPair,
    PolicyViolation,
    ReplayedRequestId,
    SignatureRequired,
    UnknownArtifact,
    UnknownPartner,
    UnknownSession,
    UnknownUser,
    WrongSourceId,
    parse_attribute_records,
)

NOW = SIM_EPOCH


@pytest.fixture
def fed(shared_keys):
    return SimulatedFederation(encrypt=True, keys=shared_keys)


@pytest.fixture
def session(fed):
    return fed.idp.create_session("the.user", CLIENT_IP, NOW)


class TestAttributeSource:
    def test_records_parse(self):
        source = parse_attribute_records(
            "# comment\nthe.user the.user@mycompany.com clientId=1234 uid=the.user@mycompany.com\n"
        )
        record = source.lookup("the.user")
        assert record.name_id == "the.user@mycompany.com"
        assert [(a.name, a.values) for a in record.attributes] == [
            ("clientId", ("1234",)),
            ("uid", ("the.user@mycompany.com",)),
        ]

    def test_repeated_names_accumulate(self):
        source = parse_attribute_records("u nid role=admin role=auditor\n")
        assert source.lookup("u").attributes[0].values == ("admin", "auditor")

    def test_missing_user_is_an_error(self):
        source = parse_attribute_records("u nid a=1\n")
        with pytest.raises(UnknownUser):
            source.lookup("ghost")

    def test_bad_line_rejected(self):
        with pytest.raises(ValueError):
            parse_attribute_records("loneword\n")


class TestIssueAssertion:
    def test_window_matches_configured_validity(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        assertion = decrypt_and_parse(fed, response)
        assert assertion.conditions.not_before == NOW
        assert assertion.conditions.not_on_or_after == NOW.plus(300)
        # five-minute window: 12:28:36 -> 12:33:36
        assert assertion.conditions.not_on_or_after.isoformat() == "2009-04-22T12:33:36Z"

    def test_bearer_outlives_window_by_grace(self, fed, session):
        assertion = decrypt_and_parse(fed, fed.idp.issue_assertion(session, SP_ENTITY, NOW))
        assert assertion.subject.confirmation.not_on_or_after == NOW.plus(900)

    def test_addressing_and_audience(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        assertion = decrypt_and_parse(fed, response)
        acs = "https://sp.internal.test/acs"
        assert response.destination == acs
        assert assertion.subject.confirmation.recipient == acs
        assert [a.value for a in assertion.conditions.audiences] == [SP_ENTITY]
        assert assertion.authn_statement.locality_address == CLIENT_IP

    def test_signed_and_encrypted_per_policy(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        assert isinstance(response.assertion, EncryptedAssertion)
        assert response.signature is not None
        assertion = decrypt_and_parse(fed, response)
        assert assertion.signature is not None
        assert [(a.name, a.values[0]) for a in assertion.attributes] == [
            ("clientId", "1234"),
            ("uid", "the.user@mycompany.com"),
        ]

    def test_unknown_partner(self, fed, session):
        with pytest.raises(UnknownPartner):
            fed.idp.issue_assertion(session, "ghost:saml2.0", NOW)

    def test_unknown_user(self, fed):
        with pytest.raises(UnknownUser):
            fed.idp.create_session("ghost", CLIENT_IP, NOW)

    def test_signing_demanded_but_unconfigured(self, fed, session):
        fed.idp.registry = dataclasses.replace(fed.idp.registry, signing_alias=None)
        with pytest.raises(PolicyViolation):
            fed.idp.issue_assertion(session, SP_ENTITY, NOW)

    def test_fresh_ids_have_128_bits(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        assert len(response.id) >= 33  # "_" + 32 hex chars

    def test_id_uniqueness_over_a_million_draws(self):
        seen = {new_message_id() for _ in range(1_000_000)}
        assert len(seen) == 1_000_000


class TestHandleAuthnRequest:
    def test_signed_request_with_relay_state(self, fed, session):
        redirect, token = fed.sp.build_authn_request("https://sp.internal.test/app/x", NOW)
        form = fed.idp.handle_authn_request(redirect.url, session, NOW)
        assert form.relay_state == token
        assert form.saml_field == "SAMLResponse"

    def test_unsigned_request_rejected_when_metadata_promises_signing(self, fed, session):
        from samlforge.core import AuthnRequest

        request = AuthnRequest(
            id=new_message_id(),
            issue_instant=NOW,
            issuer=EntityId(SP_ENTITY),
            acs_url="https://sp.internal.test/acs",
        )
        with pytest.raises(SignatureRequired):
            fed.idp.handle_authn_request(xmlcodec.emit_authn_request(request), session, NOW)

    def test_replayed_request_id_rejected(self, fed, session):
        redirect, _ = fed.sp.build_authn_request("https://sp.internal.test/app", NOW)
        fed.idp.handle_authn_request(redirect.url, session, NOW)
        with pytest.raises(ReplayedRequestId):
            fed.idp.handle_authn_request(redirect.url, session, NOW)

    def test_unknown_issuer(self, fed, session):
        from samlforge.core import AuthnRequest

        request = AuthnRequest(
            id=new_message_id(),
            issue_instant=NOW,
            issuer=EntityId("stranger:saml2.0"),
            acs_url="https://x/acs",
        )
        with pytest.raises(UnknownIssuer):
            fed.idp.handle_authn_request(xmlcodec.emit_authn_request(request), session, NOW)

    def test_bad_signature_rejected(self, fed, session, rogue_key):
        from samlforge.core import AuthnRequest
        from samlforge import cryptoseal

        rogue_store = cryptoseal.make_keystore({"k": rogue_key})
        request = AuthnRequest(
            id=new_message_id(),
            issue_instant=NOW,
            issuer=EntityId(SP_ENTITY),
            acs_url="https://sp.internal.test/acs",
        )
        payload = xmlcodec.emit_authn_request(request)
        signature = cryptoseal.sign_element(payload, request.id, "k", rogue_store)
        signed = dataclasses.replace(request, signature=signature)
        with pytest.raises(InvalidRequestSignature):
            fed.idp.handle_authn_request(xmlcodec.emit_authn_request(signed), session, NOW)


class TestArtifacts:
    def test_single_use(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        artifact = fed.idp.issue_artifact(response, SP_ENTITY)
        payload = fed.idp._resolve_values((artifact.encode(),), NOW.plus(1))
        assert payload == xmlcodec.emit_response(response)
        with pytest.raises(AlreadyConsumed):
            fed.idp._resolve_values((artifact.encode(),), NOW.plus(2))

    def test_expiry_after_retention(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        artifact = fed.idp.issue_artifact(response, SP_ENTITY)
        fed.idp._resolve_values((artifact.encode(),), NOW.plus(299))
        later = fed.idp.issue_artifact(response, SP_ENTITY)
        with pytest.raises(ArtifactExpired):
            fed.idp._resolve_values((later.encode(),), NOW.plus(301))

    def test_unknown_artifact(self, fed):
        stray = bindings.new_artifact(EntityId("mycompany:saml2.0"))
        with pytest.raises(UnknownArtifact):
            fed.idp._resolve_values((stray.encode(),), NOW)

    def test_wrong_source_id(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        artifact = fed.idp.issue_artifact(response, SP_ENTITY)
        foreign = dataclasses.replace(
            artifact, source_id=bindings.source_id_for(EntityId("someone:else"))
        )
        with pytest.raises(WrongSourceId):
            fed.idp._resolve_values((foreign.encode(),), NOW)

    def test_resolve_request_wire_shape(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        artifact = fed.idp.issue_artifact(response, SP_ENTITY)
        request = xmlcodec.emit_artifact_resolve(
            new_message_id(), NOW, EntityId(SP_ENTITY), (artifact.encode(),)
        )
        assert fed.idp.resolve_artifact(request, NOW.plus(1)) == xmlcodec.emit_response(response)

    def test_pair_contract(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        first, second = fed.idp.issue_artifact_pair(response, SP_ENTITY)
        with pytest.raises(IncompletePair):
            fed.idp._resolve_values((first.encode(),), NOW)
        other = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        third, fourth = fed.idp.issue_artifact_pair(other, SP_ENTITY)
        with pytest.raises(MismatchedPair):
            fed.idp.resolve_artifact_pair(first.encode(), third.encode(), NOW)
        assert fed.idp.resolve_artifact_pair(first.encode(), second.encode(), NOW.plus(1))
        with pytest.raises(AlreadyConsumed):
            fed.idp.resolve_artifact_pair(first.encode(), second.encode(), NOW.plus(2))

    def test_concurrent_resolution_is_exactly_once(self, fed, session):
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        artifact = fed.idp.issue_artifact(response, SP_ENTITY)
        outcomes: list[str] = []
        lock = threading.Lock()
        barrier = threading.Barrier(16)

        def attempt():
            barrier.wait()
            try:
                fed.idp._resolve_values((artifact.encode(),), NOW.plus(1))
                result = "ok"
            except AlreadyConsumed:
                result = "consumed"
            with lock:
                outcomes.append(result)

        threads = [threading.Thread(target=attempt) for _ in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert outcomes.count("ok") == 1
        assert outcomes.count("consumed") == 15


class TestSingleLogout:
    def test_one_request_per_participating_sp(self, shared_keys, fed, session):
        # register a second service provider and issue to both
        other_desc = build_sp_descriptor(
            "otherpartner:saml2.0",
            "https://other.internal.test",
            shared_keys["sp-signing"].cert_b64,
            None,
            want_assertions_signed=False,
        )
        fed.idp.register_partner(xmlcodec.emit_metadata(other_desc))
        fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        fed.idp.issue_assertion(session, "otherpartner:saml2.0", NOW)

        forms = fed.idp.initiate_single_logout(session.session_index, NOW.plus(1))
        assert len(forms) == 2
        for form in forms:
            message = bindings.decode_post(bindings.serialize_post_body(form)).message
            request = xmlcodec.parse_logout_request(message)
            assert request.session_index == session.session_index

    def test_no_participants_terminates_immediately(self, fed):
        session = fed.idp.create_session("j.doe", CLIENT_IP, NOW)
        assert fed.idp.initiate_single_logout(session.session_index, NOW) == []
        assert session.session_index not in fed.idp.sessions
        # idempotent for the already-terminated session
        assert fed.idp.initiate_single_logout(session.session_index, NOW) == []

    def test_unknown_session(self, fed):
        with pytest.raises(UnknownSession):
            fed.idp.initiate_single_logout("never-existed", NOW)

    def test_session_removed_after_all_responses(self, fed, session):
        fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        forms = fed.idp.initiate_single_logout(session.session_index, NOW.plus(1))
        assert session.session_index in fed.idp.sessions
        for form in forms:
            message = bindings.decode_post(bindings.serialize_post_body(form)).message
            response_bytes = fed.sp.handle_logout_request(message, NOW.plus(2))
            fed.idp.handle_logout_response(response_bytes, NOW.plus(3))
        assert session.session_index not in fed.idp.sessions

    def test_finalize_logout_times_out_pending(self, fed, session):
        fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        fed.idp.initiate_single_logout(session.session_index, NOW.plus(1))
        fed.idp.finalize_logout(session.session_index)
        assert session.session_index not in fed.idp.sessions


def decrypt_and_parse(fed, response):
    if isinstance(response.assertion, EncryptedAssertion):
        return xmlcodec.parse_assertion(decrypt_assertion(response.assertion, fed.sp.store))
    return response.assertion


class TestIssuedWindowsProperty:
    @pytest.mark.parametrize("validity", [60, 300, 1200])
    def test_duration_equals_configured_validity(self, shared_keys, validity):
        fed = SimulatedFederation(keys=shared_keys)
        fed.idp.registry = dataclasses.replace(
            fed.idp.registry,
            partners={
                k: dataclasses.replace(
                    p, policy=dataclasses.replace(p.policy, validity=validity)
                )
                for k, p in fed.idp.registry.partners.items()
            },
        )
        session = fed.idp.create_session("the.user", CLIENT_IP, NOW)
        response = fed.idp.issue_assertion(session, SP_ENTITY, NOW)
        assertion = decrypt_and_parse(fed, response)
        window = assertion.conditions
        assert window.not_before < window.not_on_or_after
        assert window.not_on_or_after.epoch - window.not_before.epoch == validity
