import logging

import pytest

from samlforge.core import EntityId
from samlforge.federation import (
    FederationRegistry,
    IncompleteLocalConfig,
    MalformedMetadata,
    SelfRegistration,
    UnknownIssuer,
    export_metadata,
    load_registry,
    register_partner,
    save_registry,
)
from samlforge.harness.config import build_idp_descriptor, build_sp_descriptor
from samlforge.xmlcodec import (
    BINDING_HTTP_POST,
    IdpSsoDescriptor,
    emit_metadata,
    parse_metadata,
)


@pytest.fixture
def idp_registry(shared_keys):
    descriptor = build_idp_descriptor(
        "mycompany:saml2.0", "http://idp.internal.test", shared_keys["idp-signing"].cert_b64
    )
    return FederationRegistry(local=descriptor, signing_alias="idp-signing")


@pytest.fixture
def sp_registry(shared_keys):
    descriptor = build_sp_descriptor(
        "mypartner:saml2.0",
        "https://sp.internal.test",
        shared_keys["sp-signing"].cert_b64,
        shared_keys["sp-encryption"].cert_b64,
    )
    return FederationRegistry(local=descriptor, signing_alias="sp-signing")


class TestRegisterPartner:
    def test_sp_sample_derives_sign_and_encrypt(self, idp_registry, sp_metadata_bytes):
        registry = register_partner(idp_registry, sp_metadata_bytes)
        partner = registry.partner("mypartner:saml2.0")
        assert partner.policy.sign_assertion is True
        assert partner.policy.encrypt_assertion is True
        assert partner.policy.default_binding == BINDING_HTTP_POST

    def test_idp_sample_registers_at_sp(self, sp_registry, idp_metadata_bytes):
        registry = register_partner(sp_registry, idp_metadata_bytes)
        partner = registry.partner("mycompany:saml2.0")
        role = partner.descriptor.role
        assert isinstance(role, IdpSsoDescriptor)
        assert role.sso_endpoints[0].binding == BINDING_HTTP_POST
        assert role.sso_endpoints[0].location == "http://mycompany.com/sso/SSO"

    def test_self_registration_rejected(self, idp_registry):
        with pytest.raises(SelfRegistration):
            register_partner(idp_registry, emit_metadata(idp_registry.local))

    def test_malformed_metadata(self, idp_registry):
        with pytest.raises(MalformedMetadata):
            register_partner(idp_registry, b"<not-metadata/>")

    def test_duplicate_replaces_with_audit_line(self, idp_registry, sp_metadata_bytes, caplog):
        registry = register_partner(idp_registry, sp_metadata_bytes)
        with caplog.at_level(logging.INFO, logger="samlforge.federation"):
            registry = register_partner(registry, sp_metadata_bytes)
        assert len(registry.partners) == 1
        assert any("replacing existing partner" in r.message for r in caplog.records)

    def test_unknown_partner_lookup(self, idp_registry):
        with pytest.raises(UnknownIssuer):
            idp_registry.partner("nobody:saml2.0")

    def test_placeholder_certificates_stay_opaque(self, idp_registry, sp_metadata_bytes):
        # Sample documents carry the literal text CERTIFICATE; registration
        # succeeds and the unusable cert is simply not a pinnable DER.
        registry = register_partner(idp_registry, sp_metadata_bytes)
        partner = registry.partner("mypartner:saml2.0")
        assert partner.descriptor.role.signing_certs == ("CERTIFICATE",)
        assert partner.signing_cert_ders() == ()


class TestExportMetadata:
    def test_round_trips_through_codec(self, idp_registry):
        assert parse_metadata(export_metadata(idp_registry)) == idp_registry.local

    def test_contains_role_and_endpoint(self, idp_registry):
        raw = export_metadata(idp_registry)
        assert b"IDPSSODescriptor" in raw
        assert b"http://idp.internal.test/sso" in raw

    def test_missing_signing_cert_is_incomplete(self, idp_registry):
        import dataclasses

        bare_role = dataclasses.replace(idp_registry.local.role, signing_certs=())
        bare = dataclasses.replace(
            idp_registry, local=dataclasses.replace(idp_registry.local, role=bare_role)
        )
        with pytest.raises(IncompleteLocalConfig):
            export_metadata(bare)


class TestRegistryPersistence:
    def test_save_load_round_trip(self, tmp_path, idp_registry, sp_metadata_bytes):
        registry = register_partner(idp_registry, sp_metadata_bytes, validity=120)
        save_registry(registry, tmp_path / "registry")
        loaded = load_registry(tmp_path / "registry")
        assert loaded.local == registry.local
        assert loaded.signing_alias == registry.signing_alias
        assert set(loaded.partners) == set(registry.partners)
        reloaded = loaded.partner("mypartner:saml2.0")
        assert reloaded.policy == registry.partner("mypartner:saml2.0").policy

    def test_missing_directory_is_incomplete(self, tmp_path):
        with pytest.raises(IncompleteLocalConfig):
            load_registry(tmp_path / "nowhere")

    def test_save_prunes_stale_partner_files(self, tmp_path, idp_registry, sp_metadata_bytes):
        registry = register_partner(idp_registry, sp_metadata_bytes)
        save_registry(registry, tmp_path / "registry")
        save_registry(idp_registry, tmp_path / "registry")  # partner removed
        loaded = load_registry(tmp_path / "registry")
        assert loaded.partners == {}


def test_entity_id_helper(idp_registry, sp_metadata_bytes):
    registry = register_partner(idp_registry, sp_metadata_bytes)
    assert registry.has_partner(EntityId("mypartner:saml2.0"))
    assert not registry.has_partner("absent")
    assert registry.idp_partners() == ()
