"""Federation registry: local entity, partner entities, per-partner policy.

A federation is a local entity descriptor (with key aliases into a
keystore), plus the partner descriptors learned from metadata exchange and
the policies derived from their flags. Registries are immutable values;
``register_partner`` returns an updated copy.

On-disk layout (one directory per registry):

    local.xml            local entity descriptor
    local.policy         key=value: signing_alias, encryption_alias, clock_skew
    partner-<n>.xml      one metadata document per partner
    partner-<n>.policy   key=value policy derived at registration
"""

from __future__ import annotations

import base64
import binascii
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .core import EntityId, SamlError
from .xmlcodec import (
    BINDING_HTTP_POST,
    EntityDescriptor,
    IdpSsoDescriptor,
    IndexedEndpoint,
    SpSsoDescriptor,
    emit_metadata,
    parse_metadata,
)

logger = logging.getLogger(__name__)

DEFAULT_VALIDITY_SECONDS = 300  # assertion lifetime: keep the window short
BEARER_GRACE_SECONDS = 600  # bearer confirmation outlives the conditions window


class MalformedMetadata(SamlError):
    pass


class SelfRegistration(SamlError):
    pass


class IncompleteLocalConfig(SamlError):
    pass


class UnknownIssuer(SamlError):
    pass


@dataclass(frozen=True)
class PartnerPolicy:
    """Behaviour toward one partner, derived from its metadata flags."""

    sign_assertion: bool = False
    encrypt_assertion: bool = False
    default_binding: str = BINDING_HTTP_POST
    clock_skew: int = 0
    validity: int = DEFAULT_VALIDITY_SECONDS
    artifact_mode: str = "single"  # or "pair"


@dataclass(frozen=True)
class Partner:
    descriptor: EntityDescriptor
    policy: PartnerPolicy

    @property
    def entity_id(self) -> EntityId:
        return self.descriptor.entity_id

    def signing_cert_ders(self) -> tuple[bytes, ...]:
        """Pinned signing certificates; undecodable placeholder text is skipped."""
        return _decode_certs(self.descriptor.role.signing_certs)

    def encryption_cert_ders(self) -> tuple[bytes, ...]:
        return _decode_certs(
            tuple(k.certificate for k in self.descriptor.role.encryption_keys)
        )


def _decode_certs(texts: tuple[str, ...]) -> tuple[bytes, ...]:
    out = []
    for text in texts:
        compact = re.sub(r"\s+", "", text)
        try:
            out.append(base64.b64decode(compact.encode("ascii"), validate=True))
        except (binascii.Error, ValueError, UnicodeEncodeError):
            continue
    return tuple(out)


@dataclass(frozen=True)
class FederationRegistry:
    local: EntityDescriptor
    signing_alias: str | None = None
    encryption_alias: str | None = None
    clock_skew: int = 0
    partners: Mapping[str, Partner] = field(default_factory=dict)

    def partner(self, entity_id: EntityId | str) -> Partner:
        key = entity_id.value if isinstance(entity_id, EntityId) else entity_id
        try:
            return self.partners[key]
        except KeyError:
            raise UnknownIssuer(key) from None

    def has_partner(self, entity_id: EntityId | str) -> bool:
        key = entity_id.value if isinstance(entity_id, EntityId) else entity_id
        return key in self.partners

    def idp_partners(self) -> tuple[Partner, ...]:
        return tuple(p for p in self.partners.values() if p.descriptor.is_idp)


def derive_policy(descriptor: EntityDescriptor, clock_skew: int = 0,
                  validity: int = DEFAULT_VALIDITY_SECONDS) -> PartnerPolicy:
    """Policy defaults follow the partner's own metadata flags."""
    role = descriptor.role
    if isinstance(role, SpSsoDescriptor):
        return PartnerPolicy(
            sign_assertion=role.want_assertions_signed,
            encrypt_assertion=bool(role.encryption_keys),
            default_binding=role.default_acs().binding,
            clock_skew=clock_skew,
            validity=validity,
        )
    return PartnerPolicy(
        sign_assertion=False,
        encrypt_assertion=False,
        default_binding=role.sso_endpoints[0].binding,
        clock_skew=clock_skew,
        validity=validity,
    )


def register_partner(
    registry: FederationRegistry,
    metadata_bytes: bytes | str,
    clock_skew: int | None = None,
    validity: int = DEFAULT_VALIDITY_SECONDS,
    artifact_mode: str = "single",
) -> FederationRegistry:
    """Add (or replace) a partner from its metadata document."""
    try:
        descriptor = parse_metadata(metadata_bytes)
    except SamlError as exc:
        raise MalformedMetadata(str(exc)) from exc
    if descriptor.entity_id == registry.local.entity_id:
        raise SelfRegistration(descriptor.entity_id.value)
    policy = derive_policy(
        descriptor,
        clock_skew=registry.clock_skew if clock_skew is None else clock_skew,
        validity=validity,
    )
    policy = replace(policy, artifact_mode=artifact_mode)
    partners = dict(registry.partners)
    if descriptor.entity_id.value in partners:
        logger.info("replacing existing partner registration entity_id=%s", descriptor.entity_id)
    partners[descriptor.entity_id.value] = Partner(descriptor, policy)
    return replace(registry, partners=partners)


def export_metadata(registry: FederationRegistry) -> bytes:
    """Emit the local entity descriptor for exchange with partners."""
    role = registry.local.role
    if isinstance(role, IdpSsoDescriptor):
        if not role.sso_endpoints:
            raise IncompleteLocalConfig("local IdP has no single-sign-on endpoint")
    else:
        if not role.acs_endpoints:
            raise IncompleteLocalConfig("local SP has no assertion consumer endpoint")
    if not role.signing_certs:
        raise IncompleteLocalConfig("local entity has no signing certificate")
    return emit_metadata(registry.local)


def default_acs(descriptor: EntityDescriptor) -> IndexedEndpoint:
    role = descriptor.role
    if not isinstance(role, SpSsoDescriptor):
        raise MalformedMetadata(f"{descriptor.entity_id} is not a service provider")
    return role.default_acs()


# ---------------------------------------------------------------------------
# Directory persistence
# ---------------------------------------------------------------------------


def _emit_policy(policy: PartnerPolicy, entity_id: str) -> str:
    return (
        f"entity_id = {entity_id}\n"
        f"sign_assertion = {'true' if policy.sign_assertion else 'false'}\n"
        f"encrypt_assertion = {'true' if policy.encrypt_assertion else 'false'}\n"
        f"default_binding = {policy.default_binding}\n"
        f"clock_skew = {policy.clock_skew}\n"
        f"validity = {policy.validity}\n"
        f"artifact_mode = {policy.artifact_mode}\n"
    )


def parse_keyvalues(text: str) -> dict[str, str]:
    """Shared key=value grammar: one pair per line, ``#`` comments."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def _parse_policy(text: str) -> tuple[str, PartnerPolicy]:
    values = parse_keyvalues(text)
    return values["entity_id"], PartnerPolicy(
        sign_assertion=values.get("sign_assertion") == "true",
        encrypt_assertion=values.get("encrypt_assertion") == "true",
        default_binding=values.get("default_binding", BINDING_HTTP_POST),
        clock_skew=int(values.get("clock_skew", "0")),
        validity=int(values.get("validity", str(DEFAULT_VALIDITY_SECONDS))),
        artifact_mode=values.get("artifact_mode", "single"),
    )


def save_registry(registry: FederationRegistry, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "local.xml").write_bytes(emit_metadata(registry.local))
    local_lines = [f"clock_skew = {registry.clock_skew}"]
    if registry.signing_alias:
        local_lines.append(f"signing_alias = {registry.signing_alias}")
    if registry.encryption_alias:
        local_lines.append(f"encryption_alias = {registry.encryption_alias}")
    (directory / "local.policy").write_text("\n".join(local_lines) + "\n", encoding="utf-8")
    for stale in directory.glob("partner-*"):
        stale.unlink()
    for n, (entity_id, partner) in enumerate(sorted(registry.partners.items())):
        (directory / f"partner-{n}.xml").write_bytes(emit_metadata(partner.descriptor))
        (directory / f"partner-{n}.policy").write_text(
            _emit_policy(partner.policy, entity_id), encoding="utf-8"
        )


def load_registry(directory: str | Path) -> FederationRegistry:
    directory = Path(directory)
    local_path = directory / "local.xml"
    if not local_path.exists():
        raise IncompleteLocalConfig(f"{local_path} does not exist")
    local = parse_metadata(local_path.read_bytes())
    signing_alias = None
    encryption_alias = None
    clock_skew = 0
    policy_path = directory / "local.policy"
    if policy_path.exists():
        values = parse_keyvalues(policy_path.read_text(encoding="utf-8"))
        signing_alias = values.get("signing_alias")
        encryption_alias = values.get("encryption_alias")
        clock_skew = int(values.get("clock_skew", "0"))
    partners: dict[str, Partner] = {}
    for xml_path in sorted(directory.glob("partner-*.xml")):
        descriptor = parse_metadata(xml_path.read_bytes())
        policy_file = xml_path.with_suffix(".policy")
        if policy_file.exists():
            entity_id, policy = _parse_policy(policy_file.read_text(encoding="utf-8"))
            if entity_id != descriptor.entity_id.value:
                raise MalformedMetadata(
                    f"{policy_file.name} names {entity_id!r} but metadata is for "
                    f"{descriptor.entity_id.value!r}"
                )
        else:
            policy = derive_policy(descriptor, clock_skew=clock_skew)
        partners[descriptor.entity_id.value] = Partner(descriptor, policy)
    return FederationRegistry(
        local=local,
        signing_alias=signing_alias,
        encryption_alias=encryption_alias,
        clock_skew=clock_skew,
        partners=partners,
    )
