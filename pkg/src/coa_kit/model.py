"""Domain types for playbook-bearing STIX 2.1 Course of Action objects.

Construction enforces structural invariants only (identifier and timestamp
syntax, literal ``type`` values). Semantic rules such as value ranges,
vocabulary membership or version ordering are reported by
:mod:`coa_kit.validate`, so a parsed object can always be inspected even
when it is wrong.
"""

from __future__ import annotations

import json
import re
import uuid as _uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import total_ordering
from importlib import resources
from typing import Any, Mapping, Union


class CoaKitError(Exception):
    """Base class for all toolkit errors."""


class MalformedIdentifier(CoaKitError, ValueError):
    pass


class MalformedTimestamp(CoaKitError, ValueError):
    pass


_TYPE_TOKEN = re.compile(r"^[a-z][a-z0-9-]*$")
_UUID_TEXT = re.compile(
    r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$"
)
_TIMESTAMP = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?Z$"
)


def is_type_token(text: str) -> bool:
    return bool(_TYPE_TOKEN.match(text))


@dataclass(frozen=True)
class StixIdentifier:
    """A typed identifier of the form ``object-type--uuid``."""

    object_type: str
    uuid: str

    def __post_init__(self) -> None:
        if not isinstance(self.object_type, str) or not _TYPE_TOKEN.match(self.object_type):
            raise MalformedIdentifier(f"bad object type token: {self.object_type!r}")
        if not isinstance(self.uuid, str) or not _UUID_TEXT.match(self.uuid):
            raise MalformedIdentifier(f"bad UUID: {self.uuid!r}")
        object.__setattr__(self, "uuid", self.uuid.lower())

    def __str__(self) -> str:
        return f"{self.object_type}--{self.uuid}"

    @classmethod
    def generate(cls, object_type: str) -> StixIdentifier:
        return cls(object_type, str(_uuid.uuid4()))


def parse_identifier(text: str) -> StixIdentifier:
    """Parse ``text`` into a :class:`StixIdentifier`.

    The UUID part is lowercased; the type token must already be lowercase.
    Any syntactically valid UUID is accepted, not only version 4.
    """
    if not isinstance(text, str):
        raise MalformedIdentifier(f"identifier must be a string, got {type(text).__name__}")
    object_type, sep, rest = text.partition("--")
    if not sep:
        raise MalformedIdentifier(f"missing '--' separator in {text!r}")
    return StixIdentifier(object_type, rest)


@total_ordering
@dataclass(frozen=True, eq=False)
class StixTimestamp:
    """A UTC instant that remembers the exact text it was parsed from.

    Equality, hashing and ordering use the instant, so ``...00Z`` and
    ``...00.000000Z`` compare equal. Serialization always returns ``text``.
    """

    instant: datetime
    text: str

    def __str__(self) -> str:
        return self.text

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StixTimestamp):
            return NotImplemented
        return self.instant == other.instant

    def __lt__(self, other: StixTimestamp) -> bool:
        if not isinstance(other, StixTimestamp):
            return NotImplemented
        return self.instant < other.instant

    def __hash__(self) -> int:
        return hash(self.instant)

    @classmethod
    def from_datetime(cls, instant: datetime) -> StixTimestamp:
        """Build a timestamp with six fractional digits from an aware datetime."""
        if instant.tzinfo is None:
            raise MalformedTimestamp("naive datetime; a UTC instant is required")
        instant = instant.astimezone(timezone.utc)
        return cls(instant, instant.strftime("%Y-%m-%dT%H:%M:%S.%fZ"))

    @classmethod
    def now(cls) -> StixTimestamp:
        return cls.from_datetime(datetime.now(timezone.utc))

    def plus_microsecond(self) -> StixTimestamp:
        return StixTimestamp.from_datetime(self.instant + timedelta(microseconds=1))


def parse_timestamp(text: str) -> StixTimestamp:
    """Parse a ``YYYY-MM-DDTHH:MM:SS[.ffffff]Z`` string."""
    if not isinstance(text, str):
        raise MalformedTimestamp(f"timestamp must be a string, got {type(text).__name__}")
    m = _TIMESTAMP.match(text)
    if m is None:
        raise MalformedTimestamp(f"not a UTC STIX timestamp: {text!r}")
    year, month, day, hour, minute, second, frac = m.groups()
    micro = int(frac.ljust(6, "0")) if frac else 0
    try:
        instant = datetime(
            int(year), int(month), int(day), int(hour), int(minute), int(second),
            micro, tzinfo=timezone.utc,
        )
    except ValueError as exc:
        raise MalformedTimestamp(f"invalid field in {text!r}: {exc}") from None
    return StixTimestamp(instant, text)


# ---------------------------------------------------------------------------
# Vocabularies
# ---------------------------------------------------------------------------

PLAYBOOK_TYPE_OV: tuple[str, ...] = (
    "notification",
    "detection",
    "investigation",
    "prevention",
    "mitigation",
    "remediation",
    "analysis",
    "containment",
    "eradication",
    "recovery",
    "attack",
)

PLAYBOOK_ABSTRACTION_OV: tuple[str, ...] = ("template", "executable")

EXTENSION_TYPE_ENUM: tuple[str, ...] = (
    "new-sdo",
    "new-sco",
    "new-sro",
    "property-extension",
    "toplevel-property-extension",
)


def load_industry_sectors(path: str | None = None) -> tuple[str, ...]:
    """Load the industry-sector vocabulary from a JSON list of strings.

    Without ``path`` the packaged copy of the STIX 2.1 list is used.
    """
    if path is None:
        text = resources.files("coa_kit").joinpath("data/industry_sector_ov.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    terms = json.loads(text)
    if not isinstance(terms, list) or not all(isinstance(t, str) for t in terms):
        raise ValueError("industry sector vocabulary must be a JSON list of strings")
    return tuple(dict.fromkeys(terms))


@dataclass(frozen=True)
class PlaybookVocabularies:
    playbook_type_ov: tuple[str, ...] = PLAYBOOK_TYPE_OV
    playbook_abstraction_ov: tuple[str, ...] = PLAYBOOK_ABSTRACTION_OV
    industry_sector_ov: tuple[str, ...] = field(default_factory=load_industry_sectors)

    @classmethod
    def load(cls, industry_sector_path: str | None = None) -> PlaybookVocabularies:
        return cls(industry_sector_ov=load_industry_sectors(industry_sector_path))


# ---------------------------------------------------------------------------
# Objects
# ---------------------------------------------------------------------------

PROPERTY_EXTENSION = "property-extension"

# The extension definition published alongside the playbook extension.
PLAYBOOK_EXTENSION_DEFINITION_ID = StixIdentifier(
    "extension-definition", "1e1c1bd7-c527-4215-8e18-e199e74da57c"
)


def _check_literal(obj: Any, expected: str) -> None:
    # `type` is settable so validators can report a wrong value on hand-built objects,
    # but the id prefix must agree with whatever type is declared.
    if obj.id.object_type != obj.type:
        raise MalformedIdentifier(
            f"id {obj.id} does not match object type {obj.type!r} (expected {expected!r})"
        )


@dataclass(frozen=True)
class PlaybookExtension:
    """Body of the nested property extension that carries a playbook.

    ``created`` and ``modified`` are required on the wire but may be ``None``
    here so that validation can report their absence. ``extra`` keeps
    unrecognised properties of the extension body in source order.
    """

    extension_type: str | None = PROPERTY_EXTENSION
    playbook_id: str | None = None
    created: StixTimestamp | None = None
    modified: StixTimestamp | None = None
    playbook_creator: StixIdentifier | None = None
    revoked: bool | None = None
    labels: tuple[str, ...] | None = None
    description: str | None = None
    playbook_valid_from: StixTimestamp | None = None
    playbook_valid_until: StixTimestamp | None = None
    playbook_creation_time: StixTimestamp | None = None
    playbook_modification_time: StixTimestamp | None = None
    playbook_impact: int | None = None
    playbook_severity: int | None = None
    playbook_priority: int | None = None
    organization_type: tuple[str, ...] | None = None
    playbook_type: tuple[str, ...] | None = None
    playbook_standard: str | None = None
    playbook_abstraction: str | None = None
    playbook_base64: str | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)
    # input used `playbook_bin` instead of `playbook_base64`
    bin_alias: bool = field(default=False, compare=False)
    notes: tuple[str, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class OpaqueExtension:
    """An extension body that is not a playbook property extension."""

    body: Mapping[str, Any]
    notes: tuple[str, ...] = field(default=(), compare=False)

    @property
    def extension_type(self) -> Any:
        return self.body.get("extension_type")


Extension = Union[PlaybookExtension, OpaqueExtension]


@dataclass(frozen=True)
class CourseOfAction:
    id: StixIdentifier
    created: StixTimestamp
    modified: StixTimestamp
    name: str | None = None
    type: str = "course-of-action"
    spec_version: str | None = "2.1"
    created_by_ref: StixIdentifier | None = None
    description: str | None = None
    extensions: Mapping[str, Extension] = field(default_factory=dict)
    passthrough: Mapping[str, Any] = field(default_factory=dict)
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        _check_literal(self, "course-of-action")

    @property
    def version_key(self) -> VersionKey:
        return VersionKey(self.id, self.modified)


@dataclass(frozen=True)
class ExternalReference:
    source_name: str
    description: str | None = None
    url: str | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ExtensionDefinition:
    id: StixIdentifier
    created: StixTimestamp
    modified: StixTimestamp
    name: str | None = None
    schema: str | None = None
    version: str | None = None
    extension_types: tuple[str, ...] | None = None
    type: str = "extension-definition"
    spec_version: str | None = "2.1"
    created_by_ref: StixIdentifier | None = None
    description: str | None = None
    extension_properties: tuple[str, ...] | None = None
    external_references: tuple[ExternalReference, ...] | None = None
    passthrough: Mapping[str, Any] = field(default_factory=dict)
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        _check_literal(self, "extension-definition")

    @property
    def version_key(self) -> VersionKey:
        return VersionKey(self.id, self.modified)


@dataclass(frozen=True)
class Identity:
    id: StixIdentifier
    created: StixTimestamp
    modified: StixTimestamp
    name: str | None = None
    type: str = "identity"
    spec_version: str | None = "2.1"
    created_by_ref: StixIdentifier | None = None
    description: str | None = None
    identity_class: str | None = None
    contact_information: str | None = None
    passthrough: Mapping[str, Any] = field(default_factory=dict)
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        _check_literal(self, "identity")

    @property
    def version_key(self) -> VersionKey:
        return VersionKey(self.id, self.modified)


@dataclass(frozen=True)
class Relationship:
    id: StixIdentifier
    created: StixTimestamp
    modified: StixTimestamp
    relationship_type: str
    source_ref: StixIdentifier
    target_ref: StixIdentifier
    type: str = "relationship"
    spec_version: str | None = "2.1"
    created_by_ref: StixIdentifier | None = None
    description: str | None = None
    passthrough: Mapping[str, Any] = field(default_factory=dict)
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        _check_literal(self, "relationship")

    @property
    def version_key(self) -> VersionKey:
        return VersionKey(self.id, self.modified)


@dataclass(frozen=True)
class OpaqueObject:
    """Any object whose ``type`` is not modelled; ``raw`` keeps source key order."""

    type: str
    raw: Mapping[str, Any]
    notes: tuple[str, ...] = field(default=(), compare=False)

    @property
    def id(self) -> StixIdentifier | None:
        try:
            return parse_identifier(self.raw.get("id"))
        except MalformedIdentifier:
            return None

    @property
    def modified(self) -> StixTimestamp | None:
        try:
            return parse_timestamp(self.raw.get("modified"))
        except MalformedTimestamp:
            return None

    @property
    def version_key(self) -> VersionKey | None:
        ident, modified = self.id, self.modified
        if ident is None or modified is None:
            return None
        return VersionKey(ident, modified)


StixObject = Union[CourseOfAction, ExtensionDefinition, Identity, Relationship, OpaqueObject]


@dataclass(frozen=True)
class Bundle:
    id: StixIdentifier
    objects: tuple[StixObject, ...] = ()
    type: str = "bundle"
    passthrough: Mapping[str, Any] = field(default_factory=dict)
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.type != "bundle":
            raise CoaKitError(f"bundle type must be 'bundle', got {self.type!r}")
        _check_literal(self, "bundle")

    @classmethod
    def wrap(cls, objects: Any) -> Bundle:
        return cls(StixIdentifier.generate("bundle"), tuple(objects))


@dataclass(frozen=True)
class VersionKey:
    """Identifies one version of an object: ``(id, modified)``."""

    id: StixIdentifier
    modified: StixTimestamp

    def to_dict(self) -> dict[str, str]:
        return {"id": str(self.id), "modified": str(self.modified)}
