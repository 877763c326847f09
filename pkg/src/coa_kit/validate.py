"""Rule engine producing graded findings for objects, extensions and bundles.

Every finding cites a rule from :data:`RULES`; a rule's severity is fixed.
MUST-level requirements are errors, SHOULD-level requirements, open
vocabularies and relationship target tables are warnings, and purely
informational observations are info.
"""

from __future__ import annotations

import base64
import binascii
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any, Callable, Iterable, Mapping, Optional

from coa_kit.model import (
    Bundle,
    CourseOfAction,
    EXTENSION_TYPE_ENUM,
    ExtensionDefinition,
    Identity,
    OpaqueExtension,
    OpaqueObject,
    PROPERTY_EXTENSION,
    PlaybookExtension,
    PlaybookVocabularies,
    Relationship,
    StixIdentifier,
    StixObject,
    is_type_token,
    parse_identifier,
)


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass(frozen=True)
class Rule:
    rule_id: str
    severity: Severity
    source: str
    summary: str


E, W, I = Severity.ERROR, Severity.WARNING, Severity.INFO

_CATALOG = (
    # Common STIX object properties
    Rule("C-modified-order", E, "STIX 2.1 common properties: modified", "modified must not be earlier than created"),
    Rule("C-spec-version", W, "STIX 2.1 common properties: spec_version", "spec_version should be \"2.1\""),
    Rule("C-extension-key", W, "STIX 2.1 common properties: extensions", "extension keys should be extension-definition identifiers"),
    Rule("P-duplicate-key", W, "JSON parsing", "a key appeared more than once; the last value was kept"),
    # Course of Action
    Rule("T1-type", E, "course-of-action: type (required)", "type must be course-of-action"),
    Rule("T1-name-required", E, "course-of-action: name (required)", "name is required and non-empty"),
    Rule("T1-action-reserved", E, "course-of-action: action (reserved)", "the reserved action property must not be used"),
    # Relationships
    Rule("T2-investigates-target", W, "course-of-action relationships: investigates", "investigates should target an indicator"),
    Rule("T2-mitigates-target", W, "course-of-action relationships: mitigates", "mitigates should target attack-pattern, indicator, malware, tool or vulnerability"),
    Rule("T2-remediates-target", W, "course-of-action relationships: remediates", "remediates should target malware or vulnerability"),
    Rule("T2-unresolved-ref", I, "course-of-action relationships", "relationship endpoint not known to the resolver"),
    Rule("R-type-token", E, "relationship: relationship_type", "relationship_type must be a lowercase token"),
    Rule("R-self-reference", E, "relationship: source_ref/target_ref", "source_ref and target_ref must differ"),
    # Extension Definition
    Rule("T3-type", E, "extension-definition: type (required)", "type must be extension-definition"),
    Rule("T3-name-required", E, "extension-definition: name (required)", "name is required"),
    Rule("T3-schema-required", E, "extension-definition: schema (required)", "schema is required"),
    Rule("T3-version-required", E, "extension-definition: version (required)", "version is required"),
    Rule("T3-exttype-required", E, "extension-definition: extension_types (required)", "extension_types must list at least one type"),
    Rule("T3-exttype-enum", E, "extension-definition: extension_types", "extension_types values must come from extension-type-enum"),
    Rule("T3-description", W, "extension-definition: description (optional)", "description should be populated"),
    Rule("T3-semver", W, "extension-definition: version", "version should follow MAJOR.MINOR.PATCH"),
    Rule("T3-extprops-without-toplevel", W, "extension-definition: extension_properties", "extension_properties is only meaningful with toplevel-property-extension"),
    Rule("T3-toplevel-without-extprops", W, "extension-definition: extension_types", "toplevel-property-extension should list extension_properties"),
    Rule("X-unsupported-mechanism", W, "extension mechanisms", "only nested property extensions are supported"),
    Rule("X-foreign-extension", I, "extension mechanisms", "property extension not recognised as a playbook extension; kept as-is"),
    # Playbook extension
    Rule("T4-extension-type", E, "playbook extension: extension_type (required)", "extension_type must be property-extension"),
    Rule("T4-created-required", E, "playbook extension: created (required)", "created is required"),
    Rule("T4-modified-required", E, "playbook extension: modified (required)", "modified is required"),
    Rule("T4-modified-order", E, "playbook extension: modified", "extension modified must not be earlier than extension created"),
    Rule("T4-parent-modified", W, "playbook extension: modified", "a change to the extension must also update the parent's modified"),
    Rule("T4-impact-range", E, "playbook extension: playbook_impact", "playbook_impact must be an integer from 0 to 100"),
    Rule("T4-severity-range", E, "playbook extension: playbook_severity", "playbook_severity must be an integer from 0 to 100"),
    Rule("T4-priority-range", E, "playbook extension: playbook_priority", "playbook_priority must be an integer from 0 to 100"),
    Rule("T4-base64", E, "playbook extension: playbook_base64", "playbook_base64 must be valid base64"),
    Rule("T4-labels-empty", E, "playbook extension: labels", "labels must be non-empty strings"),
    Rule("T4-type-vocab", W, "playbook extension: playbook_type", "playbook_type values should come from the playbook type vocabulary"),
    Rule("T4-abstraction-vocab", W, "playbook extension: playbook_abstraction", "playbook_abstraction should be template or executable"),
    Rule("T4-orgtype-vocab", W, "playbook extension: organization_type", "organization_type values should come from industry-sector-ov"),
    Rule("T4-bin-alias", W, "playbook extension: playbook_bin / playbook_base64", "playbook_bin was read as playbook_base64"),
    Rule("T4-no-playbook", W, "playbook extension: playbook_base64, playbook_id", "extension carries neither an embedded playbook nor a playbook_id"),
    Rule("T4-unknown-property", I, "playbook extension", "property not defined by the playbook extension"),
    Rule("T4-id-correlation", W, "playbook extension: playbook_id", "playbook_id should equal the identifier embedded in the playbook"),
    # Identity
    Rule("I-name-required", E, "identity: name (required)", "name is required"),
    # Bundle linkage
    Rule("B-ext-def-unresolved", W, "bundle linkage", "extension key does not resolve to an extension-definition in the bundle"),
    Rule("B-creator-unresolved", I, "bundle linkage", "created_by_ref does not resolve to an identity in the bundle"),
    Rule("B-duplicate-version", E, "bundle linkage", "the same (id, modified) version appears more than once"),
    Rule("B-opaque-object", I, "bundle", "object type is not modelled; passed through unchanged"),
)

RULES: dict[str, Rule] = {r.rule_id: r for r in _CATALOG}

# rule ids that report a missing referent; they may disappear when the referent is added
LINKAGE_RULES = frozenset({"B-ext-def-unresolved", "B-creator-unresolved", "T2-unresolved-ref"})

RELATIONSHIP_TARGETS: dict[str, frozenset[str]] = {
    "investigates": frozenset({"indicator"}),
    "mitigates": frozenset({"attack-pattern", "indicator", "malware", "tool", "vulnerability"}),
    "remediates": frozenset({"malware", "vulnerability"}),
}

_SEMVER = re.compile(
    r"^(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)"
    r"(?:-[0-9A-Za-z-]+(?:\.[0-9A-Za-z-]+)*)?(?:\+[0-9A-Za-z-]+(?:\.[0-9A-Za-z-]+)*)?$"
)
_OTHER_MECHANISMS = tuple(t for t in EXTENSION_TYPE_ENUM if t != PROPERTY_EXTENSION)


@dataclass(frozen=True)
class ValidationFinding:
    severity: Severity
    rule_id: str
    object_path: str
    message: str

    @property
    def object_id(self) -> str:
        return self.object_path.split("/", 1)[0]

    def to_dict(self) -> dict[str, str]:
        return {
            "severity": self.severity.value,
            "rule_id": self.rule_id,
            "object_path": self.object_path,
            "message": self.message,
        }


def finding(rule_id: str, object_path: str, message: str | None = None) -> ValidationFinding:
    rule = RULES[rule_id]
    return ValidationFinding(rule.severity, rule_id, object_path, message or rule.summary)


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[ValidationFinding, ...] = ()

    def __add__(self, other: ValidationReport) -> ValidationReport:
        return ValidationReport(self.findings + other.findings)

    def _of(self, severity: Severity) -> list[ValidationFinding]:
        return [f for f in self.findings if f.severity is severity]

    @property
    def errors(self) -> list[ValidationFinding]:
        return self._of(Severity.ERROR)

    @property
    def warnings(self) -> list[ValidationFinding]:
        return self._of(Severity.WARNING)

    @property
    def infos(self) -> list[ValidationFinding]:
        return self._of(Severity.INFO)

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(f.severity.value for f in self.findings)
        return {s.value: c.get(s.value, 0) for s in Severity}

    def is_clean(self) -> bool:
        return not self.errors

    def rule_ids(self) -> list[str]:
        return [f.rule_id for f in self.findings]

    def for_object(self, object_id: str) -> ValidationReport:
        return ValidationReport(tuple(f for f in self.findings if f.object_id == object_id))

    def to_dict(self) -> dict[str, Any]:
        return {
            "clean": self.is_clean(),
            "counts": self.counts,
            "findings": [f.to_dict() for f in self.findings],
        }


def rule_catalog() -> list[dict[str, str]]:
    """The rule table in a JSON-friendly form."""
    return [
        {"rule_id": r.rule_id, "severity": r.severity.value, "source": r.source, "summary": r.summary}
        for r in _CATALOG
    ]


@lru_cache(maxsize=1)
def default_vocabularies() -> PlaybookVocabularies:
    return PlaybookVocabularies.load()


# ---------------------------------------------------------------------------
# Object validators
# ---------------------------------------------------------------------------


def _common(obj: Any, out: list[ValidationFinding]) -> None:
    oid = str(obj.id)
    if obj.spec_version != "2.1":
        out.append(finding("C-spec-version", f"{oid}/spec_version",
                           f"spec_version is {obj.spec_version!r}, expected '2.1'"))
    if obj.modified < obj.created:
        out.append(finding("C-modified-order", f"{oid}/modified",
                           f"modified {obj.modified} is earlier than created {obj.created}"))
    for note in obj.notes:
        out.append(finding("P-duplicate-key", oid, note))


def _blank(value: str | None) -> bool:
    return value is None or not value.strip()


def validate_coa(coa: CourseOfAction, vocab: PlaybookVocabularies | None = None) -> ValidationReport:
    """Check a Course of Action and every extension it carries."""
    vocab = vocab or default_vocabularies()
    oid = str(coa.id)
    out: list[ValidationFinding] = []
    if coa.type != "course-of-action":
        out.append(finding("T1-type", f"{oid}/type", f"type is {coa.type!r}"))
    if _blank(coa.name):
        out.append(finding("T1-name-required", f"{oid}/name"))
    if "action" in coa.passthrough:
        out.append(finding("T1-action-reserved", f"{oid}/action"))
    _common(coa, out)

    report = ValidationReport(tuple(out))
    for key, ext in coa.extensions.items():
        path = f"{oid}/extensions/{key}"
        extra: list[ValidationFinding] = []
        try:
            key_ok = parse_identifier(key).object_type == "extension-definition"
        except ValueError:
            key_ok = False
        if not key_ok:
            extra.append(finding("C-extension-key", path, f"extension key {key!r} is not an extension-definition id"))
        if isinstance(ext, OpaqueExtension):
            extra.extend(_opaque_extension(ext, path))
            report += ValidationReport(tuple(extra))
        else:
            report += ValidationReport(tuple(extra)) + validate_extension(ext, coa, vocab, key=key)
    return report


def _opaque_extension(ext: OpaqueExtension, path: str) -> list[ValidationFinding]:
    ext_type = ext.extension_type
    if ext_type in _OTHER_MECHANISMS:
        return [finding("X-unsupported-mechanism", f"{path}/extension_type",
                        f"extension_type {ext_type!r} is not supported; body kept as-is")]
    if ext_type == PROPERTY_EXTENSION:
        return [finding("X-foreign-extension", path)]
    return [finding("T4-extension-type", f"{path}/extension_type",
                    f"extension_type is {ext_type!r}, expected 'property-extension'")]


def _b64_ok(text: str) -> bool:
    try:
        base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        return False
    return True


def validate_extension(
    ext: PlaybookExtension,
    parent: CourseOfAction,
    vocab: PlaybookVocabularies | None = None,
    *,
    key: str | None = None,
) -> ValidationReport:
    """Check one playbook extension body against its parent Course of Action."""
    vocab = vocab or default_vocabularies()
    if key is None:
        key = next((k for k, e in parent.extensions.items() if e is ext), "?")
    base = f"{parent.id}/extensions/{key}"
    out: list[ValidationFinding] = []

    if ext.extension_type != PROPERTY_EXTENSION:
        out.append(finding("T4-extension-type", f"{base}/extension_type",
                           f"extension_type is {ext.extension_type!r}, expected 'property-extension'"))
    if ext.created is None:
        out.append(finding("T4-created-required", f"{base}/created"))
    if ext.modified is None:
        out.append(finding("T4-modified-required", f"{base}/modified"))
    if ext.created is not None and ext.modified is not None and ext.modified < ext.created:
        out.append(finding("T4-modified-order", f"{base}/modified",
                           f"modified {ext.modified} is earlier than created {ext.created}"))
    if ext.modified is not None and ext.modified > parent.modified:
        out.append(finding("T4-parent-modified", f"{base}/modified",
                           f"extension modified {ext.modified} is later than parent modified {parent.modified}"))

    for prop, rule_id in (
        ("playbook_impact", "T4-impact-range"),
        ("playbook_severity", "T4-severity-range"),
        ("playbook_priority", "T4-priority-range"),
    ):
        value = getattr(ext, prop)
        if value is not None and not 0 <= value <= 100:
            out.append(finding(rule_id, f"{base}/{prop}", f"{prop} is {value}, outside 0..100"))

    if ext.playbook_base64 is not None and not _b64_ok(ext.playbook_base64):
        out.append(finding("T4-base64", f"{base}/playbook_base64"))
    for i, label in enumerate(ext.labels or ()):
        if not label:
            out.append(finding("T4-labels-empty", f"{base}/labels/{i}"))

    for i, term in enumerate(ext.playbook_type or ()):
        if term not in vocab.playbook_type_ov:
            out.append(finding("T4-type-vocab", f"{base}/playbook_type/{i}",
                               f"{term!r} is not in the playbook type vocabulary"))
    if ext.playbook_abstraction is not None and ext.playbook_abstraction not in vocab.playbook_abstraction_ov:
        out.append(finding("T4-abstraction-vocab", f"{base}/playbook_abstraction",
                           f"{ext.playbook_abstraction!r} is not template or executable"))
    for i, term in enumerate(ext.organization_type or ()):
        if term not in vocab.industry_sector_ov:
            out.append(finding("T4-orgtype-vocab", f"{base}/organization_type/{i}",
                               f"{term!r} is not in industry-sector-ov"))

    if ext.bin_alias:
        out.append(finding("T4-bin-alias", f"{base}/playbook_bin"))
    if ext.playbook_base64 is None and ext.playbook_id is None:
        out.append(finding("T4-no-playbook", base))
    for prop in ext.extra:
        out.append(finding("T4-unknown-property", f"{base}/{prop}", f"unknown property {prop!r}"))
    return ValidationReport(tuple(out))


def validate_extension_definition(ed: ExtensionDefinition) -> ValidationReport:
    oid = str(ed.id)
    out: list[ValidationFinding] = []
    if ed.type != "extension-definition":
        out.append(finding("T3-type", f"{oid}/type", f"type is {ed.type!r}"))
    if _blank(ed.name):
        out.append(finding("T3-name-required", f"{oid}/name"))
    if _blank(ed.schema):
        out.append(finding("T3-schema-required", f"{oid}/schema"))
    if _blank(ed.version):
        out.append(finding("T3-version-required", f"{oid}/version"))
    elif not _SEMVER.match(ed.version):
        out.append(finding("T3-semver", f"{oid}/version", f"version {ed.version!r} is not MAJOR.MINOR.PATCH"))
    if _blank(ed.description):
        out.append(finding("T3-description", f"{oid}/description"))

    types = ed.extension_types or ()
    if not types:
        out.append(finding("T3-exttype-required", f"{oid}/extension_types"))
    for i, t in enumerate(types):
        if t not in EXTENSION_TYPE_ENUM:
            out.append(finding("T3-exttype-enum", f"{oid}/extension_types/{i}", f"{t!r} is not an extension type"))
        elif t in _OTHER_MECHANISMS:
            out.append(finding("X-unsupported-mechanism", f"{oid}/extension_types/{i}",
                               f"extension type {t!r} is not supported by this toolkit"))
    toplevel = "toplevel-property-extension" in types
    if ed.extension_properties and not toplevel:
        out.append(finding("T3-extprops-without-toplevel", f"{oid}/extension_properties"))
    if toplevel and not ed.extension_properties:
        out.append(finding("T3-toplevel-without-extprops", f"{oid}/extension_types"))
    _common(ed, out)
    return ValidationReport(tuple(out))


def validate_identity(identity: Identity) -> ValidationReport:
    out: list[ValidationFinding] = []
    if _blank(identity.name):
        out.append(finding("I-name-required", f"{identity.id}/name"))
    _common(identity, out)
    return ValidationReport(tuple(out))


Resolver = Callable[[StixIdentifier], Optional[str]]


def validate_relationship(
    rel: Relationship, resolve: Resolver | Mapping[str, str] | None = None
) -> ValidationReport:
    """Check a relationship; Course of Action target rules are advisory.

    ``resolve`` maps an identifier to the type of a known object, or returns
    ``None`` for unknown identifiers, which yields an info finding only.
    """
    if isinstance(resolve, Mapping):
        table = resolve
        resolve = lambda ident: table.get(str(ident))  # noqa: E731
    oid = str(rel.id)
    out: list[ValidationFinding] = []
    if not is_type_token(rel.relationship_type):
        out.append(finding("R-type-token", f"{oid}/relationship_type",
                           f"{rel.relationship_type!r} is not a lowercase token"))
    if rel.source_ref == rel.target_ref:
        out.append(finding("R-self-reference", f"{oid}/target_ref"))

    if resolve is not None:
        for prop in ("source_ref", "target_ref"):
            ref = getattr(rel, prop)
            if resolve(ref) is None:
                out.append(finding("T2-unresolved-ref", f"{oid}/{prop}", f"{ref} is not known"))

    allowed = RELATIONSHIP_TARGETS.get(rel.relationship_type)
    if rel.source_ref.object_type == "course-of-action" and allowed is not None:
        target_type = (resolve(rel.target_ref) if resolve else None) or rel.target_ref.object_type
        if target_type not in allowed:
            out.append(finding(f"T2-{rel.relationship_type}-target", f"{oid}/target_ref",
                               f"{rel.relationship_type} from a course-of-action to {target_type!r}; "
                               f"expected one of {sorted(allowed)}"))
    _common(rel, out)
    return ValidationReport(tuple(out))


def validate_object(
    obj: StixObject,
    vocab: PlaybookVocabularies | None = None,
    resolve: Resolver | Mapping[str, str] | None = None,
) -> ValidationReport:
    if isinstance(obj, CourseOfAction):
        return validate_coa(obj, vocab)
    if isinstance(obj, ExtensionDefinition):
        return validate_extension_definition(obj)
    if isinstance(obj, Identity):
        return validate_identity(obj)
    if isinstance(obj, Relationship):
        return validate_relationship(obj, resolve)
    label = str(obj.id) if obj.id is not None else f"<{obj.type}>"
    out = [finding("B-opaque-object", label, f"type {obj.type!r} passed through unchanged")]
    out.extend(finding("P-duplicate-key", label, n) for n in obj.notes)
    return ValidationReport(tuple(out))


def _object_label(obj: StixObject) -> str:
    ident = obj.id
    return str(ident) if ident is not None else f"<{obj.type}>"


def validate_bundle(
    bundle: Bundle,
    vocab: PlaybookVocabularies | None = None,
    *,
    context: Iterable[StixObject] = (),
) -> ValidationReport:
    """Validate every object plus cross-object linkage within the bundle.

    ``context`` holds objects shipped separately (for instance the extension
    definition published in its own bundle). They satisfy references but are
    not themselves validated.
    """
    vocab = vocab or default_vocabularies()
    types_by_id: dict[str, str] = {}
    for obj in (*context, *bundle.objects):
        if obj.id is not None:
            types_by_id[str(obj.id)] = obj.type

    out: list[ValidationFinding] = [
        finding("P-duplicate-key", str(bundle.id), note) for note in bundle.notes
    ]
    report = ValidationReport(tuple(out))
    seen: set[Any] = set()
    for index, obj in enumerate(bundle.objects):
        report += validate_object(obj, vocab, types_by_id)
        report += ValidationReport(tuple(_linkage(obj, index, types_by_id, seen)))
    return report


def _linkage(
    obj: StixObject, index: int, types_by_id: Mapping[str, str], seen: set[Any]
) -> Iterable[ValidationFinding]:
    label = _object_label(obj)
    key = obj.version_key
    if key is not None:
        if key in seen:
            yield finding("B-duplicate-version", label,
                          f"objects[{index}] repeats version {key.id} @ {key.modified}")
        seen.add(key)
    if isinstance(obj, OpaqueObject):
        return
    creator = obj.created_by_ref
    if creator is not None and types_by_id.get(str(creator)) != "identity":
        yield finding("B-creator-unresolved", f"{label}/created_by_ref", f"{creator} is not in the bundle")
    if isinstance(obj, CourseOfAction):
        for ext_key in obj.extensions:
            if types_by_id.get(ext_key) != "extension-definition":
                yield finding("B-ext-def-unresolved", f"{label}/extensions/{ext_key}",
                              f"{ext_key} is not in the bundle")
