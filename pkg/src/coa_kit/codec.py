"""JSON wire format <-> domain objects.

Parsing is lossless: properties the model does not know about are kept in
``passthrough``/``extra``/``raw`` and written back on serialization. Semantic
problems are left for :mod:`coa_kit.validate`; only structural problems
(wrong JSON types, malformed identifiers or timestamps, missing ``type``/``id``)
raise here.
"""

from __future__ import annotations

import json
from dataclasses import fields, replace
from typing import Any, Iterable, Mapping

from coa_kit.model import (
    Bundle,
    CoaKitError,
    CourseOfAction,
    EXTENSION_TYPE_ENUM,
    Extension,
    ExtensionDefinition,
    ExternalReference,
    Identity,
    MalformedIdentifier,
    MalformedTimestamp,
    OpaqueExtension,
    OpaqueObject,
    PLAYBOOK_EXTENSION_DEFINITION_ID,
    PROPERTY_EXTENSION,
    PlaybookExtension,
    Relationship,
    StixIdentifier,
    StixObject,
    StixTimestamp,
    parse_identifier,
    parse_timestamp,
)


class JsonSyntaxError(CoaKitError, ValueError):
    """Input is not well-formed JSON."""


class StructureError(CoaKitError, ValueError):
    """Input is JSON but does not have the shape of a STIX object or bundle."""


# ---------------------------------------------------------------------------
# JSON loading
# ---------------------------------------------------------------------------


class _JsonObject(dict):
    """dict that remembers which keys appeared more than once."""

    duplicates: tuple[str, ...] = ()


def _pairs_hook(pairs: list[tuple[str, Any]]) -> _JsonObject:
    obj = _JsonObject()
    dupes = []
    for key, value in pairs:
        if key in obj:
            dupes.append(key)
        obj[key] = value
    if dupes:
        obj.duplicates = tuple(dupes)
    return obj


def _reject_constant(name: str) -> Any:
    raise JsonSyntaxError(f"non-standard JSON constant {name}")


def load_json(text: bytes | str) -> Any:
    try:
        return json.loads(text, object_pairs_hook=_pairs_hook, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise JsonSyntaxError(str(exc)) from None
    except UnicodeDecodeError as exc:
        raise JsonSyntaxError(f"input is not UTF-8: {exc}") from None
    except RecursionError:
        raise JsonSyntaxError("JSON nesting too deep") from None


def _duplicate_notes(value: Any, path: str = "") -> list[str]:
    notes = []
    if isinstance(value, dict):
        for key in getattr(value, "duplicates", ()):
            notes.append(f"duplicate key {key!r} at {path or '/'} (last value kept)")
        for key, child in value.items():
            notes.extend(_duplicate_notes(child, f"{path}/{key}"))
    elif isinstance(value, list):
        for i, child in enumerate(value):
            notes.extend(_duplicate_notes(child, f"{path}/{i}"))
    return notes


# ---------------------------------------------------------------------------
# Field readers
# ---------------------------------------------------------------------------


class _Reader:
    """Pulls typed values out of a JSON object and tracks which keys were used."""

    def __init__(self, data: Mapping[str, Any], where: str) -> None:
        self.data = data
        self.where = where
        self.used: set[str] = set()

    def _get(self, key: str, required: bool) -> Any:
        self.used.add(key)
        if key not in self.data:
            if required:
                raise StructureError(f"{self.where}: missing required property {key!r}")
            return None
        return self.data[key]

    def _fail(self, key: str, expected: str) -> StructureError:
        got = type(self.data[key]).__name__
        return StructureError(f"{self.where}/{key}: expected {expected}, got {got}")

    def string(self, key: str, required: bool = False) -> str | None:
        value = self._get(key, required)
        if value is not None and not isinstance(value, str):
            raise self._fail(key, "string")
        return value

    def integer(self, key: str) -> int | None:
        value = self._get(key, False)
        # bool is an int subclass; floats are never truncated
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            raise self._fail(key, "integer")
        return value

    def boolean(self, key: str) -> bool | None:
        value = self._get(key, False)
        if value is not None and not isinstance(value, bool):
            raise self._fail(key, "boolean")
        return value

    def identifier(self, key: str, required: bool = False) -> StixIdentifier | None:
        value = self.string(key, required)
        if value is None:
            return None
        try:
            return parse_identifier(value)
        except MalformedIdentifier as exc:
            raise StructureError(f"{self.where}/{key}: {exc}") from None

    def timestamp(self, key: str, required: bool = False) -> StixTimestamp | None:
        value = self.string(key, required)
        if value is None:
            return None
        try:
            return parse_timestamp(value)
        except MalformedTimestamp as exc:
            raise StructureError(f"{self.where}/{key}: {exc}") from None

    def strings(self, key: str) -> tuple[str, ...] | None:
        value = self._get(key, False)
        if value is None:
            return None
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise self._fail(key, "list of strings")
        return tuple(value)

    def objects(self, key: str) -> list[Mapping[str, Any]] | None:
        value = self._get(key, False)
        if value is None:
            return None
        if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
            raise self._fail(key, "list of objects")
        return value

    def rest(self) -> dict[str, Any]:
        return {k: v for k, v in self.data.items() if k not in self.used}


def _common(r: _Reader, expected_type: str) -> dict[str, Any]:
    r.string("type", required=True)
    ident = r.identifier("id", required=True)
    if ident.object_type != expected_type:
        raise StructureError(f"{r.where}/id: {ident} is not a {expected_type} identifier")
    return {
        "id": ident,
        "spec_version": r.string("spec_version"),
        "created_by_ref": r.identifier("created_by_ref"),
        "created": r.timestamp("created", required=True),
        "modified": r.timestamp("modified", required=True),
    }


# ---------------------------------------------------------------------------
# Per-type parsers
# ---------------------------------------------------------------------------

_OTHER_MECHANISMS = frozenset(EXTENSION_TYPE_ENUM) - {PROPERTY_EXTENSION}
_TIMESTAMP_FIELDS = (
    "created",
    "modified",
    "playbook_valid_from",
    "playbook_valid_until",
    "playbook_creation_time",
    "playbook_modification_time",
)


def _looks_like_playbook(key: str, body: Mapping[str, Any]) -> bool:
    if body.get("extension_type") in _OTHER_MECHANISMS:
        return False
    if key == str(PLAYBOOK_EXTENSION_DEFINITION_ID):
        return True
    return any(k.startswith("playbook_") for k in body)


def _parse_playbook_extension(body: Mapping[str, Any], where: str) -> PlaybookExtension:
    r = _Reader(body, where)
    values: dict[str, Any] = {}
    values["extension_type"] = r.string("extension_type")
    values["playbook_id"] = r.string("playbook_id")
    for name in _TIMESTAMP_FIELDS:
        values[name] = r.timestamp(name)
    values["playbook_creator"] = r.identifier("playbook_creator")
    values["revoked"] = r.boolean("revoked")
    values["labels"] = r.strings("labels")
    values["description"] = r.string("description")
    for name in ("playbook_impact", "playbook_severity", "playbook_priority"):
        values[name] = r.integer(name)
    values["organization_type"] = r.strings("organization_type")
    values["playbook_type"] = r.strings("playbook_type")
    values["playbook_standard"] = r.string("playbook_standard")
    values["playbook_abstraction"] = r.string("playbook_abstraction")

    notes = []
    payload = r.string("playbook_base64")
    alias = r.string("playbook_bin")
    bin_alias = alias is not None
    if bin_alias:
        if payload is None:
            payload = alias
            notes.append("playbook_bin read as playbook_base64")
        else:
            notes.append("playbook_bin ignored; playbook_base64 also present")
    values["playbook_base64"] = payload
    return PlaybookExtension(**values, extra=r.rest(), bin_alias=bin_alias, notes=tuple(notes))


def _parse_extensions(r: _Reader) -> dict[str, Extension]:
    raw = r._get("extensions", False)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise r._fail("extensions", "object")
    out: dict[str, Extension] = {}
    for key, body in raw.items():
        where = f"{r.where}/extensions/{key}"
        if not isinstance(body, dict):
            raise StructureError(f"{where}: extension body must be an object")
        if _looks_like_playbook(key, body):
            out[key] = _parse_playbook_extension(body, where)
        else:
            out[key] = OpaqueExtension(body)
    return out


def _parse_course_of_action(data: Mapping[str, Any], where: str) -> CourseOfAction:
    r = _Reader(data, where)
    common = _common(r, "course-of-action")
    return CourseOfAction(
        **common,
        name=r.string("name"),
        description=r.string("description"),
        extensions=_parse_extensions(r),
        passthrough=r.rest(),
    )


def _parse_external_reference(data: Mapping[str, Any], where: str) -> ExternalReference:
    r = _Reader(data, where)
    return ExternalReference(
        source_name=r.string("source_name", required=True),
        description=r.string("description"),
        url=r.string("url"),
        extra=r.rest(),
    )


def _parse_extension_definition(data: Mapping[str, Any], where: str) -> ExtensionDefinition:
    r = _Reader(data, where)
    common = _common(r, "extension-definition")
    refs = r.objects("external_references")
    return ExtensionDefinition(
        **common,
        name=r.string("name"),
        description=r.string("description"),
        schema=r.string("schema"),
        version=r.string("version"),
        extension_types=r.strings("extension_types"),
        extension_properties=r.strings("extension_properties"),
        external_references=None if refs is None else tuple(
            _parse_external_reference(ref, f"{where}/external_references/{i}")
            for i, ref in enumerate(refs)
        ),
        passthrough=r.rest(),
    )


def _parse_identity(data: Mapping[str, Any], where: str) -> Identity:
    r = _Reader(data, where)
    common = _common(r, "identity")
    return Identity(
        **common,
        name=r.string("name"),
        description=r.string("description"),
        identity_class=r.string("identity_class"),
        contact_information=r.string("contact_information"),
        passthrough=r.rest(),
    )


def _parse_relationship(data: Mapping[str, Any], where: str) -> Relationship:
    r = _Reader(data, where)
    common = _common(r, "relationship")
    return Relationship(
        **common,
        relationship_type=r.string("relationship_type", required=True),
        description=r.string("description"),
        source_ref=r.identifier("source_ref", required=True),
        target_ref=r.identifier("target_ref", required=True),
        passthrough=r.rest(),
    )


_PARSERS = {
    "course-of-action": _parse_course_of_action,
    "extension-definition": _parse_extension_definition,
    "identity": _parse_identity,
    "relationship": _parse_relationship,
}


def object_from_dict(data: Any, where: str = "") -> StixObject:
    """Dispatch one decoded JSON object to its typed parser."""
    if not isinstance(data, dict):
        raise StructureError(f"{where or '/'}: expected a JSON object")
    obj_type = data.get("type")
    if not isinstance(obj_type, str):
        raise StructureError(f"{where or '/'}: missing or non-string 'type'")
    notes = tuple(_duplicate_notes(data))
    parser = _PARSERS.get(obj_type)
    if parser is None:
        return OpaqueObject(obj_type, data, notes=notes)
    label = data.get("id") if isinstance(data.get("id"), str) else where or obj_type
    obj = parser(data, label)
    return replace(obj, notes=notes) if notes else obj


def bundle_from_dict(data: Any) -> Bundle:
    if not isinstance(data, dict):
        raise StructureError("bundle must be a JSON object")
    if data.get("type") != "bundle":
        raise StructureError("missing or wrong 'type' (expected 'bundle')")
    r = _Reader(data, "bundle")
    ident = r.identifier("id", required=True)
    if ident.object_type != "bundle":
        raise StructureError(f"bundle id {ident} is not a bundle identifier")
    r.used.add("type")
    raw_objects = r._get("objects", True)
    if not isinstance(raw_objects, list):
        raise r._fail("objects", "list")
    objects = tuple(object_from_dict(o, f"objects/{i}") for i, o in enumerate(raw_objects))
    dupes = getattr(data, "duplicates", ())
    return Bundle(
        ident,
        objects,
        passthrough=r.rest(),
        notes=tuple(f"duplicate key {k!r} at bundle level (last value kept)" for k in dupes),
    )


def parse_bundle(text: bytes | str) -> Bundle:
    """Parse a STIX bundle; unknown object types become :class:`OpaqueObject`."""
    return bundle_from_dict(load_json(text))


def parse_object(text: bytes | str) -> StixObject:
    """Parse a single STIX object (not a bundle)."""
    return object_from_dict(load_json(text))


def parse_document(text: bytes | str) -> Bundle | StixObject:
    """Parse either a bundle or a single object, whichever the text holds."""
    data = load_json(text)
    if isinstance(data, dict) and data.get("type") == "bundle":
        return bundle_from_dict(data)
    return object_from_dict(data)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _plain(value: Any) -> Any:
    if isinstance(value, (StixTimestamp, StixIdentifier)):
        return str(value)
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _put(out: dict[str, Any], key: str, value: Any) -> None:
    if value is not None:
        out[key] = _plain(value)


def extension_to_wire(ext: Extension) -> dict[str, Any]:
    if isinstance(ext, OpaqueExtension):
        return dict(ext.body)
    out: dict[str, Any] = {}
    for f in fields(ext):
        if f.name in ("extra", "bin_alias", "notes"):
            continue
        _put(out, f.name, getattr(ext, f.name))
    for key, value in ext.extra.items():
        out.setdefault(key, value)
    return out


def _common_wire(obj: Any) -> dict[str, Any]:
    out: dict[str, Any] = {"type": obj.type}
    _put(out, "spec_version", obj.spec_version)
    out["id"] = str(obj.id)
    _put(out, "created_by_ref", obj.created_by_ref)
    out["created"] = str(obj.created)
    out["modified"] = str(obj.modified)
    return out


def _finish(out: dict[str, Any], passthrough: Mapping[str, Any]) -> dict[str, Any]:
    for key, value in passthrough.items():
        out.setdefault(key, value)
    return out


def to_wire(obj: Bundle | StixObject) -> dict[str, Any]:
    """Convert a domain object to its JSON-ready dict."""
    if isinstance(obj, Bundle):
        out = {"type": "bundle", "id": str(obj.id), "objects": [to_wire(o) for o in obj.objects]}
        return _finish(out, obj.passthrough)
    if isinstance(obj, OpaqueObject):
        return dict(obj.raw)
    out = _common_wire(obj)
    if isinstance(obj, CourseOfAction):
        _put(out, "name", obj.name)
        _put(out, "description", obj.description)
        if obj.extensions:
            out["extensions"] = {k: extension_to_wire(e) for k, e in obj.extensions.items()}
    elif isinstance(obj, ExtensionDefinition):
        _put(out, "name", obj.name)
        _put(out, "description", obj.description)
        _put(out, "schema", obj.schema)
        _put(out, "version", obj.version)
        _put(out, "extension_types", obj.extension_types)
        _put(out, "extension_properties", obj.extension_properties)
        if obj.external_references is not None:
            out["external_references"] = [_external_ref_wire(r) for r in obj.external_references]
    elif isinstance(obj, Identity):
        _put(out, "name", obj.name)
        _put(out, "description", obj.description)
        _put(out, "identity_class", obj.identity_class)
        _put(out, "contact_information", obj.contact_information)
    elif isinstance(obj, Relationship):
        out["relationship_type"] = obj.relationship_type
        _put(out, "description", obj.description)
        out["source_ref"] = str(obj.source_ref)
        out["target_ref"] = str(obj.target_ref)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return _finish(out, obj.passthrough)


def _external_ref_wire(ref: ExternalReference) -> dict[str, Any]:
    out: dict[str, Any] = {"source_name": ref.source_name}
    _put(out, "description", ref.description)
    _put(out, "url", ref.url)
    return _finish(out, ref.extra)


def dumps(data: Any) -> bytes:
    return (json.dumps(data, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def serialize_bundle(bundle: Bundle) -> bytes:
    return dumps(to_wire(bundle))


def serialize_object(obj: StixObject) -> bytes:
    return dumps(to_wire(obj))


def semantically_equal(a: Bundle | StixObject, b: Bundle | StixObject) -> bool:
    """Equality of wire forms: key order ignored, timestamp texts compared exactly."""
    return to_wire(a) == to_wire(b)


def iter_objects(doc: Bundle | StixObject | Iterable[StixObject]) -> list[StixObject]:
    if isinstance(doc, Bundle):
        return list(doc.objects)
    if isinstance(doc, (CourseOfAction, ExtensionDefinition, Identity, Relationship, OpaqueObject)):
        return [doc]
    return list(doc)
