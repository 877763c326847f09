"""Embedding, extracting and describing playbook payloads.

Payloads are opaque bytes carried as padded standard base64. The only
format-aware code here is a shallow read of a CACAO document's top-level
metadata; workflows, commands and signatures are never interpreted.
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass, fields, replace
from typing import Any

from coa_kit.model import (
    CoaKitError,
    CourseOfAction,
    MalformedTimestamp,
    PROPERTY_EXTENSION,
    PlaybookExtension,
    StixIdentifier,
    StixTimestamp,
    parse_identifier,
    parse_timestamp,
)
from coa_kit.validate import ValidationFinding, finding


class InvalidExtensionDefinitionId(CoaKitError, ValueError):
    pass


class NoSuchExtension(CoaKitError, LookupError):
    pass


class NoEmbeddedPlaybook(CoaKitError, LookupError):
    pass


class BadBase64(CoaKitError, ValueError):
    pass


class NotJsonObject(CoaKitError, ValueError):
    pass


@dataclass(frozen=True)
class PlaybookPayload:
    data: bytes
    declared_standard: str | None = None


# Keys of PlaybookExtension a metadata fragment may set.
_FRAGMENT_FIELDS = frozenset(
    f.name for f in fields(PlaybookExtension)
) - {"extension_type", "created", "modified", "playbook_base64", "extra", "bin_alias", "notes"}


def encode_payload(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def decode_payload(text: str) -> bytes:
    """Strict padded standard base64 decoding; whitespace is not tolerated."""
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise BadBase64(f"playbook_base64 is not valid base64: {exc}") from None


def _key(ext_def_id: StixIdentifier | str) -> str:
    ident = ext_def_id
    if isinstance(ident, str):
        try:
            ident = parse_identifier(ident)
        except ValueError as exc:
            raise InvalidExtensionDefinitionId(str(exc)) from None
    if ident.object_type != "extension-definition":
        raise InvalidExtensionDefinitionId(f"{ident} is not an extension-definition id")
    return str(ident)


def embed_playbook(
    coa: CourseOfAction,
    payload: PlaybookPayload,
    ext_def_id: StixIdentifier | str,
    meta: dict[str, Any] | None = None,
    *,
    now: StixTimestamp | None = None,
) -> CourseOfAction:
    """Return a copy of ``coa`` carrying ``payload`` in its playbook extension.

    An existing extension keeps its ``created``; ``modified`` of both the
    extension and the parent is set to one common instant that is strictly
    later than either previous value, so the result is a new object version.
    ``meta`` is a fragment of extension fields (see
    :func:`derive_metadata_from_cacao`) applied before the payload.
    """
    key = _key(ext_def_id)
    meta = dict(meta or {})
    unknown = set(meta) - _FRAGMENT_FIELDS
    if unknown:
        raise ValueError(f"not playbook metadata fields: {sorted(unknown)}")

    existing = coa.extensions.get(key)
    stamp = now or StixTimestamp.now()
    candidates = [stamp, coa.modified.plus_microsecond()]
    if isinstance(existing, PlaybookExtension):
        base = existing
        if existing.modified is not None:
            candidates.append(existing.modified.plus_microsecond())
    else:
        base = PlaybookExtension()
    stamp = max(candidates)
    created = base.created if base.created is not None else stamp

    if payload.declared_standard is not None:
        meta["playbook_standard"] = payload.declared_standard
    ext = replace(
        base,
        **meta,
        extension_type=PROPERTY_EXTENSION,
        created=created,
        modified=stamp,
        playbook_base64=encode_payload(payload.data),
        bin_alias=False,
        notes=(),
    )
    extensions = dict(coa.extensions)
    extensions[key] = ext
    return replace(coa, extensions=extensions, modified=stamp)


def _extension(coa: CourseOfAction, ext_def_id: StixIdentifier | str) -> PlaybookExtension:
    key = str(ext_def_id)
    ext = coa.extensions.get(key)
    if not isinstance(ext, PlaybookExtension):
        raise NoSuchExtension(f"{coa.id} has no playbook extension under {key}")
    return ext


def extract_playbook(coa: CourseOfAction, ext_def_id: StixIdentifier | str) -> PlaybookPayload:
    ext = _extension(coa, ext_def_id)
    if ext.playbook_base64 is None:
        raise NoEmbeddedPlaybook(f"{coa.id}: extension {ext_def_id} has no playbook_base64")
    return PlaybookPayload(decode_payload(ext.playbook_base64), ext.playbook_standard)


def _cacao_document(data: bytes) -> dict[str, Any]:
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError):
        raise NotJsonObject("playbook payload is not JSON") from None
    if not isinstance(doc, dict):
        raise NotJsonObject("playbook payload is JSON but not an object")
    return doc


def _timestamp_or_none(value: Any) -> StixTimestamp | None:
    try:
        return parse_timestamp(value)
    except MalformedTimestamp:
        return None


def _string_list(value: Any) -> tuple[str, ...] | None:
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return tuple(value)
    return None


def derive_metadata_from_cacao(payload: PlaybookPayload) -> dict[str, Any]:
    """Read top-level metadata from a CACAO JSON playbook.

    Only ``id``, ``created``, ``modified``, ``description``, ``labels`` and
    ``playbook_types`` are consulted. Fields that are absent or of the wrong
    JSON type are left out rather than guessed.
    """
    doc = _cacao_document(payload.data)
    meta: dict[str, Any] = {}
    if isinstance(doc.get("id"), str):
        meta["playbook_id"] = doc["id"]
    created = _timestamp_or_none(doc.get("created"))
    if created is not None:
        meta["playbook_creation_time"] = created
    modified = _timestamp_or_none(doc.get("modified"))
    if modified is not None:
        meta["playbook_modification_time"] = modified
    if isinstance(doc.get("description"), str):
        meta["description"] = doc["description"]
    labels = _string_list(doc.get("labels"))
    if labels is not None:
        meta["labels"] = labels
    types = _string_list(doc.get("playbook_types"))
    if types is not None:
        meta["playbook_type"] = tuple(t.lower() for t in types)
    return meta


def correlate_playbook_id(
    coa: CourseOfAction, ext_def_id: StixIdentifier | str
) -> list[ValidationFinding]:
    """Warn when ``playbook_id`` differs from the id embedded in the payload."""
    ext = _extension(coa, ext_def_id)
    if ext.playbook_id is None or ext.playbook_base64 is None:
        return []
    try:
        doc = _cacao_document(decode_payload(ext.playbook_base64))
    except (BadBase64, NotJsonObject):
        return []
    embedded = doc.get("id")
    if not isinstance(embedded, str) or embedded == ext.playbook_id:
        return []
    return [
        finding(
            "T4-id-correlation",
            f"{coa.id}/extensions/{ext_def_id}/playbook_id",
            f"playbook_id {ext.playbook_id!r} differs from embedded id {embedded!r}",
        )
    ]
