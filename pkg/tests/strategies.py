"""Hypothesis strategies for valid playbook-bearing objects."""

from __future__ import annotations

import uuid
from datetime import datetime, timedelta, timezone

from hypothesis import strategies as st

from coa_kit.model import PLAYBOOK_TYPE_OV, PLAYBOOK_ABSTRACTION_OV

EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)

uuids = st.builds(lambda n: str(uuid.UUID(int=n, version=4)), st.integers(0, 2**128 - 1))


def identifiers(object_type: str):
    return uuids.map(lambda u: f"{object_type}--{u}")


@st.composite
def timestamps(draw, start: datetime = EPOCH):
    offset = draw(st.integers(0, 30 * 365 * 24 * 3600 * 10**6))
    instant = start + timedelta(microseconds=offset)
    digits = draw(st.sampled_from([0, 3, 6]))
    text = instant.strftime("%Y-%m-%dT%H:%M:%S")
    if digits:
        text += "." + f"{instant.microsecond:06d}"[:digits]
    return text + "Z"


text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40
).filter(lambda s: s.strip())
scores = st.integers(0, 100)

OPTIONAL_FIELDS = {
    "playbook_id": uuids,
    "playbook_creator": identifiers("identity"),
    "revoked": st.booleans(),
    "labels": st.lists(text, max_size=4),
    "description": text,
    "playbook_valid_from": timestamps(),
    "playbook_valid_until": timestamps(),
    "playbook_creation_time": timestamps(),
    "playbook_modification_time": timestamps(),
    "playbook_impact": scores,
    "playbook_severity": scores,
    "playbook_priority": scores,
    "organization_type": st.lists(st.sampled_from(["energy", "healthcare", "retail"]), max_size=3),
    "playbook_type": st.lists(st.sampled_from(PLAYBOOK_TYPE_OV), max_size=4, unique=True),
    "playbook_standard": st.sampled_from(["cacao", "bpmn", "ansible"]),
    "playbook_abstraction": st.sampled_from(PLAYBOOK_ABSTRACTION_OV),
}


@st.composite
def extension_bodies(draw, payload: bytes | None = None):
    """A valid extension body dict (payload supplied separately as base64 text)."""
    import base64

    created = draw(timestamps())
    body = {"extension_type": "property-extension", "created": created, "modified": created}
    chosen = draw(st.sets(st.sampled_from(sorted(OPTIONAL_FIELDS))))
    for name in sorted(chosen, key=list(OPTIONAL_FIELDS).index):
        body[name] = draw(OPTIONAL_FIELDS[name])
    if payload is not None:
        body["playbook_base64"] = base64.b64encode(payload).decode()
    return body


@st.composite
def coa_dicts(draw, max_payload: int = 1024):
    payload = draw(st.binary(max_size=max_payload))
    body = draw(extension_bodies(payload))
    ext_key = draw(identifiers("extension-definition"))
    return {
        "type": "course-of-action",
        "spec_version": "2.1",
        "id": draw(identifiers("course-of-action")),
        "created": body["created"],
        "modified": body["modified"],
        "name": draw(text),
        "extensions": {ext_key: body},
    }, payload, ext_key
