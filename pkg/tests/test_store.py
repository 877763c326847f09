import json
import os

import pytest

from coa_kit.codec import parse_object, semantically_equal, serialize_object
from coa_kit.model import parse_identifier, parse_timestamp
from coa_kit.playbook import PlaybookPayload, embed_playbook
from coa_kit.store import STORE_ENV, NotFound, ObjectStore, StoreError, VersionConflict
from coa_kit.codec import object_from_dict

from conftest import COA_ID, EXT_DEF_ID, IDENTITY_ID, coa_dict


@pytest.fixture
def store(tmp_path):
    return ObjectStore(tmp_path / "s")


def test_put_get_list(store, combined_bundle):
    for obj in combined_bundle.objects:
        store.put(obj)
    keys = [(str(k.id), str(k.modified)) for k in store.list()]
    assert keys == [
        (COA_ID, "2022-08-25T19:14:15.437976Z"),
        (EXT_DEF_ID, "2022-08-25T19:15:25.577633Z"),
        (IDENTITY_ID, "2021-07-02T10:57:28.592252Z"),
    ]
    coa = store.get(parse_identifier(COA_ID))
    assert semantically_equal(coa, combined_bundle.objects[2])


def test_list_order_and_type_filter(store, combined_bundle):
    for obj in combined_bundle.objects:
        store.put(obj)
    types = [k.id.object_type for k in store.list()]
    assert types == sorted(types)
    assert [str(k.id) for k in store.list("identity")] == [IDENTITY_ID]
    assert store.list("indicator") == []
    assert store.list("../etc") == []


def test_empty_store(store):
    assert store.list() == []
    with pytest.raises(NotFound):
        store.get(parse_identifier(COA_ID))


def test_idempotent_put(store, coa):
    store.put(coa)
    store.put(parse_object(serialize_object(coa)))
    files = list((store.root / "course-of-action").rglob("*"))
    assert [p.name for p in files if p.is_file()] == ["2022-08-25T19_14_15.437976Z.json"]


def test_conflict(store, coa):
    store.put(coa)
    d = coa_dict()
    d["name"] = "different"
    with pytest.raises(VersionConflict):
        store.put(parse_object(json.dumps(d)))


def test_same_instant_different_text(store):
    d = coa_dict()
    del d["extensions"]
    store.put(parse_object(json.dumps(dict(d, modified="2022-08-25T19:14:15.5Z"))))
    # the stored text is part of the body, so a re-spelled instant conflicts
    with pytest.raises(VersionConflict):
        store.put(parse_object(json.dumps(dict(d, modified="2022-08-25T19:14:15.500Z"))))
    assert len(store.list()) == 1


def test_versions(store, coa):
    store.put(coa)
    newer = embed_playbook(coa, PlaybookPayload(b"v2"), EXT_DEF_ID,
                           now=parse_timestamp("2023-01-01T00:00:00Z"))
    store.put(newer)
    ident = parse_identifier(COA_ID)
    assert store.get(ident).modified == newer.modified
    assert semantically_equal(store.get(ident, coa.modified), coa)
    with pytest.raises(NotFound):
        store.get(ident, parse_timestamp("2019-01-01T00:00:00Z"))
    assert [k.modified for k in store.list()] == [coa.modified, newer.modified]


def test_ordering_by_instant_not_text(store):
    d = coa_dict()
    del d["extensions"]
    stamps = ["2022-08-25T19:14:15.5Z", "2022-08-25T19:14:15.437977Z", "2022-08-25T19:14:16Z"]
    for s in stamps:
        store.put(parse_object(json.dumps(dict(d, modified=s))))
    got = [str(k.modified) for k in store.list()]
    assert got == [stamps[1], stamps[0], stamps[2]]


def test_no_temp_files_left(store, combined_bundle):
    for obj in combined_bundle.objects:
        store.put(obj)
    leftovers = [n for _, _, names in os.walk(store.root) for n in names if not n.endswith(".json")]
    assert leftovers == []


def test_opaque_without_id_rejected(store):
    obj = object_from_dict({"type": "x-widget"})
    with pytest.raises(StoreError):
        store.put(obj)


def test_env_root(monkeypatch, tmp_path, coa):
    monkeypatch.setenv(STORE_ENV, str(tmp_path / "env"))
    store = ObjectStore()
    store.put(coa)
    assert (tmp_path / "env" / "course-of-action").is_dir()


def test_stored_bytes_are_canonical(store, coa):
    store.put(coa)
    path = next((store.root / "course-of-action").rglob("*.json"))
    assert path.read_bytes() == serialize_object(coa)
