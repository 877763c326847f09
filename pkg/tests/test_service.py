import json
import threading
import urllib.error
import urllib.request
from contextlib import contextmanager

import pytest

from coa_kit.codec import parse_bundle
from coa_kit.service import ACCEPT_ALL, PlaybookService, ServiceConfig, ingest, make_server
from coa_kit.store import ObjectStore

from conftest import COA_ID, GOLDEN, combined_with


@contextmanager
def running(tmp_path, **config):
    server = make_server(ServiceConfig(port=0, store_root=str(tmp_path / "store"), **config))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        host, port = server.server_address[:2]
        yield f"http://{host}:{port}"
    finally:
        server.shutdown()
        server.server_close()


def request(url, data=None, headers=None, method=None):
    req = urllib.request.Request(url, data=data, headers=headers or {}, method=method)
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


COMBINED = (GOLDEN / "combined_bundle.json").read_bytes()


def test_post_get_list(tmp_path):
    with running(tmp_path) as base:
        status, body = request(base + "/objects", COMBINED)
        assert status == 200 and body["stored"] == 3 and body["rejected"] == 0
        assert {r["code"] for r in body["results"]} == {201}

        status, obj = request(f"{base}/objects/{COA_ID}")
        assert status == 200
        assert obj["extensions"]
        assert "U2VjdXJpdHkgUGxheWJvb2s=" in json.dumps(obj)

        status, keys = request(base + "/objects")
        assert status == 200 and len(keys) == 3
        status, keys = request(base + "/objects?type=course-of-action")
        assert keys == [{"id": COA_ID, "modified": "2022-08-25T19:14:15.437976Z"}]

        status, obj = request(f"{base}/objects/{COA_ID}?modified=2022-08-25T19:14:15.437976Z")
        assert status == 200 and obj["id"] == COA_ID

        # re-posting identical content is idempotent
        status, body = request(base + "/objects", COMBINED)
        assert status == 200 and body["stored"] == 3


def test_errors(tmp_path):
    with running(tmp_path) as base:
        assert request(f"{base}/objects/{COA_ID}")[0] == 404
        assert request(f"{base}/objects/not-an-id")[0] == 400
        assert request(f"{base}/objects/{COA_ID}?modified=yesterday")[0] == 400
        assert request(base + "/objects", b"{")[0] == 400
        assert request(base + "/objects", b'{"type": "bundle"}')[0] == 400
        assert request(base + "/nowhere")[0] == 404
        assert request(base + "/objects", method="DELETE")[0] == 405


def test_reject_on_error(tmp_path):
    data = json.dumps(combined_with(playbook_impact=101)).encode()
    with running(tmp_path) as base:
        status, body = request(base + "/objects", data)
        assert status == 200
        by_type = {r["type"]: r for r in body["results"]}
        assert by_type["course-of-action"]["code"] == 422
        assert by_type["course-of-action"]["findings"][0]["rule_id"] == "T4-impact-range"
        assert body["stored"] == 2
        assert request(f"{base}/objects/{COA_ID}")[0] == 404


def test_accept_all(tmp_path):
    data = json.dumps(combined_with(playbook_impact=101)).encode()
    with running(tmp_path, policy=ACCEPT_ALL) as base:
        status, body = request(base + "/objects", data)
        assert body["stored"] == 3
        coa = next(r for r in body["results"] if r["type"] == "course-of-action")
        assert coa["code"] == 201 and coa["findings"]


def test_token(tmp_path):
    with running(tmp_path, token="s3cret") as base:
        assert request(base + "/objects", COMBINED)[0] == 401
        assert request(base + "/objects", COMBINED, {"Authorization": "Bearer nope"})[0] == 401
        assert request(base + "/objects", COMBINED, {"Authorization": "Bearer s3cret"})[0] == 200
        # reads stay open
        assert request(f"{base}/objects/{COA_ID}")[0] == 200


def test_conflict(tmp_path):
    changed = json.loads(COMBINED)
    for o in changed["objects"]:
        o["description"] = "changed"
    with running(tmp_path) as base:
        request(base + "/objects", COMBINED)
        status, body = request(base + "/objects", json.dumps(changed).encode())
        assert status == 409
        assert {r["code"] for r in body["results"]} == {409}


def test_ingest_partial_conflict_is_200(tmp_path, combined_bundle):
    store = ObjectStore(tmp_path)
    store.put(combined_bundle.objects[1])
    d = json.loads(COMBINED)
    d["objects"][1]["name"] = "changed"
    status, body = ingest(store, parse_bundle(json.dumps(d)))
    assert status == 200 and body["stored"] == 2 and body["rejected"] == 1


def test_handle_without_network(tmp_path):
    svc = PlaybookService(ServiceConfig(store_root=str(tmp_path)))
    assert svc.handle("POST", "/objects", {}, COMBINED)[0] == 200
    status, keys = svc.handle("GET", "/objects/", {})
    assert status == 200 and len(keys) == 3


def test_config_file(tmp_path):
    path = tmp_path / "svc.json"
    path.write_text(json.dumps({"port": 9999, "policy": "accept-all"}))
    cfg = ServiceConfig.from_file(str(path), port=1234)
    assert cfg.port == 1234 and cfg.policy == "accept-all"
    path.write_text(json.dumps({"prot": 1}))
    with pytest.raises(ValueError):
        ServiceConfig.from_file(str(path))
    with pytest.raises(ValueError):
        ServiceConfig(policy="maybe")
