from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from coa_kit.codec import parse_bundle  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"
GOLDEN_FILES = ("coa_bundle.json", "extension_definition_bundle.json", "combined_bundle.json")

COA_ID = "course-of-action--e06259ad-a154-4e23-bc0a-e229ccb3456f"
EXT_DEF_ID = "extension-definition--1e1c1bd7-c527-4215-8e18-e199e74da57c"
IDENTITY_ID = "identity--ae82a5e5-ec07-4863-ad88-6504b29f24e9"


@pytest.fixture
def golden_bytes():
    return {name: (GOLDEN / name).read_bytes() for name in GOLDEN_FILES}


@pytest.fixture
def combined_bundle():
    return parse_bundle((GOLDEN / "combined_bundle.json").read_bytes())


@pytest.fixture
def coa_bundle():
    return parse_bundle((GOLDEN / "coa_bundle.json").read_bytes())


@pytest.fixture
def ed_bundle():
    return parse_bundle((GOLDEN / "extension_definition_bundle.json").read_bytes())


@pytest.fixture
def coa(coa_bundle):
    return coa_bundle.objects[0]


@pytest.fixture
def combined_dict():
    return json.loads((GOLDEN / "combined_bundle.json").read_bytes())


def coa_dict() -> dict:
    return json.loads((GOLDEN / "coa_bundle.json").read_bytes())["objects"][0]


def bare_coa_dict() -> dict:
    d = coa_dict()
    del d["extensions"]
    return d


def combined_with(**ext_changes) -> dict:
    """Combined bundle with the playbook extension body patched; None deletes a key."""
    data = json.loads((GOLDEN / "combined_bundle.json").read_bytes())
    ext = data["objects"][2]["extensions"][EXT_DEF_ID]
    for key, value in ext_changes.items():
        if value is None:
            ext.pop(key, None)
        else:
            ext[key] = value
    return data
