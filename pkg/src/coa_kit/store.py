"""Filesystem repository of STIX objects keyed by ``(id, modified)``.

Layout: ``{root}/{object_type}/{uuid}/{modified}.json`` where ``modified`` is
the timestamp text with ``:`` replaced by ``_``. Files are written to a
temporary name and renamed into place, so readers never see partial content.
"""

from __future__ import annotations

import os
import tempfile
import threading
from collections import defaultdict
from pathlib import Path

from coa_kit.codec import object_from_dict, load_json, semantically_equal, serialize_object
from coa_kit.model import (
    CoaKitError,
    MalformedTimestamp,
    StixIdentifier,
    StixObject,
    StixTimestamp,
    VersionKey,
    is_type_token,
    parse_timestamp,
)

STORE_ENV = "COA_KIT_STORE"
DEFAULT_ROOT = "coa-store"


class StoreError(CoaKitError):
    pass


class VersionConflict(StoreError):
    pass


class NotFound(StoreError, LookupError):
    pass


class IoFailure(StoreError, OSError):
    pass


def default_root() -> Path:
    return Path(os.environ.get(STORE_ENV) or DEFAULT_ROOT)


def _filename(modified: StixTimestamp) -> str:
    return modified.text.replace(":", "_") + ".json"


def _modified_from_filename(name: str) -> StixTimestamp | None:
    if not name.endswith(".json"):
        return None
    try:
        return parse_timestamp(name[: -len(".json")].replace("_", ":"))
    except MalformedTimestamp:
        return None


class ObjectStore:
    """Versioned object storage rooted at a directory.

    Writes to the same object id are serialised within a process; across
    processes only the atomic rename is relied upon.
    """

    def __init__(self, root: str | os.PathLike[str] | None = None) -> None:
        self.root = Path(root) if root is not None else default_root()
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def _lock(self, ident: StixIdentifier) -> threading.Lock:
        with self._locks_guard:
            return self._locks[str(ident)]

    def _dir(self, ident: StixIdentifier) -> Path:
        return self.root / ident.object_type / ident.uuid

    def _versions(self, ident: StixIdentifier) -> list[tuple[StixTimestamp, Path]]:
        directory = self._dir(ident)
        try:
            names = os.listdir(directory)
        except FileNotFoundError:
            return []
        except OSError as exc:
            raise IoFailure(f"cannot list {directory}: {exc}") from exc
        found = []
        for name in names:
            stamp = _modified_from_filename(name)
            if stamp is not None:
                found.append((stamp, directory / name))
        found.sort(key=lambda item: item[0].instant)
        return found

    def _read(self, path: Path) -> StixObject:
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc
        return object_from_dict(load_json(data))

    def put(self, obj: StixObject) -> VersionKey:
        """Persist one object version; identical re-puts are no-ops."""
        key = obj.version_key
        if key is None:
            raise StoreError(f"{obj.type} object lacks a valid id and modified timestamp")
        with self._lock(key.id):
            for stamp, path in self._versions(key.id):
                if stamp == key.modified:
                    if semantically_equal(self._read(path), obj):
                        return VersionKey(key.id, stamp)
                    raise VersionConflict(
                        f"{key.id} @ {key.modified} already stored with a different body"
                    )
            directory = self._dir(key.id)
            target = directory / _filename(key.modified)
            try:
                directory.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
                try:
                    with os.fdopen(fd, "wb") as fh:
                        fh.write(serialize_object(obj))
                        fh.flush()
                        os.fsync(fh.fileno())
                    os.replace(tmp, target)
                except BaseException:
                    if os.path.exists(tmp):
                        os.unlink(tmp)
                    raise
            except OSError as exc:
                raise IoFailure(f"cannot write {target}: {exc}") from exc
        return key

    def get(self, ident: StixIdentifier, modified: StixTimestamp | None = None) -> StixObject:
        """Return the named version, or the latest one when ``modified`` is None."""
        versions = self._versions(ident)
        if not versions:
            raise NotFound(f"{ident} is not in the store")
        if modified is None:
            return self._read(versions[-1][1])
        for stamp, path in versions:
            if stamp == modified:
                return self._read(path)
        raise NotFound(f"{ident} has no version modified at {modified}")

    def list(self, object_type: str | None = None) -> list[VersionKey]:
        """All stored version keys ordered by type, uuid, then modified."""
        if object_type is not None:
            types = [object_type] if is_type_token(object_type) else []
        else:
            try:
                types = sorted(p.name for p in self.root.iterdir() if p.is_dir())
            except FileNotFoundError:
                return []
            except OSError as exc:
                raise IoFailure(f"cannot list {self.root}: {exc}") from exc
        keys: list[VersionKey] = []
        for t in sorted(types):
            type_dir = self.root / t
            if not type_dir.is_dir():
                continue
            for uuid_dir in sorted(type_dir.iterdir(), key=lambda p: p.name):
                try:
                    ident = StixIdentifier(t, uuid_dir.name)
                except ValueError:
                    continue
                keys.extend(VersionKey(ident, stamp) for stamp, _ in self._versions(ident))
        return keys
