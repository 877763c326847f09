"""``coa-kit`` command line interface.

Exit codes: 0 clean, 1 warnings only (with ``--strict``), 2 errors,
3 usage or I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Any, Sequence

from coa_kit.codec import (
    JsonSyntaxError,
    StructureError,
    dumps,
    iter_objects,
    parse_document,
    serialize_bundle,
    serialize_object,
    to_wire,
)
from coa_kit.model import (
    Bundle,
    CoaKitError,
    CourseOfAction,
    ExtensionDefinition,
    ExternalReference,
    PLAYBOOK_EXTENSION_DEFINITION_ID,
    PlaybookExtension,
    StixIdentifier,
    StixTimestamp,
    parse_identifier,
    parse_timestamp,
)
from coa_kit.playbook import (
    BadBase64,
    NoEmbeddedPlaybook,
    NoSuchExtension,
    NotJsonObject,
    PlaybookPayload,
    correlate_playbook_id,
    decode_payload,
    derive_metadata_from_cacao,
    embed_playbook,
    extract_playbook,
)
from coa_kit.service import POLICIES, REJECT_ON_ERROR, ServiceConfig, serve
from coa_kit.store import NotFound, ObjectStore, StoreError
from coa_kit.validate import (
    ValidationReport,
    rule_catalog,
    validate_bundle,
    validate_coa,
    validate_object,
)

EXIT_CLEAN = 0
EXIT_WARNINGS = 1
EXIT_ERRORS = 2
EXIT_FAILURE = 3

DEFAULT_EXTENSION_NAME = "Course of Action extension for Security Playbooks"
DEFAULT_EXTENSION_DESCRIPTION = (
    "Extends the Course of Action SDO with properties for describing, "
    "embedding and sharing machine-readable security playbooks."
)


class UsageError(Exception):
    """Bad invocation or unusable input; maps to exit code 3."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, f"{self.prog}: error: {message}\n")


def exit_code(report: ValidationReport, strict: bool = False) -> int:
    if report.errors:
        return EXIT_ERRORS
    if strict and report.warnings:
        return EXIT_WARNINGS
    return EXIT_CLEAN


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _read_bytes(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load(path: str) -> Any:
    try:
        return parse_document(_read_bytes(path))
    except (JsonSyntaxError, StructureError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _write(path: str | None, data: bytes) -> None:
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        return
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def _identifier(text: str, expected_type: str | None = None) -> StixIdentifier:
    try:
        ident = parse_identifier(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if expected_type and ident.object_type != expected_type:
        raise UsageError(f"{text} is not a {expected_type} identifier")
    return ident


def _single_coa(doc: Any, path: str) -> CourseOfAction:
    coas = [o for o in iter_objects(doc) if isinstance(o, CourseOfAction)]
    if len(coas) != 1:
        raise UsageError(f"{path}: expected exactly one course-of-action, found {len(coas)}")
    return coas[0]


def _replace_coa(doc: Any, new: CourseOfAction) -> bytes:
    if isinstance(doc, Bundle):
        objects = tuple(new if o.id == new.id and isinstance(o, CourseOfAction) else o
                        for o in doc.objects)
        return serialize_bundle(Bundle(doc.id, objects, passthrough=doc.passthrough))
    return serialize_object(new)


def _print_report(report: ValidationReport, fmt: str, source: str) -> None:
    if fmt == "json":
        print(json.dumps({"source": source, **report.to_dict()}, indent=2))
        return
    for f in report.findings:
        print(f"{f.severity.value:<7} {f.rule_id:<28} {f.object_path}: {f.message}")
    c = report.counts
    print(f"{source}: {c['error']} error(s), {c['warning']} warning(s), {c['info']} info")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    doc = _load(args.path)
    context = []
    for extra in args.context or ():
        context.extend(iter_objects(_load(extra)))
    if isinstance(doc, Bundle):
        report = validate_bundle(doc, context=context)
    else:
        report = validate_object(doc)
    _print_report(report, args.format, args.path)
    return exit_code(report, args.strict)


def cmd_embed(args: argparse.Namespace) -> int:
    ext_def = _identifier(args.ext_def, "extension-definition")
    doc = _load(args.coa_path)
    coa = _single_coa(doc, args.coa_path)
    payload = PlaybookPayload(_read_bytes(args.playbook_path), args.standard)
    meta = {}
    if args.cacao_meta:
        try:
            meta = derive_metadata_from_cacao(payload)
        except NotJsonObject as exc:
            raise UsageError(f"{args.playbook_path}: {exc}") from None
    if args.creator:
        meta["playbook_creator"] = _identifier(args.creator, "identity")
    updated = embed_playbook(coa, payload, ext_def, meta)
    report = validate_coa(updated)
    _write(args.out, _replace_coa(doc, updated))
    if not report.is_clean():
        _print_report(report, "text", args.coa_path)
        return EXIT_ERRORS
    return EXIT_CLEAN


def cmd_extract(args: argparse.Namespace) -> int:
    doc = _load(args.coa_path)
    coa = _single_coa(doc, args.coa_path)
    try:
        payload = extract_playbook(coa, _identifier(args.ext_def, "extension-definition"))
    except (NoSuchExtension, NoEmbeddedPlaybook, BadBase64) as exc:
        raise UsageError(str(exc)) from None
    _write(args.out, payload.data)
    return EXIT_CLEAN


def cmd_derive_cacao_meta(args: argparse.Namespace) -> int:
    try:
        meta = derive_metadata_from_cacao(PlaybookPayload(_read_bytes(args.playbook_path)))
    except NotJsonObject as exc:
        raise UsageError(f"{args.playbook_path}: {exc}") from None
    wire = {k: (str(v) if isinstance(v, StixTimestamp) else list(v) if isinstance(v, tuple) else v)
            for k, v in meta.items()}
    print(json.dumps(wire, indent=2, ensure_ascii=False))
    return EXIT_CLEAN


def cmd_init_extension_definition(args: argparse.Namespace) -> int:
    now = StixTimestamp.now()
    creator = _identifier(args.creator_id, "identity") if args.creator_id else None
    ed = ExtensionDefinition(
        id=StixIdentifier.generate("extension-definition"),
        created=now,
        modified=now,
        name=args.name,
        description=args.description,
        schema=args.schema_url,
        version=args.version,
        extension_types=("property-extension",),
        created_by_ref=creator,
        external_references=(
            (ExternalReference(source_name="documentation", url=args.documentation_url),)
            if args.documentation_url else None
        ),
    )
    _write(args.out, serialize_bundle(Bundle.wrap([ed])))
    return EXIT_CLEAN


def _summarize_extension(coa: CourseOfAction, key: str, ext: PlaybookExtension) -> list[str]:
    lines = [f"  {coa.id} [{key}]"]
    rows = [
        ("standard", ext.playbook_standard),
        ("abstraction", ext.playbook_abstraction),
        ("types", ", ".join(ext.playbook_type) if ext.playbook_type else None),
        ("impact", ext.playbook_impact),
        ("severity", ext.playbook_severity),
        ("priority", ext.playbook_priority),
    ]
    for label, value in rows:
        lines.append(f"    {label:<12} {'-' if value is None else value}")
    if ext.playbook_base64 is None:
        lines.append("    payload      none")
    else:
        try:
            size = len(decode_payload(ext.playbook_base64))
        except BadBase64:
            lines.append("    payload      undecodable base64")
        else:
            lines.append(f"    payload: {size} bytes, standard: {ext.playbook_standard or '-'}")
            mismatch = correlate_playbook_id(coa, key)
            if mismatch:
                lines.append(f"    id check     {mismatch[0].message}")
    return lines


def cmd_inspect(args: argparse.Namespace) -> int:
    doc = _load(args.path)
    objects = iter_objects(doc)
    counts = Counter(o.type for o in objects)
    print(", ".join(f"{t}: {n}" for t, n in counts.items()) if counts else "no objects")
    lines: list[str] = []
    for obj in objects:
        if isinstance(obj, CourseOfAction):
            for key, ext in obj.extensions.items():
                if isinstance(ext, PlaybookExtension):
                    lines.extend(_summarize_extension(obj, key, ext))
    if lines:
        print("playbooks:")
        print("\n".join(lines))
    return EXIT_CLEAN


def _store(args: argparse.Namespace) -> ObjectStore:
    return ObjectStore(args.root)


def cmd_store_put(args: argparse.Namespace) -> int:
    store = _store(args)
    doc = _load(args.path)
    for obj in iter_objects(doc):
        try:
            key = store.put(obj)
        except StoreError as exc:
            raise UsageError(str(exc)) from None
        print(f"{key.id} {key.modified}")
    return EXIT_CLEAN


def cmd_store_get(args: argparse.Namespace) -> int:
    ident = _identifier(args.id)
    modified = None
    if args.modified:
        try:
            modified = parse_timestamp(args.modified)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        obj = _store(args).get(ident, modified)
    except NotFound as exc:
        raise UsageError(str(exc)) from None
    _write(args.out, dumps(to_wire(obj)))
    return EXIT_CLEAN


def cmd_store_list(args: argparse.Namespace) -> int:
    keys = _store(args).list(args.type)
    if args.format == "json":
        print(json.dumps([k.to_dict() for k in keys], indent=2))
    else:
        for k in keys:
            print(f"{k.id} {k.modified}")
    return EXIT_CLEAN


def cmd_serve(args: argparse.Namespace) -> int:
    overrides = dict(host=args.host, port=args.port, store_root=args.root,
                     policy=args.policy, token=args.token)
    try:
        if args.config:
            config = ServiceConfig.from_file(args.config, **overrides)
        else:
            config = ServiceConfig(**{k: v for k, v in overrides.items() if v is not None})
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad service configuration: {exc}") from None
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    serve(config)
    return EXIT_CLEAN


def cmd_rules(args: argparse.Namespace) -> int:
    catalog = rule_catalog()
    if args.format == "json":
        print(json.dumps(catalog, indent=2))
    else:
        for r in catalog:
            print(f"{r['rule_id']:<30} {r['severity']:<8} {r['source']}")
    return EXIT_CLEAN


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coa-kit", description="STIX 2.1 Course of Action playbook toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    default_ext = str(PLAYBOOK_EXTENSION_DEFINITION_ID)

    p = sub.add_parser("validate", help="validate a bundle or object")
    p.add_argument("path")
    p.add_argument("--strict", action="store_true", help="exit 1 when only warnings are found")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--context", action="append", metavar="PATH",
                   help="file with separately shipped objects used to resolve references")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("embed", help="embed a playbook file into a course-of-action")
    p.add_argument("coa_path")
    p.add_argument("playbook_path")
    p.add_argument("--standard", help="playbook_standard value, e.g. cacao")
    p.add_argument("--ext-def", default=default_ext, help="extension-definition id")
    p.add_argument("--creator", help="identity id for playbook_creator")
    p.add_argument("--cacao-meta", action="store_true", help="copy top-level CACAO metadata")
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="write the embedded playbook bytes")
    p.add_argument("coa_path")
    p.add_argument("--ext-def", default=default_ext)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("derive-cacao-meta", help="print metadata read from a CACAO playbook")
    p.add_argument("playbook_path")
    p.set_defaults(func=cmd_derive_cacao_meta)

    p = sub.add_parser("init-extension-definition", help="write a new extension definition bundle")
    p.add_argument("--name", default=DEFAULT_EXTENSION_NAME)
    p.add_argument("--description", default=DEFAULT_EXTENSION_DESCRIPTION)
    p.add_argument("--schema-url", required=True)
    p.add_argument("--version", default="1.0.0")
    p.add_argument("--creator-id")
    p.add_argument("--documentation-url")
    p.add_argument("--out")
    p.set_defaults(func=cmd_init_extension_definition)

    p = sub.add_parser("inspect", help="summarize objects and embedded playbooks")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    store = sub.add_parser("store", help="filesystem object store")
    store_sub = store.add_subparsers(dest="store_command", required=True, parser_class=_Parser)
    root_help = "store root (default: $COA_KIT_STORE or ./coa-store)"
    p = store_sub.add_parser("put")
    p.add_argument("path")
    p.add_argument("--root", help=root_help)
    p.set_defaults(func=cmd_store_put)
    p = store_sub.add_parser("get")
    p.add_argument("id")
    p.add_argument("--modified")
    p.add_argument("--root", help=root_help)
    p.add_argument("--out")
    p.set_defaults(func=cmd_store_get)
    p = store_sub.add_parser("list")
    p.add_argument("--type")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--root", help=root_help)
    p.set_defaults(func=cmd_store_list)

    p = sub.add_parser("serve", help="run the HTTP sharing service")
    p.add_argument("--config", help="JSON file with host, port, store_root, policy, token")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--root", help=root_help)
    p.add_argument("--policy", choices=POLICIES, help=f"default {REJECT_ON_ERROR}")
    p.add_argument("--token", help="require this bearer token on POST")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("rules", help="print the validation rule catalog")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_rules)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, usage errors exit 3; return rather than exit
        return exc.code if isinstance(exc.code, int) else EXIT_FAILURE
    try:
        return args.func(args)
    except (UsageError, CoaKitError) as exc:
        print(f"coa-kit: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
