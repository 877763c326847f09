"""Create, validate, store and share STIX 2.1 Course of Action objects that
carry security playbooks in a nested property extension."""

from coa_kit.codec import (
    JsonSyntaxError,
    StructureError,
    parse_bundle,
    parse_document,
    parse_object,
    semantically_equal,
    serialize_bundle,
    serialize_object,
)
from coa_kit.model import (
    PLAYBOOK_EXTENSION_DEFINITION_ID,
    Bundle,
    CoaKitError,
    CourseOfAction,
    ExtensionDefinition,
    Identity,
    OpaqueObject,
    PlaybookExtension,
    PlaybookVocabularies,
    Relationship,
    StixIdentifier,
    StixTimestamp,
    VersionKey,
    parse_identifier,
    parse_timestamp,
)
from coa_kit.playbook import (
    PlaybookPayload,
    correlate_playbook_id,
    derive_metadata_from_cacao,
    embed_playbook,
    extract_playbook,
)
from coa_kit.store import ObjectStore
from coa_kit.validate import (
    ValidationFinding,
    ValidationReport,
    validate_bundle,
    validate_coa,
    validate_extension,
    validate_extension_definition,
    validate_relationship,
)

__version__ = "0.1.0"
