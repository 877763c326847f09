from datetime import datetime, timezone

import pytest

from coa_kit.model import (
    EXTENSION_TYPE_ENUM,
    CourseOfAction,
    MalformedIdentifier,
    MalformedTimestamp,
    PlaybookVocabularies,
    StixIdentifier,
    StixTimestamp,
    load_industry_sectors,
    parse_identifier,
    parse_timestamp,
)


class TestParseIdentifier:
    def test_golden_example(self):
        ident = parse_identifier("course-of-action--e06259ad-a154-4e23-bc0a-e229ccb3456f")
        assert ident.object_type == "course-of-action"
        assert ident.uuid == "e06259ad-a154-4e23-bc0a-e229ccb3456f"
        assert str(ident) == "course-of-action--e06259ad-a154-4e23-bc0a-e229ccb3456f"

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "course-of-action--not-a-uuid",
            "course-of-action-e06259ad-a154-4e23-bc0a-e229ccb3456f",
            "Course-Of-Action--e06259ad-a154-4e23-bc0a-e229ccb3456f",
            "--e06259ad-a154-4e23-bc0a-e229ccb3456f",
            "1abc--e06259ad-a154-4e23-bc0a-e229ccb3456f",
            "course-of-action--e06259ad-a154-4e23-bc0a-e229ccb3456",
            "course-of-action--e06259ada1544e23bc0ae229ccb3456f",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(MalformedIdentifier):
            parse_identifier(text)

    def test_non_string(self):
        with pytest.raises(MalformedIdentifier):
            parse_identifier(None)

    def test_uppercase_uuid_is_lowercased(self):
        text = "identity--AE82A5E5-EC07-4863-AD88-6504B29F24E9"
        assert str(parse_identifier(text)) == text.lower()

    def test_non_v4_uuid_accepted(self):
        ident = parse_identifier("identity--6ba7b810-9dad-11d1-80b4-00c04fd430c8")
        assert ident.uuid.startswith("6ba7b810")

    def test_generate_is_v4(self):
        import uuid

        ident = StixIdentifier.generate("course-of-action")
        assert uuid.UUID(ident.uuid).version == 4
        assert parse_identifier(str(ident)) == ident


class TestParseTimestamp:
    def test_golden_modified(self):
        ts = parse_timestamp("2022-08-25T19:14:15.437976Z")
        assert ts.instant == datetime(2022, 8, 25, 19, 14, 15, 437976, tzinfo=timezone.utc)
        assert str(ts) == "2022-08-25T19:14:15.437976Z"

    def test_golden_valid_from_is_midnight(self):
        ts = parse_timestamp("2022-03-18T00:00:00.000000Z")
        assert ts.instant == datetime(2022, 3, 18, tzinfo=timezone.utc)

    @pytest.mark.parametrize(
        "text",
        [
            "2022-08-25 19:14:15",
            "2022-08-25T19:14:15",
            "2022-08-25T19:14:15+00:00",
            "2022-08-25T19:14:15.1234567Z",
            "2022-13-25T19:14:15Z",
            "2022-02-30T00:00:00Z",
            "2022-08-25T24:00:00Z",
            "",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(MalformedTimestamp):
            parse_timestamp(text)

    def test_text_preserved_and_equal_instants_compare_equal(self):
        a = parse_timestamp("2022-01-01T00:00:00Z")
        b = parse_timestamp("2022-01-01T00:00:00.000Z")
        assert a == b and hash(a) == hash(b)
        assert a.text != b.text

    def test_fraction_scaling(self):
        assert parse_timestamp("2022-01-01T00:00:00.5Z").instant.microsecond == 500000

    def test_ordering(self):
        assert parse_timestamp("2022-01-01T00:00:00.5Z") > parse_timestamp("2022-01-01T00:00:00Z")

    def test_now_has_six_digits(self):
        text = StixTimestamp.now().text
        assert len(text.split(".")[1]) == len("123456Z")
        assert parse_timestamp(text).text == text


class TestVocabularies:
    def test_playbook_types(self):
        vocab = PlaybookVocabularies()
        assert vocab.playbook_type_ov == (
            "notification", "detection", "investigation", "prevention", "mitigation",
            "remediation", "analysis", "containment", "eradication", "recovery", "attack",
        )

    def test_abstraction(self):
        assert PlaybookVocabularies().playbook_abstraction_ov == ("template", "executable")

    def test_industry_sectors_loaded(self):
        sectors = load_industry_sectors()
        assert "financial-services" in sectors and "healthcare" in sectors
        assert len(sectors) == len(set(sectors))

    def test_industry_sectors_custom_file(self, tmp_path):
        path = tmp_path / "sectors.json"
        path.write_text('["space", "space", "oceans"]')
        assert PlaybookVocabularies.load(str(path)).industry_sector_ov == ("space", "oceans")

    def test_bad_sector_file(self, tmp_path):
        path = tmp_path / "sectors.json"
        path.write_text('{"a": 1}')
        with pytest.raises(ValueError):
            load_industry_sectors(str(path))

    def test_extension_type_enum(self):
        assert set(EXTENSION_TYPE_ENUM) == {
            "new-sdo", "new-sco", "new-sro", "property-extension", "toplevel-property-extension"
        }


def test_coa_id_must_match_type():
    ts = parse_timestamp("2022-01-01T00:00:00Z")
    with pytest.raises(MalformedIdentifier):
        CourseOfAction(id=parse_identifier("identity--ae82a5e5-ec07-4863-ad88-6504b29f24e9"),
                       created=ts, modified=ts, name="x")
