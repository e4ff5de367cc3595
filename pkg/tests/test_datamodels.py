"""Schema registry and entity validation: rule kinds, reports, batches."""

import json

import pytest

from citykit.datamodels import (
    DataModelSchema,
    Rule,
    SchemaError,
    SchemaRegistry,
    bundled_registry,
    validate_batch,
    validate_entity,
)
from citykit.ngsi import Attribute, make_entity

PARKING_SCHEMA = {
    "entityType": "OnStreetParking",
    "requiredAttributes": ["totalSpotNumber", "availableSpotNumber"],
    "attributeRules": {
        "totalSpotNumber": {"expectedValueType": "Number", "numericRange": [0, None]},
        "availableSpotNumber": {"expectedValueType": "Number", "numericRange": [0, None]},
        "status": {"expectedValueType": "Text", "enumValues": ["open", "closed"]},
        "zoneCode": {"expectedValueType": "Text", "pattern": "^[A-Z]{2}[0-9]+$"},
    },
    "lessOrEqual": [["availableSpotNumber", "totalSpotNumber"]],
}


@pytest.fixture
def registry():
    reg = SchemaRegistry()
    reg.load_schema(PARKING_SCHEMA)
    return reg


def parking(**overrides):
    attrs = {"totalSpotNumber": 40, "availableSpotNumber": 12}
    attrs.update(overrides)
    return make_entity("lot-1", "OnStreetParking", **attrs)


def kinds(report):
    return [v.ruleKind for v in report.violations]


def test_clean_entity_has_no_violations(registry):
    report = validate_entity(parking(status="open", zoneCode="AB12"), registry)
    assert report.valid
    assert report.violations == []


def test_unknown_entity_type(registry):
    report = validate_entity(make_entity("x-1", "Mystery", a=1), registry)
    assert kinds(report) == ["unknown-entity-type"]
    assert report.violations[0].attributeName == ""


def test_missing_required(registry):
    entity = make_entity("lot-1", "OnStreetParking", totalSpotNumber=40)
    report = validate_entity(entity, registry)
    assert kinds(report) == ["missing-required"]
    assert report.violations[0].attributeName == "availableSpotNumber"


def test_wrong_type_suppresses_downstream_checks(registry):
    report = validate_entity(parking(availableSpotNumber="lots"), registry)
    assert kinds(report) == ["wrong-type"]


def test_wrong_type_on_mismatched_tag(registry):
    entity = parking(status=Attribute(3, "Text"))
    assert kinds(validate_entity(entity, registry)) == ["wrong-type"]


def test_out_of_range_low_and_high(registry):
    assert kinds(validate_entity(parking(availableSpotNumber=-1), registry)) \
        == ["out-of-range"]
    reg = SchemaRegistry()
    reg.load_schema({
        "entityType": "T",
        "attributeRules": {"pct": {"expectedValueType": "Number",
                                   "numericRange": [0, 1]}},
    })
    assert kinds(validate_entity(make_entity("t", "T", pct=1.5), reg)) \
        == ["out-of-range"]


def test_less_or_equal_pair(registry):
    report = validate_entity(parking(availableSpotNumber=50), registry)
    assert kinds(report) == ["out-of-range"]
    assert "totalSpotNumber" in report.violations[0].message


def test_not_in_enum(registry):
    assert kinds(validate_entity(parking(status="ajar"), registry)) == ["not-in-enum"]


def test_pattern_mismatch(registry):
    assert kinds(validate_entity(parking(zoneCode="12AB"), registry)) \
        == ["pattern-mismatch"]


def test_unlisted_attributes_pass_untouched(registry):
    report = validate_entity(parking(comment="anything goes", weird=[1, 2]), registry)
    assert report.valid


def test_multiple_violations_accumulate(registry):
    entity = make_entity("lot-1", "OnStreetParking",
                         availableSpotNumber=-3, status="ajar")
    report = validate_entity(entity, registry)
    assert sorted(kinds(report)) == ["missing-required", "not-in-enum", "out-of-range"]


def test_report_document_shape(registry):
    doc = validate_entity(parking(status="ajar"), registry).to_doc()
    assert doc["entityId"] == "lot-1"
    assert doc["violations"][0]["ruleKind"] == "not-in-enum"
    assert set(doc["violations"][0]) == {"attributeName", "ruleKind", "message"}


class TestSchemaParsing:
    def test_from_json_text(self):
        schema = DataModelSchema.from_doc(json.dumps(PARKING_SCHEMA))
        assert schema.entityType == "OnStreetParking"
        assert schema.attributeRules["status"].enumValues == frozenset({"open", "closed"})

    def test_rejects_required_without_rule(self):
        with pytest.raises(SchemaError):
            DataModelSchema.from_doc({"entityType": "T",
                                      "requiredAttributes": ["ghost"]})

    def test_rejects_enum_and_pattern_together(self):
        with pytest.raises(SchemaError):
            Rule("Text", enumValues=frozenset({"a"}), pattern="a")

    def test_rejects_inverted_range_and_bad_pattern(self):
        with pytest.raises(SchemaError):
            Rule("Number", numericRange=(5, 1))
        with pytest.raises(SchemaError):
            Rule.from_doc("x", {"expectedValueType": "Text", "pattern": "("})

    def test_rejects_malformed_documents(self):
        with pytest.raises(SchemaError):
            DataModelSchema.from_doc("not json")
        with pytest.raises(SchemaError):
            DataModelSchema.from_doc({"attributeRules": {}})
        with pytest.raises(SchemaError):
            DataModelSchema.from_doc({"entityType": "T",
                                      "attributeRules": {"a": {}}})


def test_registry_load_dir(tmp_path):
    (tmp_path / "parking.json").write_text(json.dumps(PARKING_SCHEMA))
    (tmp_path / "sensor.json").write_text(json.dumps({
        "entityType": "Sensor",
        "attributeRules": {"level": {"expectedValueType": "Number"}},
    }))
    (tmp_path / "notes.txt").write_text("ignored")
    registry = SchemaRegistry()
    assert registry.load_dir(tmp_path) == 2
    assert registry.types() == ["OnStreetParking", "Sensor"]


def test_registry_reload_replaces_schema(registry):
    relaxed = dict(PARKING_SCHEMA, requiredAttributes=[])
    registry.load_schema(relaxed)
    entity = make_entity("lot-1", "OnStreetParking")
    assert validate_entity(entity, registry).valid


def test_bundled_registry_covers_the_city_types():
    registry = bundled_registry()
    expected = {
        "OnStreetParking", "ParkingSpot", "TrafficFlowObserved",
        "NoiseLevelObserved", "ArrivalEstimation", "GtfsAgency", "GtfsStop",
        "GtfsRoute", "GtfsTrip", "GtfsStopTime", "GtfsService",
        "GtfsTransitFeedFile",
    }
    assert expected <= set(registry.types())


def test_validate_batch_counts_and_sink(registry):
    entities = [
        parking(),
        parking(availableSpotNumber=-1),
        make_entity("x", "Mystery"),
        parking(status="ajar"),
    ]
    reports = []
    summary = validate_batch(entities, registry, report_sink=reports.append)
    assert summary == {
        "total": 4,
        "valid": 1,
        "invalid": 3,
        "perKindCounts": {"not-in-enum": 1, "out-of-range": 1,
                          "unknown-entity-type": 1},
    }
    assert len(reports) == 4
    assert reports[0]["violations"] == []
