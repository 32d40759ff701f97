import json
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfmalware.exceptions import DuplicateSampleId, ReportParseError, SchemeError, UnparsableLabel
from pfmalware.labeling import (
    VendorLabels,
    build_ground_truth,
    extract_family,
    get_scheme,
    load_reports,
    load_schemes,
    parse_schemes,
)


def _golden_rows():
    text = resources.files("pfmalware.schemes").joinpath("examples.tsv").read_text(encoding="utf-8")
    return [tuple(line.split("\t")) for line in text.splitlines() if line and not line.startswith("#")]


def _report(sha, vendor=None, result=None, detected=True, **extra):
    scans = {} if vendor is None else {vendor: {"detected": detected, "result": result}}
    return {"sha256": sha, "scans": scans, **extra}


def test_load_reports_microsoft_cerber():
    doc = json.dumps([_report("ab12", "Microsoft", "Ransom:Win32/Cerber.a")])
    (rep,) = load_reports(doc)
    assert rep.detections == {"Microsoft": "Ransom:Win32/Cerber.a"}


def test_undetected_vendor_omitted():
    doc = json.dumps([{"sha256": "ab", "scans": {
        "Microsoft": {"detected": False, "result": None},
        "Kaspersky": {"detected": True, "result": None},
        "McAfee": {"detected": True, "result": "Artemis!0123"}}}])
    (rep,) = load_reports(doc)
    assert rep.detections == {"McAfee": "Artemis!0123"}


def test_malformed_document_reports_position():
    with pytest.raises(ReportParseError) as info:
        load_reports('[\n  {"sha256": "a",\n   "scans": }\n]')
    assert info.value.line == 3


def test_duplicate_sample_id():
    doc = json.dumps([_report("AB"), _report("ab")])
    with pytest.raises(DuplicateSampleId):
        load_reports(doc)


def test_first_seen_year_kept():
    (rep,) = load_reports(json.dumps([_report("ab", first_seen_year=2017)]))
    assert rep.first_seen_year == 2017


def test_vendors_outside_configured_set_dropped():
    (rep,) = load_reports(json.dumps([_report("ab", "SomeAV", "Trojan.X")]))
    assert rep.detections == {}


@pytest.mark.parametrize("vendor,detection,family", _golden_rows())
def test_golden_table(vendor, detection, family):
    assert extract_family(get_scheme(vendor), detection) == family


def test_golden_table_covers_every_vendor():
    assert {r[0] for r in _golden_rows()} == set(load_schemes())


def test_microsoft_garbage_is_unparsable():
    with pytest.raises(UnparsableLabel):
        extract_family(get_scheme("Microsoft"), "garbage")


def test_empty_detection_is_unparsable():
    with pytest.raises(UnparsableLabel):
        extract_family(get_scheme("McAfee"), "   ")


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(_golden_rows()), st.lists(st.booleans(), min_size=80, max_size=80))
def test_extract_family_ignores_input_case(row, flips):
    vendor, detection, family = row
    mixed = "".join(c.upper() if f else c.lower() for c, f in zip(detection, flips))
    assert extract_family(get_scheme(vendor), mixed) == family


def test_ground_truth_counts():
    reports = [VendorLabels("a", {"Microsoft": "Ransom:Win32/Cerber.a"}),
               VendorLabels("b", {"Microsoft": "RANSOM:WIN32/CERBER.B"}),
               VendorLabels("c", {"Microsoft": "garbage"})]
    truth = build_ground_truth(reports, get_scheme("Microsoft"))
    assert truth.families == {"a": "Cerber", "b": "Cerber"}
    assert len(truth.dropped) == 1
    assert "unparsable=1" in truth.summary()


def test_ground_truth_empty():
    truth = build_ground_truth([], get_scheme("Microsoft"))
    assert truth.families == {} and truth.dropped == {}


def test_ground_truth_partitions_input():
    reports = [VendorLabels(str(i), {"Kaspersky": d} if d else {})
               for i, d in enumerate(["Trojan.Win32.Foo.a", None, "bad", "HEUR:Trojan.Win32.Bar"])]
    truth = build_ground_truth(reports, get_scheme("kaspersky"))
    assert len(truth.families) + len(truth.dropped) == len(reports)
    assert truth.dropped["1"] == "undetected"


def test_custom_scheme_file():
    schemes = parse_schemes("[Acme]\nrules =\n    2 ^(\\w+)-(\\w+)\n")
    assert extract_family(schemes["Acme"], "worm-bigfoot") == "Bigfoot"


@pytest.mark.parametrize("text", ["[Acme]\nrules =\n", "[Acme]\nrules =\n    1 ([\n"])
def test_bad_scheme_definitions(text):
    with pytest.raises(SchemeError):
        parse_schemes(text)


def test_unknown_scheme():
    with pytest.raises(SchemeError):
        get_scheme("NoSuchVendor")
