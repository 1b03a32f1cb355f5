import warnings
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from chainrbac.errors import SchemaViolationError, XmlMalformedError
from chainrbac.model import MerKind, MerSet
from chainrbac.policy_lang import (SodPrincipleDocument, dumps_array_form, from_array_form, loads_array_form,
                                   parse_sod_xml, serialize_sod_xml, to_array_form)

SAMPLE_POLICY = (Path(__file__).parent / "data" / "sample_policy.xml").read_text()
EXPECTED = [MerSet(frozenset({"Reviewer", "Student"}), 2, MerKind.STATIC),
            MerSet(frozenset({"Reviewer", "Editor"}), 2, MerKind.DYNAMIC)]


def test_sample_policy_verbatim():
    doc = parse_sod_xml(SAMPLE_POLICY)
    assert doc.org == "OnlineTest"
    assert list(doc.mer_sets) == EXPECTED
    assert to_array_form(doc) == EXPECTED


def test_sample_policy_roundtrip():
    doc = parse_sod_xml(SAMPLE_POLICY)
    assert parse_sod_xml(serialize_sod_xml(doc)) == doc


def test_role_tag_forms_equivalent():
    a = '<SoDPrinciple org="o"><MERSet type="Static" cardinality="2"><Role value="A"/><Role value="B"></Role></MERSet></SoDPrinciple>'
    b = '<SoDPrinciple org="o"><MERSet type="Static" cardinality="2"><Role value="A"><Role value="B"></MERSet></SoDPrinciple>'
    assert parse_sod_xml(a) == parse_sod_xml(b) == parse_sod_xml(b.encode())


@pytest.mark.parametrize("doc, element", [
    ('<SoDPrinciple org="o"><MERSet type="Static" cardinality="1"><Role value="A"/><Role value="B"/></MERSet></SoDPrinciple>', "MERSet"),
    ('<SoDPrinciple org="o"><MERSet type="Static" cardinality="3"><Role value="A"/><Role value="B"/></MERSet></SoDPrinciple>', "MERSet"),
    ('<SoDPrinciple org="o"><MERSet type="Sometimes" cardinality="2"><Role value="A"/><Role value="B"/></MERSet></SoDPrinciple>', "MERSet"),
    ('<SoDPrinciple org="o"><MERSet type="Static" cardinality="x"><Role value="A"/><Role value="B"/></MERSet></SoDPrinciple>', "MERSet"),
    ('<SoDPrinciple org="o"><MERSet type="Static" cardinality="2"><Role value="A"/></MERSet></SoDPrinciple>', "MERSet"),
    ('<SoDPrinciple org="o"><Role value="A"/></SoDPrinciple>', "Role"),
    ('<SoDPrinciple><MERSet type="Static" cardinality="2"/></SoDPrinciple>', "SoDPrinciple"),
    ('<Policy org="o"/>', "Policy"),
    ('<SoDPrinciple org="o" extra="1"></SoDPrinciple>', "SoDPrinciple"),
])
def test_schema_violations(doc, element):
    with pytest.raises(SchemaViolationError) as exc:
        parse_sod_xml(doc)
    assert exc.value.element == element and exc.value.line == 1


def test_violation_reports_line():
    doc = '<SoDPrinciple org="o">\n  <MERSet type="Static"\n cardinality="1">\n</MERSet></SoDPrinciple>'
    with pytest.raises(SchemaViolationError) as exc:
        parse_sod_xml(doc)
    assert exc.value.line in (2, 3)


def test_malformed_and_doctype():
    with pytest.raises(XmlMalformedError):
        parse_sod_xml('<SoDPrinciple org="o"')
    with pytest.raises(SchemaViolationError):
        parse_sod_xml('<!DOCTYPE x [<!ENTITY a "b">]><SoDPrinciple org="o"/>')


def test_duplicate_role_values_collapse_with_warning():
    doc = ('<SoDPrinciple org="o"><MERSet type="Static" cardinality="2">'
           '<Role value="A"/><Role value="A"/><Role value="B"/></MERSet></SoDPrinciple>')
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        out = parse_sod_xml(doc)
    assert out.mer_sets[0].roles == {"A", "B"} and w


def test_empty_document():
    doc = parse_sod_xml('<SoDPrinciple org="OnlineTest"></SoDPrinciple>')
    assert doc.mer_sets == ()
    text = serialize_sod_xml(SodPrincipleDocument("OnlineTest"))
    assert text.strip() == '<SoDPrinciple org="OnlineTest"></SoDPrinciple>'
    assert parse_sod_xml(text) == doc
    assert from_array_form([], "OnlineTest") == doc


role_name = st.text(st.characters(blacklist_categories=("Cs", "Cc")) | st.sampled_from(list("<>&\"'\t")),
                    min_size=1, max_size=8)


@st.composite
def documents(draw):
    sets = []
    for _ in range(draw(st.integers(0, 5))):
        roles = draw(st.sets(role_name, min_size=2, max_size=6))
        sets.append(MerSet(frozenset(roles), draw(st.integers(2, len(roles))),
                           draw(st.sampled_from(list(MerKind)))))
    return SodPrincipleDocument(draw(role_name), tuple(sets))


@settings(max_examples=200, deadline=None)
@given(documents())
def test_xml_roundtrip_with_reserved_characters(doc):
    assert parse_sod_xml(serialize_sod_xml(doc)) == doc


@settings(max_examples=200, deadline=None)
@given(documents())
def test_array_roundtrip(doc):
    arr = to_array_form(doc)
    assert loads_array_form(dumps_array_form(arr)) == arr
    assert from_array_form(arr, doc.org) == doc
