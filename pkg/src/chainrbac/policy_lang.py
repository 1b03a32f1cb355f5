"""XML SoD principle documents and their compact array form.

    <SoDPrinciple org="OnlineTest">
      <MERSet type="Static" cardinality="2">
        <Role value="Reviewer"/>
        <Role value="Student"/>
      </MERSet>
    </SoDPrinciple>

Enforcement never reads XML; documents are compiled to the array form
(a list of :class:`MerSet`) before they reach the ledger.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from typing import Iterable
from xml.parsers import expat
from xml.sax.saxutils import quoteattr

from .errors import SchemaViolationError, ValidationError, XmlMalformedError
from .model import MerKind, MerSet


@dataclass(frozen=True)
class SodPrincipleDocument:
    org: str
    mer_sets: tuple[MerSet, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mer_sets", tuple(self.mer_sets))


_ALLOWED_ATTRS = {
    "SoDPrinciple": {"org"},
    "MERSet": {"type", "cardinality"},
    "Role": {"value"},
}
_PARENT = {"SoDPrinciple": None, "MERSet": "SoDPrinciple", "Role": "MERSet"}


class _Builder:
    def __init__(self, parser):
        self.p = parser
        self.stack: list[str] = []
        self.org: str | None = None
        self.sets: list[MerSet] = []
        self._cur: dict | None = None

    def fail(self, msg, element=None):
        raise SchemaViolationError(msg, element, self.p.CurrentLineNumber)

    def start(self, name, attrs):
        if name not in _ALLOWED_ATTRS:
            self.fail(f"unknown element <{name}>", name)
        parent = self.stack[-1] if self.stack else None
        if parent != _PARENT[name]:
            self.fail(f"<{name}> not allowed inside <{parent}>" if parent else f"root element must be <SoDPrinciple>", name)
        extra = set(attrs) - _ALLOWED_ATTRS[name]
        if extra:
            self.fail(f"unknown attribute(s) {sorted(extra)} on <{name}>", name)
        missing = _ALLOWED_ATTRS[name] - set(attrs)
        if missing:
            self.fail(f"missing attribute(s) {sorted(missing)} on <{name}>", name)
        if name == "SoDPrinciple":
            self.org = attrs["org"]
        elif name == "MERSet":
            if attrs["type"] not in ("Static", "Dynamic"):
                self.fail(f"MERSet type must be Static or Dynamic, got {attrs['type']!r}", name)
            try:
                k = int(attrs["cardinality"].strip())
            except ValueError:
                self.fail(f"cardinality {attrs['cardinality']!r} is not an integer", name)
            if k < 2:
                self.fail(f"cardinality must be >= 2, got {k}", name)
            self._cur = {"kind": MerKind(attrs["type"]), "k": k, "roles": [], "line": self.p.CurrentLineNumber}
        else:
            value = attrs["value"]
            if not value:
                self.fail("Role value must be non-empty", name)
            self._cur["roles"].append(value)
        self.stack.append(name)

    def end(self, name):
        self.stack.pop()
        if name != "MERSet":
            return
        cur, self._cur = self._cur, None
        roles = cur["roles"]
        if len(set(roles)) != len(roles):
            warnings.warn(f"duplicate Role values in MERSet at line {cur['line']} collapsed", stacklevel=2)
        distinct = frozenset(roles)
        if len(distinct) < 2:
            raise SchemaViolationError("MERSet needs at least 2 distinct Role elements", "MERSet", cur["line"])
        if cur["k"] > len(distinct):
            raise SchemaViolationError(f"cardinality {cur['k']} exceeds the {len(distinct)} roles in the set",
                                       "MERSet", cur["line"])
        self.sets.append(MerSet(distinct, cur["k"], cur["kind"]))

    def text(self, data):
        if data.strip():
            self.fail(f"unexpected text {data.strip()[:20]!r}", self.stack[-1] if self.stack else None)


# <Role> never has content, so it is read as an empty element whether written
# <Role .../>, <Role ...></Role> or left open as <Role ...>.
_ROLE_TAG = re.compile(r"""<Role\b((?:\s+[\w:.-]+\s*=\s*(?:"[^"]*"|'[^']*'))*)\s*/?>(\s*</Role>)?""")


def _close_roles(text: str) -> str:
    return _ROLE_TAG.sub(lambda m: f"<Role{m.group(1)}/>" + "\n" * (m.group(2) or "").count("\n"), text)


def parse_sod_xml(text: str | bytes) -> SodPrincipleDocument:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise XmlMalformedError(f"document is not UTF-8: {exc}") from None
    text = _close_roles(text)
    parser = expat.ParserCreate()
    b = _Builder(parser)
    parser.StartElementHandler = b.start
    parser.EndElementHandler = b.end
    parser.CharacterDataHandler = b.text

    def no_dtd(*_):
        raise SchemaViolationError("DOCTYPE declarations are not accepted", None, parser.CurrentLineNumber)

    parser.StartDoctypeDeclHandler = no_dtd
    try:
        parser.Parse(text.encode("utf-8"), True)
    except expat.ExpatError as exc:
        raise XmlMalformedError(f"malformed XML: {expat.errors.messages[exc.code]}", None, exc.lineno) from None
    if b.org is None:
        raise SchemaViolationError("missing <SoDPrinciple> root")
    return SodPrincipleDocument(b.org, b.sets)


def serialize_sod_xml(document: SodPrincipleDocument) -> str:
    lines = [f"<SoDPrinciple org={quoteattr(document.org)}>"]
    for m in document.mer_sets:
        lines.append(f"  <MERSet type={quoteattr(m.kind.value)} cardinality={quoteattr(str(m.k))}>")
        lines.extend(f"    <Role value={quoteattr(r)}/>" for r in sorted(m.roles))
        lines.append("  </MERSet>")
    lines.append("</SoDPrinciple>")
    if len(lines) == 2:
        return f"<SoDPrinciple org={quoteattr(document.org)}></SoDPrinciple>\n"
    return "\n".join(lines) + "\n"


def to_array_form(document: SodPrincipleDocument) -> list[MerSet]:
    return list(document.mer_sets)


def from_array_form(mer_sets: Iterable[MerSet], org: str) -> SodPrincipleDocument:
    return SodPrincipleDocument(org, tuple(mer_sets))


def dumps_array_form(mer_sets: Iterable[MerSet]) -> str:
    """``[{"roles": [...], "k": 2, "kind": "Static"}, ...]``"""
    return json.dumps([m.to_json() for m in mer_sets])


def loads_array_form(text: str | bytes) -> list[MerSet]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list):
        raise ValidationError("array form must be a JSON list of MER set objects")
    return [MerSet.from_json(item) for item in data]
