"""The online-test scenario fixture (five roles, five databases)."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .engine import ADMIN, Engine
from .model import MerSet, Role


def load_scenario() -> dict:
    return json.loads(resources.files("chainrbac").joinpath("data/fig4.json").read_text())


def read_fixture(path: str | Path | None = None) -> dict:
    if path is None:
        return load_scenario()
    path = Path(path)
    bundled = resources.files("chainrbac").joinpath("data", path.name)
    if not path.exists() and path.parent == Path(".") and bundled.is_file():
        return json.loads(bundled.read_text())
    return json.loads(path.read_text())


def fixture_roles(fixture: dict) -> dict[str, Role]:
    return {r["role_id"]: Role.from_json(r) for r in fixture["roles"]}


def fixture_mer_sets(fixture: dict) -> list[MerSet]:
    return [MerSet.from_json(m) for m in fixture.get("mer_sets", [])]


def load_fixture(engine: Engine, fixture: dict | None = None, *, normalize: bool = True) -> dict:
    """Store roles and MER sets, then normalize the hierarchy.  Returns the child map."""
    fixture = fixture or load_scenario()
    for role in fixture_roles(fixture).values():
        engine.set_role_configuration(ADMIN, role.role_id, role.permissions, role.valid_period)
    for m in fixture_mer_sets(fixture):
        engine.set_sod_constraint(ADMIN, m)
    return engine.normalize_role_hierarchy(ADMIN) if normalize else {}
