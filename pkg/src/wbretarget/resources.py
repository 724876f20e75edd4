"""Access to shipped fixture models and scenarios."""

from __future__ import annotations

from importlib import resources


def fixture_text(name: str) -> str:
    """Contents of a shipped fixture file, e.g. 'biped.urdf'."""
    return (resources.files("wbretarget") / "fixtures" / name).read_text()


def fixture_path(name: str):
    return resources.files("wbretarget") / "fixtures" / name


def load_fixture_model(name: str):
    from .model import parse_robot_description

    return parse_robot_description(fixture_text(name))
