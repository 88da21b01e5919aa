"""Named prompt templates loaded from a directory of plain-text files."""

from __future__ import annotations

import importlib.resources
from pathlib import Path
from string import Template

REQUIRED_TEMPLATES = (
    "planner.system",
    "planner.finalize",
    "searcher.rewrite",
    "searcher.select",
    "searcher.summarize",
    "react.system",
    "judge.system",
)


class TemplateError(ValueError):
    pass


class TemplateSet:
    """All prompt templates for one engine instance; every required name must
    exist at load time so a missing file fails startup, not mid-session."""

    def __init__(self, texts: dict[str, str]) -> None:
        missing = [name for name in REQUIRED_TEMPLATES if name not in texts]
        if missing:
            raise TemplateError(f"missing template: {missing[0]}")
        self._templates = {name: Template(text) for name, text in texts.items()}

    @classmethod
    def load(cls, directory: str | Path) -> TemplateSet:
        directory = Path(directory)
        if not directory.is_dir():
            raise TemplateError(f"template directory not found: {directory}")
        texts = {}
        for path in directory.iterdir():
            if path.is_file():
                texts[path.name] = path.read_text(encoding="utf-8")
        return cls(texts)

    @classmethod
    def builtin(cls) -> TemplateSet:
        root = importlib.resources.files("deepsearch") / "templates"
        texts = {}
        for entry in root.iterdir():
            if entry.is_file():
                texts[entry.name] = entry.read_text(encoding="utf-8")
        return cls(texts)

    def render(self, name: str, **values: object) -> str:
        try:
            template = self._templates[name]
        except KeyError:
            raise TemplateError(f"missing template: {name}") from None
        try:
            return template.substitute(values)
        except (KeyError, ValueError) as exc:
            raise TemplateError(f"template {name}: bad substitution: {exc}") from None
