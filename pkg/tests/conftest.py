import pytest

from deepsearch.templates import TemplateSet


@pytest.fixture(scope="session")
def templates() -> TemplateSet:
    return TemplateSet.builtin()
