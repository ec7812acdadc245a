"""Shared test helpers."""

from __future__ import annotations

import pytest

from icevision_kit.taxonomy import ClassCode


@pytest.fixture
def code():
    """Shorthand ClassCode factory: code('3.24') or code(3, 24)."""

    def make(*parts):
        if len(parts) == 1 and isinstance(parts[0], str):
            return ClassCode.parse(parts[0])
        return ClassCode(segments=tuple(parts))

    return make
