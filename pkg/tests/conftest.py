from __future__ import annotations

from pathlib import Path

import pytest

from kgrelay.kg import load_tsv
from kgrelay.reasoning import ground_reasoning_path, parse_reasoning_path

DATA = Path(__file__).resolve().parent.parent / "data"

WORKED_TEXT = """\
TOPIC: USA
PATH: country.presidents -> president.office_holder
CONSTRAINT: hop=2; rel=education.institution; entity=Harvard
CONSTRAINT: hop=2; rel=position.from; op=GE; value="2000"
"""

WORKED_ARGMAX_TEXT = WORKED_TEXT + 'CONSTRAINT: hop=2; rel=position.from; op=ARGMAX\n'


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def presidents():
    return load_tsv(DATA / "presidents.tsv")


@pytest.fixture(scope="session")
def presidents_tsv_text() -> str:
    return (DATA / "presidents.tsv").read_text(encoding="utf-8")


@pytest.fixture
def worked_path(presidents):
    return ground_reasoning_path(presidents, parse_reasoning_path(WORKED_TEXT))


@pytest.fixture
def worked_argmax_path(presidents):
    return ground_reasoning_path(presidents, parse_reasoning_path(WORKED_ARGMAX_TEXT))
