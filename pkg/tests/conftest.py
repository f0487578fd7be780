import json
from pathlib import Path

import pytest

from alignloop import mock_backend
from alignloop.corpus import Corpus, Document, ingest_jsonl
from alignloop.mockmodel import MockFixture
from alignloop.retriever import Retriever, build_index

DATA = Path(__file__).resolve().parents[1] / "src" / "alignloop" / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"

DIRECT_Q = "Which architect designed the Harbor Bridge?"
GATED_Q = "Which healer cured plague?"


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def corpus2():
    return Corpus.from_documents([Document("d1", "", "cat sat mat"), Document("d2", "", "dog sat log")])


@pytest.fixture(scope="session")
def fixture_corpus():
    return ingest_jsonl(DATA / "corpus.jsonl")


@pytest.fixture(scope="session")
def mock_fixture():
    return MockFixture.load(DATA / "mock_fixture.json")


@pytest.fixture
def backend(mock_fixture):
    return mock_backend(mock_fixture)


@pytest.fixture
def retriever(fixture_corpus):
    return Retriever(build_index(fixture_corpus))
