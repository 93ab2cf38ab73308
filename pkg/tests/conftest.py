import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))

from tabevent import supervision
from tabevent.core import read_corpus, read_tables
from tabevent.supervision import GenerationConfig

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_paths():
    return {
        "tables": str(FIXTURES / "tables.json"),
        "corpus": str(FIXTURES / "s1s4_corpus.jsonl"),
        "aliases": str(FIXTURES / "aliases.tsv"),
    }


@pytest.fixture(scope="session")
def fixture_tables(fixture_paths):
    return read_tables(fixture_paths["tables"])


@pytest.fixture(scope="session")
def fixture_corpus(fixture_paths):
    return read_corpus(fixture_paths["corpus"])


@pytest.fixture(scope="session")
def fixture_schemas(fixture_tables):
    stats = supervision.collect_stats(fixture_tables)
    return {
        t.event_type: supervision.select_key_args(t, stats) for t in fixture_tables
    }


@pytest.fixture(scope="session")
def fixture_dataset(fixture_tables, fixture_corpus):
    records, report = supervision.generate_dataset(
        fixture_tables, fixture_corpus, GenerationConfig(), seed=0
    )
    return records, report
