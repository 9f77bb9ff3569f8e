import sys
from pathlib import Path

import pytest

import kbqa
from kbqa.kbstore import load_paths
from kbqa.linker import load_lexicon
from kbqa.rank import load_embeddings

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(kbqa.__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def f1():
    return load_paths(DATA / "f1_ontology.tsv", DATA / "f1_facts.tsv")


@pytest.fixture(scope="session")
def l1():
    return load_lexicon(DATA / "l1_lexicon.tsv")


@pytest.fixture(scope="session")
def emb():
    return load_embeddings(DATA / "emb_fixture_50d.txt")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(module.RESULTS):
        terminalreporter.write_line(module.report_line(n))
