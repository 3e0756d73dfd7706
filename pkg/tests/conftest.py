import pytest

from synstego.codec import encode_entry
from synstego.corpus import build_dataset, load_corpus, sample_corpus_path

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(sample_corpus_path())


@pytest.fixture(scope="session")
def dataset300(corpus):
    return build_dataset(corpus, 300, (1, 6), seed=42)


@pytest.fixture(scope="session")
def encoded300(dataset300):
    return [encode_entry(e) for e in dataset300]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
