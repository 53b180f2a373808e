import json
from pathlib import Path

import pytest

from provhunt.amid import load_amid
from provhunt.embedding import load_vectors

FIXTURES = Path(__file__).parent / "fixtures"

MINI_VECTORS = FIXTURES / "mini_vectors.vec"
VECTORS_10K = FIXTURES / "vectors_10k.vec"
AMID_FIXTURE = FIXTURES / "amid_fixture.amid"
BENIGN_STREAM = FIXTURES / "benign_stream.ndjson"
ATTACK_STREAM = FIXTURES / "attack_stream.ndjson"
ATTACK_STREAM_NO_EF = FIXTURES / "attack_stream_noEF.ndjson"
GROUND_TRUTH = FIXTURES / "ground_truth.json"
LIFTING_GOLDENS = FIXTURES / "lifting_goldens.json"


@pytest.fixture(scope="session")
def table():
    return load_vectors(MINI_VECTORS)


@pytest.fixture(scope="session")
def store(table):
    return load_amid(AMID_FIXTURE, table)


@pytest.fixture(scope="session")
def calibrated_store(table):
    from provhunt.amid import calibrate_threshold
    from provhunt.lifting import lift_event
    from provhunt.pipeline import parse_event

    st = load_amid(AMID_FIXTURE, table)
    events = (lift_event(parse_event(json.loads(line)))
              for line in BENIGN_STREAM.read_text().splitlines() if line.strip())
    calibrate_threshold(events, st, table)
    return st


def read_stream(path):
    from provhunt.pipeline import parse_event

    return [parse_event(json.loads(line))
            for line in Path(path).read_text().splitlines() if line.strip()]
