import os
import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ratingcohorts import aggregates, segmentation, synthdata  # noqa: E402

DATA = Path(__file__).parent / "data"

# (criterion, passed, detail) lines collected by the acceptance module
ACCEPTANCE_LINES: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    def order(line):
        m = re.match(r"C(\d+)", line[0])
        return (int(m.group(1)) if m else 99, line[0])

    for name, status, detail in sorted(ACCEPTANCE_LINES, key=order):
        terminalreporter.write_line(f"{status:4s}  {name}: {detail}")


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def synth_default():
    return synthdata.generate(synthdata.SynthConfig(seed=11))


@pytest.fixture(scope="session")
def synth_stats(synth_default):
    t = synth_default.ratings
    users = aggregates.user_stats(t)
    businesses = aggregates.business_stats(t)
    moments = aggregates.population_moments(users, businesses)
    segments = segmentation.segment_raters(users)
    return t, users, businesses, moments, segments


@pytest.fixture(scope="session")
def yelp_dir():
    path = os.environ.get("YELP_DATASET_DIR")
    if not path or not Path(path).is_dir():
        pytest.skip("YELP_DATASET_DIR not set; full-dataset goldens skipped")
    return Path(path)
