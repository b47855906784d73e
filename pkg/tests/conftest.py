import io
import os

import pytest

from ncrank import data

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")
BLOCKS_CSV = os.path.join(FIXTURE_DIR, "synthetic_blocks.csv")

# one line per acceptance criterion, echoed after the test summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def blocks_split():
    """Planted two-block dataset: 200 users, 100 items, 20 per user."""
    raw = data.load_interactions(BLOCKS_CSV, "csv")
    return data.leave_one_out_split(data.filter_and_remap(raw, 10))


def mini_block_rows():
    # 10 users, 10 items, two clean blocks of 5; every user sees all
    # five items of their block
    rows = ["user,item,rating,timestamp"]
    for u in range(10):
        start = (u // 5) * 5
        for k in range(5):
            rows.append(f"u{u},i{start + k},1,{k}")
    return "\n".join(rows)


@pytest.fixture(scope="session")
def mini_split():
    raw = data.load_interactions(io.StringIO(mini_block_rows()), "csv")
    return data.leave_one_out_split(data.filter_and_remap(raw, 1))
