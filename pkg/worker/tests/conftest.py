import sys
from pathlib import Path

import pytest

TABLES = Path(__file__).resolve().parents[1] / "tables"
DEFAULT_TABLE = TABLES / "default_au17.txt"


def worker_command(table=DEFAULT_TABLE, extra=""):
    cmd = f"{sys.executable} -m expr_worker --mode stub --table {table}"
    return f"{cmd} {extra}".strip()


@pytest.fixture
def stub_command():
    return worker_command()
