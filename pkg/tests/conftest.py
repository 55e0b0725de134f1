import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from starlknet.engine import set_precision


@pytest.fixture(autouse=True)
def _64bit_default():
    """Run tests in the 64-bit engine mode unless a test switches itself."""
    set_precision("test")
    yield
    set_precision("train")
