from __future__ import annotations

import datetime as dt
import shutil
from pathlib import Path

import numpy as np
import pytest

from finvision.synthetic import bars_from_closes, business_days

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parent / "data"


def random_bars(n: int, seed: int, start: dt.date = dt.date(2022, 1, 3)):
    rng = np.random.default_rng(seed)
    closes = 50 * np.exp(np.cumsum(rng.normal(0.0003, 0.02, n)))
    return bars_from_closes(business_days(start, count=n), closes, seed=seed + 1000)


@pytest.fixture
def e2e_dir(tmp_path: Path) -> Path:
    """A private copy of the bundled end-to-end fixture."""
    dst = tmp_path / "e2e"
    shutil.copytree(FIXTURES / "e2e", dst)
    return dst
