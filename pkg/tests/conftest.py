import numpy as np
import pytest

from flexsim.ingest import QUARTERS_PER_DAY, ReadingSeries
from datetime import datetime


def kwh_to_watts(kwh_per_quarter):
    """Average watts that yield the given kWh over 15 minutes."""
    return kwh_per_quarter * 4000.0


def make_readings(days, runs, start=datetime(2016, 1, 4), device_id="dev-1", missing=None):
    """ReadingSeries of `days` whole days with runs placed on a zero baseline.

    runs: list of (day, hour, quarter_offset, [kwh per quarter]).
    """
    n = days * QUARTERS_PER_DAY
    values = np.zeros(n)
    for day, hour, offset, kwhs in runs:
        q = day * QUARTERS_PER_DAY + hour * 4 + offset
        for j, kwh in enumerate(kwhs):
            values[q + j] = kwh_to_watts(kwh)
    mask = np.zeros(n, dtype=bool)
    if missing:
        for idx in missing:
            mask[idx] = True
            values[idx] = 0.0
    return ReadingSeries(device_id=device_id, start=start, values=values, missing=mask)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
