import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from osp.catalog import StudyMetadata
from osp.engine import Repository


@pytest.fixture
def repo():
    r = Repository(workers=1)
    yield r
    r.close()


@pytest.fixture
def study(repo):
    return repo.create_study(
        StudyMetadata("Air quality time series", ["Reyes, Carmen"],
                      year=2012, keywords=["air", "health"]),
        "carmen",
    )
