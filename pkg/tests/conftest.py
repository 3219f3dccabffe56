import pytest

from regenscatter.link_eval import default_bundle


@pytest.fixture(scope="session")
def models():
    return default_bundle()
