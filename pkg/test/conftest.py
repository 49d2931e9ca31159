import pytest


@pytest.fixture(scope="session")
def ini_file():
    from kpclr import config
    return config


from .fixtures import *
