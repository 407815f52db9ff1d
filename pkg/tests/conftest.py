from __future__ import annotations

import pytest

from fixture_data import write_btc_experiment, write_eth_experiment, write_pool_day


@pytest.fixture(scope="session")
def eth_experiment(tmp_path_factory):
    return write_eth_experiment(tmp_path_factory.mktemp("eth_experiment"))


@pytest.fixture(scope="session")
def btc_experiment(tmp_path_factory):
    return write_btc_experiment(tmp_path_factory.mktemp("btc_experiment"))


@pytest.fixture(scope="session")
def pool_day(tmp_path_factory):
    return write_pool_day(tmp_path_factory.mktemp("pool_day"))
