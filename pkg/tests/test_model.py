from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fixture_data import ETH_EXPERIMENT
from prioscope.errors import BaseFeeExceedsMaxFee
from prioscope.model import (
    BtcTx,
    ChainBlock,
    EthTx,
    effective_gas_price,
    miner_tip_per_gas,
    tx_miner_reward,
)
from prioscope.util import fmt_fixed, gwei

GWEI = 10**9


def eth_tx(
    tip: int,
    max_fee: int,
    transfer: int = 0,
    gas: int = 21000,
    issuer: str = "ab" * 20,
    h: str = "11" * 32,
) -> EthTx:
    return EthTx(
        hash=h,
        issuer=issuer,
        recipient="cd" * 20,
        gas_used=gas,
        max_fee_per_gas=max_fee,
        max_priority_fee_per_gas=tip,
        coinbase_transfer=transfer,
        status="ok",
    )


class TestEffectiveGasPrice:
    def test_experiment_rows(self):
        # 8 private-relay experiment txs; gas price must equal the recorded
        # wei value, whose 8-digit gwei rendering is the published figure
        for row in ETH_EXPERIMENT:
            tx = eth_tx(row.tip_wei, row.max_fee_wei, h=row.tx_hash)
            price = effective_gas_price(tx, row.base_fee_wei)
            assert price == row.gas_price_wei
            assert fmt_fixed(gwei(price), 8) == row.printed_gas_price

    def test_zero_tip_pays_base(self):
        tx = eth_tx(tip=0, max_fee=200 * GWEI)
        assert effective_gas_price(tx, 120 * GWEI) == 120 * GWEI
        assert miner_tip_per_gas(tx, 120 * GWEI) == 0

    def test_capped_by_max_fee(self):
        # base 100, tip 5, max 103 gwei -> price 103, miner keeps 3
        tx = eth_tx(tip=5 * GWEI, max_fee=103 * GWEI)
        assert effective_gas_price(tx, 100 * GWEI) == 103 * GWEI
        assert miner_tip_per_gas(tx, 100 * GWEI) == 3 * GWEI

    def test_base_above_max_rejected(self):
        tx = eth_tx(tip=GWEI, max_fee=100 * GWEI)
        with pytest.raises(BaseFeeExceedsMaxFee):
            effective_gas_price(tx, 100 * GWEI + 1)
        with pytest.raises(BaseFeeExceedsMaxFee):
            tx_miner_reward(tx, 100 * GWEI + 1)


class TestMinerReward:
    def test_experiment_row_fee_paid(self):
        row = ETH_EXPERIMENT[0]
        tx = eth_tx(row.tip_wei, row.max_fee_wei, h=row.tx_hash)
        reward = tx_miner_reward(tx, row.base_fee_wei)
        assert reward == 21000 * row.tip_wei
        fee_eth = Fraction(21000 * effective_gas_price(tx, row.base_fee_wei), 10**18)
        assert fmt_fixed(fee_eth, 8) == row.printed_fee_eth

    def test_zero_everything(self):
        tx = eth_tx(tip=0, max_fee=GWEI)
        assert tx_miner_reward(tx, GWEI) == 0

    def test_tip_plus_transfer(self):
        tx = eth_tx(tip=2 * GWEI, max_fee=50 * GWEI, transfer=400_000 * GWEI, gas=100_000)
        assert tx_miner_reward(tx, 10 * GWEI) == 600_000 * GWEI


wei_amounts = st.integers(min_value=0, max_value=2**100)


@given(base=wei_amounts, tip=wei_amounts, slack=wei_amounts, gas=st.integers(1, 10**8),
       transfer=wei_amounts)
def test_money_precision_near_2_90(base, tip, slack, gas, transfer):
    # closed over arbitrary-precision ints; no drift at 2^90-scale wei values
    tx = eth_tx(tip=tip, max_fee=base + tip + slack, gas=gas, transfer=transfer)
    price = effective_gas_price(tx, base)
    assert price == base + tip  # slack keeps the cap from binding
    assert tx_miner_reward(tx, base) == tip * gas + transfer


@given(
    tip=st.integers(0, 10**12),
    max_fee=st.integers(0, 10**13),
    bases=st.lists(st.integers(0, 10**13), min_size=2, max_size=10),
)
def test_effective_price_monotone_in_base(tip, max_fee, bases):
    tip = min(tip, max_fee)
    tx = eth_tx(tip=tip, max_fee=max_fee)
    valid = sorted(b for b in bases if b <= max_fee)
    prices = [effective_gas_price(tx, b) for b in valid]
    assert prices == sorted(prices)
    assert all(p <= max_fee for p in prices)
    # once the cap binds it stays flat at max_fee
    capped = [p for b, p in zip(valid, prices) if b + tip >= max_fee]
    assert all(p == max_fee for p in capped)


@given(
    tip=st.integers(0, 10**12),
    slack=st.integers(0, 10**12),
    base=st.integers(0, 10**12),
    gas=st.integers(1, 10**7),
    transfer=st.integers(0, 10**18),
)
def test_reward_dominates_transfer(tip, slack, base, gas, transfer):
    tx = eth_tx(tip=tip, max_fee=base + tip + slack, gas=gas, transfer=transfer)
    reward = tx_miner_reward(tx, base)
    assert reward >= transfer
    assert (reward == transfer) == (miner_tip_per_gas(tx, base) == 0)


def btc_tx(fee: int, vsize: int, n: int = 0) -> BtcTx:
    return BtcTx(
        txid=f"{n:064x}",
        vsize=vsize,
        fee=fee,
        inputs=((f"ee{n:062x}", 0),),
        total_output_value=1000,
    )


@given(
    st.lists(
        st.tuples(st.integers(0, 10**9), st.integers(1, 10**6)),
        min_size=3,
        max_size=3,
    )
)
def test_fee_rate_strict_weak_ordering(triple):
    a, b, c = (btc_tx(fee, vsize, i) for i, (fee, vsize) in enumerate(triple))
    gt = lambda x, y: x.fee * y.vsize > y.fee * x.vsize
    # the cross-multiplication test and the Fraction comparison agree
    for x, y in ((a, b), (b, c), (a, c)):
        assert gt(x, y) == (x.fee_rate() > y.fee_rate())
        assert not (gt(x, y) and gt(y, x))  # antisymmetry
    if gt(a, b) and gt(b, c):  # transitivity
        assert gt(a, c)


class TestInvariants:
    def test_eth_priority_above_max_rejected(self):
        with pytest.raises(ValueError):
            eth_tx(tip=2 * GWEI, max_fee=GWEI)

    def test_btc_vsize_positive(self):
        with pytest.raises(ValueError):
            btc_tx(fee=1, vsize=0)

    def test_block_requires_base_fee_iff_eth(self):
        tx = eth_tx(tip=0, max_fee=GWEI)
        with pytest.raises(ValueError):
            ChainBlock("eth", 1, 0, "aa" * 20, None, (tx,))
        coinbase = BtcTx("cb".ljust(64, "0"), 100, 0, (), 0)
        with pytest.raises(ValueError):
            ChainBlock("btc", 1, 0, "/pool/", 5, (coinbase,))

    def test_btc_first_tx_must_be_coinbase(self):
        with pytest.raises(ValueError):
            ChainBlock("btc", 1, 0, "/pool/", None, (btc_tx(1, 100),))

    def test_eth_block_rejects_tx_below_base(self):
        tx = eth_tx(tip=0, max_fee=GWEI)
        with pytest.raises(ValueError):
            ChainBlock("eth", 1, 0, "aa" * 20, 2 * GWEI, (tx,))

    def test_duplicate_ids_rejected(self):
        coinbase = BtcTx("cb".ljust(64, "0"), 100, 0, (), 0)
        tx = btc_tx(1, 100, 7)
        with pytest.raises(ValueError):
            ChainBlock("btc", 1, 0, "/pool/", None, (coinbase, tx, tx))
