"""Core domain types: blocks, transactions, bundles, and fee arithmetic.

All monetary quantities are integers in the chain's smallest unit (satoshi,
wei) end to end; Bitcoin fee rates are rationals over (fee, vsize). Every type
is an immutable value object and every operation here is a pure function, so
the whole module is safe for unrestricted data-parallel use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

from .errors import BaseFeeExceedsMaxFee

_HEX64 = re.compile(r"[0-9a-f]{64}\Z")
_HEX40 = re.compile(r"[0-9a-f]{40}\Z")
_FEED = re.compile(r"[A-Z0-9]+-[A-Z0-9]+\Z")

Chain = Literal["btc", "eth"]
CHAINS = ("btc", "eth")
BUNDLE_TAGS = ("flashbots", "rogue", "miner_payout")


def _check_hex(value: str, length: int, what: str) -> None:
    pattern = _HEX64 if length == 64 else _HEX40
    if not pattern.match(value):
        raise ValueError(f"{what} must be {length} lowercase hex chars, got {value!r}")


@dataclass(frozen=True)
class BtcTx:
    """A Bitcoin-style transaction; the coinbase has an empty input list."""

    txid: str
    vsize: int
    fee: int
    inputs: tuple[tuple[str, int], ...]
    total_output_value: int

    def __post_init__(self):
        _check_hex(self.txid, 64, "txid")
        if self.vsize < 1:
            raise ValueError(f"vsize must be >= 1, got {self.vsize}")
        if self.fee < 0:
            raise ValueError(f"fee must be >= 0, got {self.fee}")
        if self.total_output_value < 0:
            raise ValueError("total_output_value must be >= 0")
        for parent, vout in self.inputs:
            _check_hex(parent, 64, "input txid")
            if vout < 0:
                raise ValueError("input vout must be >= 0")
            if parent == self.txid:
                raise ValueError(f"tx {self.txid} spends itself")

    def fee_rate(self) -> Fraction:
        """Exact satoshi-per-vbyte rate; comparing Fractions is the
        cross-multiplication test fee_a*vsize_b > fee_b*vsize_a."""
        return Fraction(self.fee, self.vsize)

    @property
    def is_coinbase(self) -> bool:
        return not self.inputs


@dataclass(frozen=True)
class EthTx:
    """An Ethereum-style transaction with its declared fee caps.

    Legacy gas-price transactions are normalized at ingestion to
    max_fee == max_priority_fee == gas_price, so one code path serves both
    fee eras. ``status`` uses the wire values: "ok" (executed) or "fail".
    """

    hash: str
    issuer: str
    recipient: str  # empty string for contract creation
    gas_used: int
    max_fee_per_gas: int
    max_priority_fee_per_gas: int
    coinbase_transfer: int
    status: str

    def __post_init__(self):
        _check_hex(self.hash, 64, "hash")
        _check_hex(self.issuer, 40, "issuer")
        if self.recipient:
            _check_hex(self.recipient, 40, "recipient")
        if self.gas_used < 1:
            raise ValueError(f"gas_used must be >= 1, got {self.gas_used}")
        if min(self.max_fee_per_gas, self.max_priority_fee_per_gas, self.coinbase_transfer) < 0:
            raise ValueError("monetary fields must be >= 0")
        if self.max_priority_fee_per_gas > self.max_fee_per_gas:
            raise ValueError(
                f"max priority fee {self.max_priority_fee_per_gas} exceeds "
                f"max fee {self.max_fee_per_gas}"
            )
        if self.status not in ("ok", "fail"):
            raise ValueError(f"status must be 'ok' or 'fail', got {self.status!r}")


@dataclass(frozen=True)
class ChainBlock:
    """One mined block: ordered transactions plus the miner marker.

    Positions are 1-indexed in file order. For btc, position 1 is the coinbase
    and is excluded from positional metrics; for eth, ``base_fee_per_gas`` is
    required and every transaction's max fee must cover it.
    """

    chain: str
    height: int
    timestamp: int
    miner_marker: str
    base_fee_per_gas: int | None
    txs: tuple[BtcTx, ...] | tuple[EthTx, ...]

    def __post_init__(self):
        if self.chain not in CHAINS:
            raise ValueError(f"chain must be one of {CHAINS}, got {self.chain!r}")
        if self.height < 0:
            raise ValueError("height must be >= 0")
        if self.chain == "eth":
            if self.base_fee_per_gas is None or self.base_fee_per_gas < 0:
                raise ValueError("eth block requires a non-negative base_fee_per_gas")
            for tx in self.txs:
                if not isinstance(tx, EthTx):
                    raise ValueError("eth block contains a non-eth transaction")
                if tx.max_fee_per_gas < self.base_fee_per_gas:
                    raise ValueError(
                        f"tx {tx.hash} max fee below block base fee {self.base_fee_per_gas}"
                    )
        else:
            if self.base_fee_per_gas is not None:
                raise ValueError("btc block must not carry base_fee_per_gas")
            for i, tx in enumerate(self.txs):
                if not isinstance(tx, BtcTx):
                    raise ValueError("btc block contains a non-btc transaction")
                if i == 0 and not tx.is_coinbase:
                    raise ValueError("first btc transaction must be the coinbase (no inputs)")
                if i > 0 and tx.is_coinbase:
                    raise ValueError(f"non-first tx {tx.txid} has no inputs")
        ids = [t.txid if isinstance(t, BtcTx) else t.hash for t in self.txs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate transaction id in block {self.height}")

    def tx_ids(self) -> list[str]:
        return [t.txid if isinstance(t, BtcTx) else t.hash for t in self.txs]


@dataclass(frozen=True)
class BundleRecord:
    """An ordered group of transaction references inside one block."""

    block_number: int
    bundle_index: int
    tx_hashes: tuple[str, ...]
    tag: str

    def __post_init__(self):
        if not self.tx_hashes:
            raise ValueError("bundle must reference at least one transaction")
        if self.bundle_index < 0:
            raise ValueError("bundle_index must be >= 0")
        if self.tag not in BUNDLE_TAGS:
            raise ValueError(f"tag must be one of {BUNDLE_TAGS}, got {self.tag!r}")
        for h in self.tx_hashes:
            _check_hex(h, 64, "bundle tx hash")

    @property
    def ref(self) -> tuple[int, int]:
        return (self.block_number, self.bundle_index)


@dataclass(frozen=True)
class MempoolSnapshot:
    timestamp: int
    pending: frozenset[str]


@dataclass(frozen=True)
class PositionReport:
    """Predicted-versus-observed position of one transaction.

    ``sppe`` is the signed position prediction error in percent: positive
    means the transaction was included higher (earlier) in the block than its
    fee justifies. ``ppe`` is its magnitude. Predictions are a [lo, hi] range
    covering fee ties; the error is zero anywhere inside the range.
    """

    tx_id: str
    observed_position: int
    predicted_lo: int
    predicted_hi: int
    ppe: Fraction
    sppe: Fraction
    height: int
    pool: str

    def __post_init__(self):
        if self.predicted_lo > self.predicted_hi:
            raise ValueError("predicted_lo must be <= predicted_hi")
        if abs(self.sppe) > 100 or self.ppe != abs(self.sppe):
            raise ValueError("ppe/sppe out of range")


@dataclass(frozen=True)
class LiquidationEvent:
    protocol: str
    tx_hash: str
    debt_asset: str
    debt_repaid: int
    debt_decimals: int
    collateral_asset: str
    collateral_seized: int
    collateral_decimals: int

    def __post_init__(self):
        if self.protocol not in ("aave", "compound"):
            raise ValueError(f"protocol must be aave or compound, got {self.protocol!r}")
        _check_hex(self.tx_hash, 64, "tx_hash")
        if self.debt_repaid <= 0 or self.collateral_seized <= 0:
            raise ValueError("liquidation amounts must be positive")
        for d in (self.debt_decimals, self.collateral_decimals):
            if not 0 <= d <= 36:
                raise ValueError(f"decimals must be in [0, 36], got {d}")

    def debt_amount(self) -> Fraction:
        return Fraction(self.debt_repaid, 10**self.debt_decimals)

    def collateral_amount(self) -> Fraction:
        return Fraction(self.collateral_seized, 10**self.collateral_decimals)


@dataclass(frozen=True)
class OracleUpdate:
    tx_hash: str
    feed: str
    price: int
    decimals: int

    def __post_init__(self):
        _check_hex(self.tx_hash, 64, "tx_hash")
        if not _FEED.match(self.feed):
            raise ValueError(f"feed must match BASE-QUOTE, got {self.feed!r}")
        if self.price < 0 or not 0 <= self.decimals <= 36:
            raise ValueError("invalid price or decimals")


@dataclass(frozen=True)
class PricePoint:
    block_number: int
    asset: str
    quote: str
    price: int
    decimals: int

    def __post_init__(self):
        if self.quote not in ("ETH", "USD"):
            raise ValueError(f"quote must be ETH or USD, got {self.quote!r}")
        if self.price < 0 or not 0 <= self.decimals <= 36:
            raise ValueError("invalid price or decimals")

    def value(self) -> Fraction:
        return Fraction(self.price, 10**self.decimals)


def effective_gas_price(tx: EthTx, base_fee: int) -> int:
    """Per-gas price charged for ``tx`` in a block with ``base_fee``, in wei.

    min(max_fee, base_fee + max_priority_fee); the miner's tip per gas is the
    result minus the (burned) base fee.
    """
    if base_fee > tx.max_fee_per_gas:
        raise BaseFeeExceedsMaxFee(tx.hash, base_fee, tx.max_fee_per_gas)
    return min(tx.max_fee_per_gas, base_fee + tx.max_priority_fee_per_gas)


def miner_tip_per_gas(tx: EthTx, base_fee: int) -> int:
    """The per-gas amount the block producer actually keeps, in wei."""
    return effective_gas_price(tx, base_fee) - base_fee


def tx_miner_reward(tx: EthTx, base_fee: int) -> int:
    """Total wei the block producer earns from ``tx``: tip times gas, plus
    any direct coinbase transfer."""
    return miner_tip_per_gas(tx, base_fee) * tx.gas_used + tx.coinbase_transfer
