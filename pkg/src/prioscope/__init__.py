"""Forensics for non-transparent transaction prioritization in blockchains.

Detects and quantifies off-chain ("dark-fee") accelerations via
position-prediction error, privately relayed transactions, hidden bundle
fees, and oracle-coupled liquidations. See the CLI in ``prioscope.cli``.
"""

__version__ = "0.1.0"

from .errors import PrioscopeError
from .model import (
    BtcTx,
    BundleRecord,
    ChainBlock,
    EthTx,
    LiquidationEvent,
    MempoolSnapshot,
    OracleUpdate,
    PositionReport,
    PricePoint,
    effective_gas_price,
    miner_tip_per_gas,
    tx_miner_reward,
)

__all__ = [
    "PrioscopeError",
    "BtcTx",
    "BundleRecord",
    "ChainBlock",
    "EthTx",
    "LiquidationEvent",
    "MempoolSnapshot",
    "OracleUpdate",
    "PositionReport",
    "PricePoint",
    "effective_gas_price",
    "miner_tip_per_gas",
    "tx_miner_reward",
    "__version__",
]
