"""Exception types shared across the toolkit."""

from __future__ import annotations


class PrioscopeError(Exception):
    """Base class for all toolkit errors."""


class BaseFeeExceedsMaxFee(PrioscopeError):
    """The transaction could not have been included under this base fee."""

    def __init__(self, tx_hash: str, base_fee: int, max_fee: int):
        super().__init__(f"base fee {base_fee} exceeds max fee {max_fee} for tx {tx_hash}")
        self.tx_hash = tx_hash
        self.base_fee = base_fee
        self.max_fee = max_fee


class MalformedLine(PrioscopeError):
    """An input line failed schema or invariant validation."""

    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class UnknownTag(MalformedLine):
    """A bundle line carried a tag outside the known categories."""

    def __init__(self, path: str, line_no: int, value: str):
        super().__init__(path, line_no, f"unknown bundle tag {value!r}")
        self.value = value


class EmptyBlock(PrioscopeError):
    """No transactions remain after exclusions; positional metrics are undefined."""

    def __init__(self, height: int):
        super().__init__(f"block {height} has no transactions eligible for position metrics")
        self.height = height


class NoSnapshotCoverage(PrioscopeError):
    """No mempool snapshot precedes the block, so privacy cannot be decided."""

    def __init__(self, height: int):
        super().__init__(f"no snapshot precedes block {height}")
        self.height = height


class UnresolvedTx(PrioscopeError):
    """A referenced transaction hash is not present in the named block."""

    def __init__(self, tx_hash: str, block_number: int):
        super().__init__(f"tx {tx_hash} not found in block {block_number}")
        self.tx_hash = tx_hash
        self.block_number = block_number


class ZeroGas(PrioscopeError):
    """A bundle consumed no gas; its per-gas fee is undefined."""


class WrongSize(PrioscopeError):
    """A size-specific bundle heuristic was applied to a bundle of another size."""

    def __init__(self, expected: int, got: int):
        super().__init__(f"heuristic requires bundle size {expected}, got {got}")
        self.expected = expected
        self.got = got


class MissingPrice(PrioscopeError):
    """No oracle price is available for (asset, quote) at or before the block."""

    def __init__(self, asset: str, block_number: int, quote: str):
        super().__init__(f"no {asset}-{quote} price at block {block_number}")
        self.asset = asset
        self.block_number = block_number
        self.quote = quote


class InfeasibleSpec(PrioscopeError):
    """A synthetic-corpus spec cannot be realized with its stated guarantees."""
