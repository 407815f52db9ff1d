"""Oracle-update/liquidation bundling patterns and liquidator profit accounting.

Profit for a liquidation is the value of the collateral seized minus the
value of the debt repaid, priced with the same on-chain oracle the protocol
itself reads: ETH-quoted feeds for AAVE-style protocols (converted to USD via
the ETH-USD feed at the same block), USD-quoted feeds for Compound-style
ones. All amounts are decimal-scaled exactly; USD output is rounded to cents
only at emission.

A liquidation is "enabled by the update" when the position's collateral/debt
value ratio sits above the liquidation threshold under the previous block's
prices but below it under the liquidation block's prices. The ratio is taken
over the single debt/collateral pair recorded in the event.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import MissingPrice
from .ingest import PriceStore
from .model import BundleRecord, LiquidationEvent, OracleUpdate
from .util import ecdf, fmt_fixed, write_csv

log = logging.getLogger("prioscope.defi")

DEFAULT_LIQ_THRESHOLD = Fraction(3, 2)  # collateral must cover 150% of debt

PATTERN_UPDATE_THEN_LIQ = "update-then-liquidation"
PATTERN_DOUBLE_UPDATE = "double-update-then-liquidations"
PATTERN_OTHER = "other"


@dataclass(frozen=True)
class BundlePattern:
    ref: tuple[int, int]
    tags: tuple[str, ...]  # "update" | "liquidation" | "other", in bundle order
    pattern: str
    feeds: tuple[str, ...]

    @property
    def updates(self) -> int:
        return sum(1 for t in self.tags if t == "update")

    @property
    def liquidations(self) -> int:
        return sum(1 for t in self.tags if t == "liquidation")


def classify_bundle_pattern(
    bundle: BundleRecord,
    updates: Mapping[str, OracleUpdate],
    liquidations: Mapping[str, LiquidationEvent],
) -> BundlePattern:
    """Tag each bundle tx and classify the update/liquidation order.

    Classification looks only at the subsequence of tagged events, so
    unrelated transactions anywhere in the bundle never change the class:
    one update followed by nothing but liquidations is
    "update-then-liquidation", two updates likewise "double-update...",
    anything else (in particular a liquidation before any update) "other".
    """
    tags = []
    feeds = []
    for h in bundle.tx_hashes:
        if h in updates:
            tags.append("update")
            feeds.append(updates[h].feed)
        elif h in liquidations:
            tags.append("liquidation")
        else:
            tags.append("other")
    events = [t for t in tags if t != "other"]
    n_updates = events.count("update")
    liq_tail = (
        events
        and events[-1] == "liquidation"
        and all(t == "update" for t in events[:n_updates])
    )
    if liq_tail and n_updates == 1:
        pattern = PATTERN_UPDATE_THEN_LIQ
    elif liq_tail and n_updates == 2:
        pattern = PATTERN_DOUBLE_UPDATE
    else:
        pattern = PATTERN_OTHER
    return BundlePattern(bundle.ref, tuple(tags), pattern, tuple(feeds))


def feed_pair_counts(patterns: Iterable[BundlePattern]) -> Counter[str]:
    """How often each oracle feed appears in bundles that also liquidate."""
    counts: Counter[str] = Counter()
    for p in patterns:
        if p.liquidations:
            counts.update(p.feeds)
    return counts


# ---------------------------------------------------------------------------
# Profit


@dataclass(frozen=True)
class LiquidationProfit:
    usd: Fraction
    eth: Fraction | None  # populated for ETH-quoted protocols


def _price(prices: PriceStore, asset: str, quote: str, block: int) -> Fraction:
    value = prices.lookup(asset, quote, block)
    if value is None:
        raise MissingPrice(asset, block, quote)
    return value


def liquidation_profit(
    event: LiquidationEvent, prices: PriceStore, block_number: int
) -> LiquidationProfit:
    """Liquidator profit at the liquidation block's oracle prices."""
    if event.protocol == "aave":
        collateral = event.collateral_amount() * _price(
            prices, event.collateral_asset, "ETH", block_number
        )
        debt = event.debt_amount() * _price(prices, event.debt_asset, "ETH", block_number)
        profit_eth = collateral - debt
        eth_usd = _price(prices, "ETH", "USD", block_number)
        return LiquidationProfit(usd=profit_eth * eth_usd, eth=profit_eth)
    collateral = event.collateral_amount() * _price(
        prices, event.collateral_asset, "USD", block_number
    )
    debt = event.debt_amount() * _price(prices, event.debt_asset, "USD", block_number)
    return LiquidationProfit(usd=collateral - debt, eth=None)


# ---------------------------------------------------------------------------
# Update-enabled classification


def _liquidatable(
    event: LiquidationEvent,
    prices: PriceStore,
    block_number: int,
    threshold: Fraction,
) -> bool:
    quote = "ETH" if event.protocol == "aave" else "USD"
    collateral = event.collateral_amount() * _price(
        prices, event.collateral_asset, quote, block_number
    )
    debt = event.debt_amount() * _price(prices, event.debt_asset, quote, block_number)
    if debt == 0:
        return False
    return collateral / debt < threshold


def _threshold_for(
    event: LiquidationEvent, thresholds: Mapping[tuple[str, str], Fraction] | None
) -> Fraction:
    if thresholds:
        return thresholds.get((event.protocol, event.collateral_asset), DEFAULT_LIQ_THRESHOLD)
    return DEFAULT_LIQ_THRESHOLD


def liquidatable_at(
    event: LiquidationEvent,
    prices: PriceStore,
    block_number: int,
    thresholds: Mapping[tuple[str, str], Fraction] | None = None,
) -> bool:
    """Whether the event's position sits below its liquidation threshold
    under the prices in force at ``block_number``."""
    return _liquidatable(event, prices, block_number, _threshold_for(event, thresholds))


def enabled_by_update(
    event: LiquidationEvent,
    prices: PriceStore,
    block_number: int,
    thresholds: Mapping[tuple[str, str], Fraction] | None = None,
) -> bool:
    """True iff the position is liquidatable at ``block_number`` but was not
    at the previous block. Thresholds are keyed by (protocol, collateral
    asset); unlisted pairs use the 150% default."""
    threshold = _threshold_for(event, thresholds)
    now = _liquidatable(event, prices, block_number, threshold)
    before = _liquidatable(event, prices, block_number - 1, threshold)
    return now and not before


# ---------------------------------------------------------------------------
# Profit by bundling class


@dataclass(frozen=True)
class ProfitRow:
    event: LiquidationEvent
    bundled_with_update: bool
    profit: LiquidationProfit


@dataclass(frozen=True)
class ProfitByClass:
    rows: list[ProfitRow]
    bundled_cdf: list[tuple[Fraction, Fraction]]
    unbundled_cdf: list[tuple[Fraction, Fraction]]


def profit_by_bundling_class(
    events: Sequence[LiquidationEvent],
    patterns: Iterable[BundlePattern],
    bundles: Iterable[BundleRecord],
    prices: PriceStore,
    tx_blocks: Mapping[str, int],
) -> ProfitByClass:
    """Split per-liquidation USD profits by whether the liquidation shares a
    bundle with at least one oracle update, and return both empirical CDFs.

    ``tx_blocks`` maps each liquidation tx hash to its inclusion block.
    """
    with_update: set[str] = set()
    patterns_by_ref = {p.ref: p for p in patterns}
    for bundle in bundles:
        p = patterns_by_ref.get(bundle.ref)
        if p is not None and p.updates > 0:
            with_update.update(bundle.tx_hashes)

    rows = []
    for event in events:
        if event.tx_hash not in tx_blocks:
            raise KeyError(f"no inclusion block known for liquidation {event.tx_hash}")
        profit = liquidation_profit(event, prices, tx_blocks[event.tx_hash])
        rows.append(ProfitRow(event, event.tx_hash in with_update, profit))
    bundled = [r.profit.usd for r in rows if r.bundled_with_update]
    unbundled = [r.profit.usd for r in rows if not r.bundled_with_update]
    return ProfitByClass(rows, ecdf(bundled), ecdf(unbundled))


# ---------------------------------------------------------------------------
# CSV emitters


def write_patterns_csv(patterns: Iterable[BundlePattern], path) -> None:
    write_csv(
        path,
        ["block_number", "bundle_index", "updates", "liquidations", "pattern", "feeds"],
        (
            (
                str(p.ref[0]),
                str(p.ref[1]),
                str(p.updates),
                str(p.liquidations),
                p.pattern,
                ";".join(p.feeds),
            )
            for p in patterns
        ),
    )


def write_profits_csv(rows: Iterable[ProfitRow], path) -> None:
    write_csv(
        path,
        ["tx_hash", "protocol", "bundled_with_update", "profit_usd"],
        (
            (
                r.event.tx_hash,
                r.event.protocol,
                "1" if r.bundled_with_update else "0",
                fmt_fixed(r.profit.usd, 2),
            )
            for r in rows
        ),
    )


def write_enabled_csv(rows: Iterable[tuple[LiquidationEvent, bool]], path) -> None:
    write_csv(
        path,
        ["tx_hash", "protocol", "enabled_by_update"],
        ((ev.tx_hash, ev.protocol, "1" if enabled else "0") for ev, enabled in rows),
    )
