"""Streaming parsers for every input format, plus canonical serializers.

This is the only module that touches files. All record formats are JSON Lines
except the two registries (tab-separated) and the acceleration-label list
(one txid per line).

Block lines:
  btc: {"chain":"btc","height":N,"timestamp":N,"coinbase_tag":S,
        "txs":[{"txid":H64,"vsize":N,"fee_sat":N,
                "inputs":[{"txid":H64,"vout":N}],"out_sat":N}]}
  eth: {"chain":"eth","number":N,"timestamp":N,"miner":H40,
        "base_fee_per_gas_wei":N,
        "txs":[{"hash":H64,"from":H40,"to":H40|"","gas_used":N,
                "max_fee_per_gas_wei":N,"max_priority_fee_per_gas_wei":N,
                "coinbase_transfer_wei":N,"status":"ok"|"fail"}]}
       A legacy eth tx may carry "gas_price_wei" instead of the two fee caps;
       it is normalized to max_fee == max_priority_fee == gas_price.

Other lines:
  bundles:   {"block_number":N,"bundle_index":N,"tx_hashes":[H64...],
              "tag":"flashbots"|"rogue"|"miner_payout"}
  snapshots: {"timestamp":N,"pending":[H64...]}   (timestamps strictly increasing)
  prices:    {"block_number":N,"asset":S,"quote":"ETH"|"USD","price":N,"decimals":N}
  events:    liquidations {"protocol":...,"tx_hash":H64,"debt_asset":S,
             "debt_repaid":N,"debt_decimals":N,"collateral_asset":S,
             "collateral_seized":N,"collateral_decimals":N}
             and oracle updates {"tx_hash":H64,"feed":"BASE-QUOTE","price":N,
             "decimals":N}; the two kinds may share one file and are told
             apart by the "feed" key.

Hex identifiers are canonicalized to lowercase at parse time. Serializers emit
the canonical form (compact separators, fields in the order above, snapshot
sets sorted), so serialize(parse(line)) == line for canonical input.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import MalformedLine, UnknownTag
from .model import (
    BUNDLE_TAGS,
    CHAINS,
    BtcTx,
    BundleRecord,
    ChainBlock,
    EthTx,
    LiquidationEvent,
    MempoolSnapshot,
    OracleUpdate,
    PricePoint,
)

log = logging.getLogger("prioscope.ingest")


@dataclass
class LoadStats:
    """Mutable per-load counters; ``skipped`` only grows under skip_bad."""

    lines: int = 0
    skipped: int = 0


@dataclass(frozen=True)
class PoolRegistry:
    """Ordered (marker, pool) rules; first match wins, fallback "Unknown".

    Bitcoin matching is case-sensitive substring search on the raw coinbase
    tag; Ethereum matching is exact miner-address comparison.
    """

    rules: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_tsv(cls, path: str | Path) -> "PoolRegistry":
        rules = []
        with open(path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, 1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0] or not parts[1]:
                    raise MalformedLine(str(path), line_no, "expected marker<TAB>pool")
                rules.append((parts[0], parts[1]))
        return cls(tuple(rules))


UNKNOWN_POOL = "Unknown"


def attribute_pool(block: ChainBlock, registry: PoolRegistry) -> str:
    """Name the pool that mined ``block``; "Unknown" when no rule matches."""
    marker = block.miner_marker
    for rule_marker, pool in registry.rules:
        if block.chain == "eth":
            if rule_marker == marker:
                return pool
        elif rule_marker in marker:
            return pool
    return UNKNOWN_POOL


# ---------------------------------------------------------------------------
# JSONL scaffolding


def _iter_jsonl(
    path: str | Path,
    parse: Callable[[dict], object],
    skip_bad: bool,
    stats: LoadStats | None,
) -> Iterator[tuple[int, object]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if stats is not None:
                stats.lines += 1
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                yield line_no, parse(obj)
            except MalformedLine:
                raise
            except (ValueError, KeyError, TypeError) as exc:
                err = UnknownTag(str(path), line_no, exc.value) if isinstance(
                    exc, _TagError
                ) else MalformedLine(str(path), line_no, str(exc))
                if not skip_bad:
                    raise err from None
                if stats is not None:
                    stats.skipped += 1
                log.debug("skipping %s", err)


class _TagError(ValueError):
    def __init__(self, value):
        super().__init__(f"unknown tag {value!r}")
        self.value = value


def _int_field(obj: dict, key: str) -> int:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{key} must be an integer")
    return value


def _str_field(obj: dict, key: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise ValueError(f"{key} must be a string")
    return value


def _hex_field(obj: dict, key: str) -> str:
    return _str_field(obj, key).lower()


# ---------------------------------------------------------------------------
# Blocks


def _parse_btc_tx(obj: dict) -> BtcTx:
    inputs = tuple(
        (_hex_field(inp, "txid"), _int_field(inp, "vout")) for inp in obj["inputs"]
    )
    return BtcTx(
        txid=_hex_field(obj, "txid"),
        vsize=_int_field(obj, "vsize"),
        fee=_int_field(obj, "fee_sat"),
        inputs=inputs,
        total_output_value=_int_field(obj, "out_sat"),
    )


def _parse_eth_tx(obj: dict) -> EthTx:
    if "gas_price_wei" in obj:
        if "max_fee_per_gas_wei" in obj or "max_priority_fee_per_gas_wei" in obj:
            raise ValueError("legacy gas_price_wei conflicts with fee-cap fields")
        gas_price = _int_field(obj, "gas_price_wei")
        max_fee = priority = gas_price
    else:
        max_fee = _int_field(obj, "max_fee_per_gas_wei")
        priority = _int_field(obj, "max_priority_fee_per_gas_wei")
    return EthTx(
        hash=_hex_field(obj, "hash"),
        issuer=_hex_field(obj, "from"),
        recipient=_hex_field(obj, "to"),
        gas_used=_int_field(obj, "gas_used"),
        max_fee_per_gas=max_fee,
        max_priority_fee_per_gas=priority,
        coinbase_transfer=_int_field(obj, "coinbase_transfer_wei"),
        status=_str_field(obj, "status"),
    )


def _parse_block(obj: dict, chain: str) -> ChainBlock:
    got = _str_field(obj, "chain")
    if got != chain:
        raise ValueError(f"expected chain {chain!r}, line says {got!r}")
    if chain == "btc":
        return ChainBlock(
            chain="btc",
            height=_int_field(obj, "height"),
            timestamp=_int_field(obj, "timestamp"),
            miner_marker=_str_field(obj, "coinbase_tag"),
            base_fee_per_gas=None,
            txs=tuple(_parse_btc_tx(t) for t in obj["txs"]),
        )
    return ChainBlock(
        chain="eth",
        height=_int_field(obj, "number"),
        timestamp=_int_field(obj, "timestamp"),
        miner_marker=_hex_field(obj, "miner"),
        base_fee_per_gas=_int_field(obj, "base_fee_per_gas_wei"),
        txs=tuple(_parse_eth_tx(t) for t in obj["txs"]),
    )


def load_blocks(
    path: str | Path,
    chain: str,
    *,
    skip_bad: bool = False,
    stats: LoadStats | None = None,
) -> Iterator[ChainBlock]:
    """Stream blocks from a JSONL file; peak memory is one block, not the file."""
    if chain not in CHAINS:
        raise ValueError(f"chain must be one of {CHAINS}, got {chain!r}")
    for _, block in _iter_jsonl(path, lambda o: _parse_block(o, chain), skip_bad, stats):
        yield block


def block_to_line(block: ChainBlock) -> str:
    if block.chain == "btc":
        payload = {
            "chain": "btc",
            "height": block.height,
            "timestamp": block.timestamp,
            "coinbase_tag": block.miner_marker,
            "txs": [
                {
                    "txid": t.txid,
                    "vsize": t.vsize,
                    "fee_sat": t.fee,
                    "inputs": [{"txid": p, "vout": v} for p, v in t.inputs],
                    "out_sat": t.total_output_value,
                }
                for t in block.txs
            ],
        }
    else:
        payload = {
            "chain": "eth",
            "number": block.height,
            "timestamp": block.timestamp,
            "miner": block.miner_marker,
            "base_fee_per_gas_wei": block.base_fee_per_gas,
            "txs": [
                {
                    "hash": t.hash,
                    "from": t.issuer,
                    "to": t.recipient,
                    "gas_used": t.gas_used,
                    "max_fee_per_gas_wei": t.max_fee_per_gas,
                    "max_priority_fee_per_gas_wei": t.max_priority_fee_per_gas,
                    "coinbase_transfer_wei": t.coinbase_transfer,
                    "status": t.status,
                }
                for t in block.txs
            ],
        }
    return json.dumps(payload, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Bundles


def _parse_bundle(obj: dict) -> BundleRecord:
    tag = _str_field(obj, "tag")
    if tag not in BUNDLE_TAGS:
        raise _TagError(tag)
    hashes = obj["tx_hashes"]
    if not isinstance(hashes, list):
        raise ValueError("tx_hashes must be a list")
    return BundleRecord(
        block_number=_int_field(obj, "block_number"),
        bundle_index=_int_field(obj, "bundle_index"),
        tx_hashes=tuple(h.lower() if isinstance(h, str) else h for h in hashes),
        tag=tag,
    )


def load_bundles(
    path: str | Path,
    *,
    skip_bad: bool = False,
    stats: LoadStats | None = None,
) -> list[BundleRecord]:
    bundles: list[BundleRecord] = []
    seen: set[tuple[int, int]] = set()
    for line_no, rec in _iter_jsonl(path, _parse_bundle, skip_bad, stats):
        if rec.ref in seen:
            raise MalformedLine(str(path), line_no, f"duplicate bundle ref {rec.ref}")
        seen.add(rec.ref)
        bundles.append(rec)
    return bundles


def bundle_to_line(bundle: BundleRecord) -> str:
    return json.dumps(
        {
            "block_number": bundle.block_number,
            "bundle_index": bundle.bundle_index,
            "tx_hashes": list(bundle.tx_hashes),
            "tag": bundle.tag,
        },
        separators=(",", ":"),
    )


# ---------------------------------------------------------------------------
# Snapshots


def _parse_snapshot(obj: dict) -> MempoolSnapshot:
    pending = obj["pending"]
    if not isinstance(pending, list):
        raise ValueError("pending must be a list")
    return MempoolSnapshot(
        timestamp=_int_field(obj, "timestamp"),
        pending=frozenset(h.lower() if isinstance(h, str) else h for h in pending),
    )


def load_snapshots(
    path: str | Path,
    *,
    skip_bad: bool = False,
    stats: LoadStats | None = None,
) -> list[MempoolSnapshot]:
    snaps: list[MempoolSnapshot] = []
    for line_no, snap in _iter_jsonl(path, _parse_snapshot, skip_bad, stats):
        if snaps and snap.timestamp <= snaps[-1].timestamp:
            raise MalformedLine(
                str(path), line_no, "snapshot timestamps must be strictly increasing"
            )
        snaps.append(snap)
    return snaps


def snapshot_to_line(snap: MempoolSnapshot) -> str:
    return json.dumps(
        {"timestamp": snap.timestamp, "pending": sorted(snap.pending)},
        separators=(",", ":"),
    )


# ---------------------------------------------------------------------------
# Prices


class PriceStore:
    """Block-indexed oracle prices with as-of lookup.

    ``lookup`` returns the most recent price at or before the queried block,
    mirroring how an on-chain consumer reads the feed; None when the feed has
    no update yet.
    """

    def __init__(self, points: Iterable[PricePoint] = ()):
        self._points: list[PricePoint] = []
        self._series: dict[tuple[str, str], tuple[list[int], list[Fraction]]] = {}
        for p in points:
            self.add(p)

    def add(self, point: PricePoint) -> None:
        blocks, values = self._series.setdefault((point.asset, point.quote), ([], []))
        i = bisect_right(blocks, point.block_number)
        if i and blocks[i - 1] == point.block_number:
            raise ValueError(
                f"duplicate price for ({point.block_number}, {point.asset}, {point.quote})"
            )
        blocks.insert(i, point.block_number)
        values.insert(i, point.value())
        self._points.append(point)

    def lookup(self, asset: str, quote: str, block_number: int) -> Fraction | None:
        series = self._series.get((asset, quote))
        if not series:
            return None
        blocks, values = series
        i = bisect_right(blocks, block_number)
        return values[i - 1] if i else None

    def __len__(self) -> int:
        return len(self._points)

    @property
    def points(self) -> list[PricePoint]:
        return list(self._points)


def _parse_price(obj: dict) -> PricePoint:
    return PricePoint(
        block_number=_int_field(obj, "block_number"),
        asset=_str_field(obj, "asset"),
        quote=_str_field(obj, "quote"),
        price=_int_field(obj, "price"),
        decimals=_int_field(obj, "decimals"),
    )


def load_prices(
    path: str | Path,
    *,
    skip_bad: bool = False,
    stats: LoadStats | None = None,
) -> PriceStore:
    store = PriceStore()
    for line_no, point in _iter_jsonl(path, _parse_price, skip_bad, stats):
        try:
            store.add(point)
        except ValueError as exc:
            raise MalformedLine(str(path), line_no, str(exc)) from None
    return store


def price_to_line(point: PricePoint) -> str:
    return json.dumps(
        {
            "block_number": point.block_number,
            "asset": point.asset,
            "quote": point.quote,
            "price": point.price,
            "decimals": point.decimals,
        },
        separators=(",", ":"),
    )


# ---------------------------------------------------------------------------
# DeFi events


def _parse_event(obj: dict) -> LiquidationEvent | OracleUpdate:
    if "feed" in obj:
        return OracleUpdate(
            tx_hash=_hex_field(obj, "tx_hash"),
            feed=_str_field(obj, "feed"),
            price=_int_field(obj, "price"),
            decimals=_int_field(obj, "decimals"),
        )
    return LiquidationEvent(
        protocol=_str_field(obj, "protocol"),
        tx_hash=_hex_field(obj, "tx_hash"),
        debt_asset=_str_field(obj, "debt_asset"),
        debt_repaid=_int_field(obj, "debt_repaid"),
        debt_decimals=_int_field(obj, "debt_decimals"),
        collateral_asset=_str_field(obj, "collateral_asset"),
        collateral_seized=_int_field(obj, "collateral_seized"),
        collateral_decimals=_int_field(obj, "collateral_decimals"),
    )


def load_events(
    path: str | Path,
    *,
    skip_bad: bool = False,
    stats: LoadStats | None = None,
) -> tuple[list[LiquidationEvent], list[OracleUpdate]]:
    """Load a mixed event file into (liquidations, oracle updates)."""
    liquidations: list[LiquidationEvent] = []
    updates: list[OracleUpdate] = []
    for _, rec in _iter_jsonl(path, _parse_event, skip_bad, stats):
        if isinstance(rec, OracleUpdate):
            updates.append(rec)
        else:
            liquidations.append(rec)
    return liquidations, updates


def liquidation_to_line(ev: LiquidationEvent) -> str:
    return json.dumps(
        {
            "protocol": ev.protocol,
            "tx_hash": ev.tx_hash,
            "debt_asset": ev.debt_asset,
            "debt_repaid": ev.debt_repaid,
            "debt_decimals": ev.debt_decimals,
            "collateral_asset": ev.collateral_asset,
            "collateral_seized": ev.collateral_seized,
            "collateral_decimals": ev.collateral_decimals,
        },
        separators=(",", ":"),
    )


def oracle_update_to_line(up: OracleUpdate) -> str:
    return json.dumps(
        {"tx_hash": up.tx_hash, "feed": up.feed, "price": up.price, "decimals": up.decimals},
        separators=(",", ":"),
    )


# ---------------------------------------------------------------------------
# Flat registries


def load_accel_labels(path: str | Path) -> frozenset[str]:
    """Externally verified accelerated txids, one 64-hex id per line."""
    labels: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.strip().lower()
            if not line:
                continue
            if len(line) != 64 or any(c not in "0123456789abcdef" for c in line):
                raise MalformedLine(str(path), line_no, f"not a 64-hex txid: {line!r}")
            labels.add(line)
    return frozenset(labels)


def load_contract_registry(path: str | Path) -> dict[str, str]:
    """TSV address<TAB>protocol mapping DEX contract addresses to names."""
    registry: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise MalformedLine(str(path), line_no, "expected address<TAB>protocol")
            registry[parts[0].lower()] = parts[1]
    return registry


def load_thresholds(path: str | Path) -> dict[tuple[str, str], Fraction]:
    """TSV protocol<TAB>asset<TAB>threshold liquidation-ratio overrides."""
    table: dict[tuple[str, str], Fraction] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedLine(str(path), line_no, "expected protocol<TAB>asset<TAB>threshold")
            try:
                table[(parts[0], parts[1])] = Fraction(parts[2])
            except (ValueError, ZeroDivisionError):
                raise MalformedLine(str(path), line_no, f"bad threshold {parts[2]!r}") from None
    return table
