"""Relay-bundle economics and heuristics for spotting captured public txs.

A bundle's effective per-gas bid (its "actual max-priority fee") is the total
miner reward it produces - per-gas tips plus direct coinbase transfers -
divided by the total gas it consumes, kept as an exact rational and emitted
as a 9-digit gwei decimal.

Two heuristics identify public transactions captured inside bundles:

* size 2: different issuers, first tx tips the miner and transfers nothing,
  second tx tips zero and pays a non-zero coinbase transfer. The first tx is
  the embedded public one.
* size 3 (sandwich shape): first and last txs share an issuer, the middle one
  differs; outer tips are zero, the middle tip is non-zero, and the last tx
  pays a non-zero coinbase transfer. The middle tx is the embedded public one.

"Tip" here is the declared max-priority fee, which is what the heuristics'
conditions are stated over; fee gaps use the effective tip actually kept by
the miner.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import UnresolvedTx, WrongSize, ZeroGas
from .ingest import PoolRegistry, attribute_pool
from .model import (
    BundleRecord,
    ChainBlock,
    EthTx,
    effective_gas_price,
    miner_tip_per_gas,
    tx_miner_reward,
)
from .util import fmt_fixed, fmt_gwei, gwei, write_csv

log = logging.getLogger("prioscope.bundles")


def resolve_bundle(bundle: BundleRecord, block: ChainBlock) -> list[EthTx]:
    """The bundle's transactions, in bundle order, looked up in its block."""
    if block.height != bundle.block_number:
        raise UnresolvedTx(bundle.tx_hashes[0], bundle.block_number)
    by_hash = {tx.hash: tx for tx in block.txs if isinstance(tx, EthTx)}
    txs = []
    for h in bundle.tx_hashes:
        if h not in by_hash:
            raise UnresolvedTx(h, bundle.block_number)
        txs.append(by_hash[h])
    return txs


@dataclass(frozen=True)
class BundleEconomics:
    ref: tuple[int, int]
    tag: str
    total_gas: int
    total_reward: int  # wei

    @property
    def actual_max_priority_fee(self) -> Fraction:
        """Reward per unit of gas, wei/gas, exact."""
        return Fraction(self.total_reward, self.total_gas)


def bundle_economics(bundle: BundleRecord, block: ChainBlock) -> BundleEconomics:
    txs = resolve_bundle(bundle, block)
    base_fee = block.base_fee_per_gas
    assert base_fee is not None  # guaranteed by ChainBlock invariants for eth
    total_gas = sum(tx.gas_used for tx in txs)
    if total_gas == 0:
        raise ZeroGas(f"bundle {bundle.ref} consumed no gas")
    total_reward = sum(tx_miner_reward(tx, base_fee) for tx in txs)
    return BundleEconomics(bundle.ref, bundle.tag, total_gas, total_reward)


# ---------------------------------------------------------------------------
# Capture heuristics


def detect_h2(bundle: BundleRecord, block: ChainBlock) -> bool:
    """Size-2 capture pattern; see module docstring."""
    if len(bundle.tx_hashes) != 2:
        raise WrongSize(2, len(bundle.tx_hashes))
    first, second = resolve_bundle(bundle, block)
    return (
        first.issuer != second.issuer
        and first.max_priority_fee_per_gas > 0
        and first.coinbase_transfer == 0
        and second.max_priority_fee_per_gas == 0
        and second.coinbase_transfer > 0
    )


def detect_h3_sandwich(bundle: BundleRecord, block: ChainBlock) -> bool:
    """Size-3 sandwich pattern; see module docstring."""
    if len(bundle.tx_hashes) != 3:
        raise WrongSize(3, len(bundle.tx_hashes))
    first, second, third = resolve_bundle(bundle, block)
    return (
        first.issuer == third.issuer
        and second.issuer != first.issuer
        and first.max_priority_fee_per_gas == 0
        and third.max_priority_fee_per_gas == 0
        and second.max_priority_fee_per_gas > 0
        and third.coinbase_transfer > 0
    )


@dataclass(frozen=True)
class BundleMatch:
    bundle: BundleRecord
    kind: str  # "h2" | "h3"
    public_tx: str


def match_public_bundles(
    bundles: Iterable[BundleRecord], blocks_by_number: Mapping[int, ChainBlock]
) -> list[BundleMatch]:
    """Scan size-2/size-3 bundles for the capture patterns."""
    matches = []
    for bundle in bundles:
        block = blocks_by_number.get(bundle.block_number)
        if block is None:
            raise UnresolvedTx(bundle.tx_hashes[0], bundle.block_number)
        if len(bundle.tx_hashes) == 2 and detect_h2(bundle, block):
            matches.append(BundleMatch(bundle, "h2", bundle.tx_hashes[0]))
        elif len(bundle.tx_hashes) == 3 and detect_h3_sandwich(bundle, block):
            matches.append(BundleMatch(bundle, "h3", bundle.tx_hashes[1]))
    return matches


# ---------------------------------------------------------------------------
# Corpus statistics


@dataclass(frozen=True)
class Distribution:
    n: int
    minimum: int
    mean: Fraction
    median: Fraction
    std: float
    maximum: int


def _distribution(values: Sequence[int]) -> Distribution:
    vals = sorted(values)
    n = len(vals)
    mean = Fraction(sum(vals), n)
    mid = n // 2
    median = Fraction(vals[mid]) if n % 2 else Fraction(vals[mid - 1] + vals[mid], 2)
    variance = Fraction(sum((v - mean) ** 2 for v in vals), n)  # population
    return Distribution(n, vals[0], mean, median, float(variance) ** 0.5, vals[-1])


@dataclass(frozen=True)
class BundleStats:
    sizes: Distribution
    bundles_per_block: Distribution  # over blocks containing at least one bundle
    blocks_with_bundle_share: Fraction
    tag_tx_shares: dict[str, Fraction]
    tag_bundle_counts: dict[str, int]
    failed_tx_share: Fraction
    pool_bundle_shares: dict[str, Fraction]


def bundle_stats(
    bundles: Sequence[BundleRecord],
    blocks: Iterable[ChainBlock],
    registry: PoolRegistry | None = None,
) -> BundleStats:
    """Size, prevalence, tag and failure statistics over a bundle corpus."""
    if not bundles:
        raise ValueError("bundle_stats requires at least one bundle")
    blocks_by_number: dict[int, ChainBlock] = {}
    total_blocks = 0
    for block in blocks:
        total_blocks += 1
        blocks_by_number[block.height] = block

    sizes = [len(b.tx_hashes) for b in bundles]
    per_block: Counter[int] = Counter(b.block_number for b in bundles)
    tag_txs: Counter[str] = Counter()
    tag_bundles: Counter[str] = Counter()
    pool_bundles: Counter[str] = Counter()
    failed = 0
    total_txs = 0
    for bundle in bundles:
        tag_txs[bundle.tag] += len(bundle.tx_hashes)
        tag_bundles[bundle.tag] += 1
        total_txs += len(bundle.tx_hashes)
        block = blocks_by_number.get(bundle.block_number)
        if block is None:
            raise UnresolvedTx(bundle.tx_hashes[0], bundle.block_number)
        for tx in resolve_bundle(bundle, block):
            if tx.status == "fail":
                failed += 1
        if registry is not None:
            pool_bundles[attribute_pool(block, registry)] += 1

    return BundleStats(
        sizes=_distribution(sizes),
        bundles_per_block=_distribution(list(per_block.values())),
        blocks_with_bundle_share=Fraction(100 * len(per_block), total_blocks),
        tag_tx_shares={t: Fraction(100 * n, total_txs) for t, n in sorted(tag_txs.items())},
        tag_bundle_counts=dict(sorted(tag_bundles.items())),
        failed_tx_share=Fraction(100 * failed, total_txs),
        pool_bundle_shares={
            p: Fraction(100 * n, len(bundles)) for p, n in sorted(pool_bundles.items())
        },
    )


# ---------------------------------------------------------------------------
# Fee gaps


@dataclass(frozen=True)
class FeeGap:
    match: BundleMatch
    bundle_fee: Fraction  # wei/gas
    public_tip: int  # wei/gas actually kept by the miner

    @property
    def gap(self) -> Fraction:
        return self.bundle_fee - self.public_tip


def fee_gaps(
    matches: Iterable[BundleMatch], blocks_by_number: Mapping[int, ChainBlock]
) -> list[FeeGap]:
    gaps = []
    for m in matches:
        block = blocks_by_number[m.bundle.block_number]
        econ = bundle_economics(m.bundle, block)
        public = next(tx for tx in resolve_bundle(m.bundle, block) if tx.hash == m.public_tx)
        tip = miner_tip_per_gas(public, block.base_fee_per_gas)
        gaps.append(FeeGap(m, econ.actual_max_priority_fee, tip))
    return gaps


def fee_gap_distribution(gaps: Iterable[FeeGap]) -> list[tuple[Fraction, Fraction]]:
    """Sorted (gap in gwei, cumulative fraction of gaps <= it) rows."""
    values = sorted(gwei(g.gap) for g in gaps)
    n = len(values)
    rows = []
    for i, v in enumerate(values, 1):
        if i == n or values[i] != v:
            rows.append((v, Fraction(i, n)))
    return rows


# ---------------------------------------------------------------------------
# DEX call census


def dex_call_census(
    bundles: Iterable[BundleRecord],
    blocks_by_number: Mapping[int, ChainBlock],
    contract_registry: Mapping[str, str],
) -> dict[str, tuple[int, int]]:
    """Per protocol: (distinct bundles, txs) whose recipient is a registered
    contract. A bundle touching several protocols counts once under each."""
    bundle_hits: dict[str, set[tuple[int, int]]] = defaultdict(set)
    tx_hits: Counter[str] = Counter()
    for bundle in bundles:
        block = blocks_by_number.get(bundle.block_number)
        if block is None:
            raise UnresolvedTx(bundle.tx_hashes[0], bundle.block_number)
        for tx in resolve_bundle(bundle, block):
            protocol = contract_registry.get(tx.recipient)
            if protocol is not None:
                bundle_hits[protocol].add(bundle.ref)
                tx_hits[protocol] += 1
    return {
        p: (len(bundle_hits[p]), tx_hits[p])
        for p in sorted(set(bundle_hits) | set(tx_hits))
    }


# ---------------------------------------------------------------------------
# CSV emitters


def write_bundle_econ_csv(econs: Iterable[BundleEconomics], path) -> None:
    write_csv(
        path,
        ["block_number", "bundle_index", "tag", "total_gas", "total_reward_wei",
         "actual_max_priority_fee_gwei"],
        (
            (
                str(e.ref[0]),
                str(e.ref[1]),
                e.tag,
                str(e.total_gas),
                str(e.total_reward),
                fmt_gwei(e.actual_max_priority_fee),
            )
            for e in econs
        ),
    )


def write_match_csv(gaps: Iterable[FeeGap], kind: str, path) -> None:
    write_csv(
        path,
        ["block_number", "bundle_index", "public_tx", "public_tip_gwei",
         "bundle_fee_gwei", "gap_gwei"],
        (
            (
                str(g.match.bundle.block_number),
                str(g.match.bundle.bundle_index),
                g.match.public_tx,
                fmt_gwei(g.public_tip),
                fmt_gwei(g.bundle_fee),
                fmt_gwei(g.gap),
            )
            for g in gaps
            if g.match.kind == kind
        ),
    )


def write_fee_gap_cdf_csv(rows: Iterable[tuple[Fraction, Fraction]], path) -> None:
    write_csv(
        path,
        ["gap_gwei", "cum_fraction"],
        ((fmt_fixed(v, 9), fmt_fixed(frac, 6)) for v, frac in rows),
    )


def write_dex_census_csv(census: Mapping[str, tuple[int, int]], path) -> None:
    write_csv(
        path,
        ["protocol", "bundles", "txs"],
        ((p, str(b), str(t)) for p, (b, t) in sorted(census.items())),
    )


def write_tx_econ_csv(blocks: Iterable[ChainBlock], path) -> None:
    """Per-tx gas-price economics for eth blocks (gwei, 9 digits)."""

    def rows():
        for block in blocks:
            base = block.base_fee_per_gas
            for tx in block.txs:
                if not isinstance(tx, EthTx):
                    raise ValueError("tx economics apply to eth blocks")
                price = effective_gas_price(tx, base)
                yield (
                    tx.hash,
                    str(block.height),
                    fmt_gwei(base),
                    fmt_gwei(price),
                    fmt_gwei(price - base),
                    str(tx_miner_reward(tx, base)),
                )

    write_csv(
        path,
        ["hash", "block_number", "base_fee_gwei", "gas_price_gwei", "tip_gwei",
         "miner_reward_wei"],
        rows(),
    )
