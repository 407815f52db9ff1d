"""Position-prediction metrics and acceleration forensics.

The central quantity is the signed position prediction error (SPPE) of a
transaction: sort a block's transactions by their on-chain fee metric
(satoshi per vbyte for btc, miner tip per gas for eth) in descending order to
obtain predicted positions, then measure how far the observed position
deviates, as a percentage of the block's transaction count. Equal-fee
transactions share a predicted range [lo, hi] and any observed position
inside it counts as zero error. Positive SPPE means the transaction sat
higher in the block than its fee justifies - the signature of an off-chain
("dark") fee.

Bitcoin blocks are first stripped of the coinbase and of child-pays-for-parent
clusters, whose ordering is fee-dependent across transactions and would
otherwise register as spurious misplacement.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import EmptyBlock
from .ingest import PoolRegistry, UNKNOWN_POOL, attribute_pool
from .model import BtcTx, ChainBlock, EthTx, MempoolSnapshot, PositionReport, miner_tip_per_gas
from .util import SummaryStats, fmt_pct, summarize, window_start_utc, write_csv

log = logging.getLogger("prioscope.priometrics")

# Flagging thresholds used throughout the reports: "strict" only fires for
# bottom-fee transactions placed at the very top of large blocks.
SPPE_STRICT = Fraction(99)
SPPE_BROAD = Fraction(50)


# ---------------------------------------------------------------------------
# CPFP exclusion


def cpfp_partition(block: ChainBlock) -> tuple[frozenset[str], list[BtcTx]]:
    """Split a btc block into (excluded txids, retained txs in block order).

    A transaction is excluded iff it spends an output of another tx in the
    same block or one of its own outputs is spent within the block: entire
    intra-block dependency clusters are removed. The coinbase is always
    dropped from the retained list.
    """
    if block.chain != "btc":
        raise ValueError("cpfp_partition applies to btc blocks")
    ids = {tx.txid for tx in block.txs}
    parent: dict[str, str] = {i: i for i in ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for tx in block.txs:
        for src, _ in tx.inputs:
            if src in ids:
                union(tx.txid, src)

    sizes = Counter(find(i) for i in ids)
    excluded = frozenset(i for i in ids if sizes[find(i)] > 1)
    retained = [tx for tx in block.txs[1:] if tx.txid not in excluded]
    return excluded, retained


# ---------------------------------------------------------------------------
# Position prediction and SPPE


def _fee_keys(txs: Sequence[BtcTx] | Sequence[EthTx], chain: str, base_fee: int | None):
    if chain == "btc":
        return [tx.fee_rate() for tx in txs]
    if base_fee is None:
        raise ValueError("eth position prediction requires the block base fee")
    return [miner_tip_per_gas(tx, base_fee) for tx in txs]


def predict_positions(
    txs: Sequence[BtcTx] | Sequence[EthTx],
    chain: str,
    base_fee: int | None = None,
) -> list[tuple[int, int]]:
    """Fee-predicted position range for each tx, aligned with input order.

    Sorting by the fee metric descending defines positions 1..N; a group of k
    fee-tied transactions occupying sorted slots [i, i+k-1] all receive
    (lo=i, hi=i+k-1).
    """
    keys = _fee_keys(txs, chain, base_fee)
    order = sorted(range(len(txs)), key=lambda i: keys[i], reverse=True)
    predicted: list[tuple[int, int]] = [(0, 0)] * len(txs)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and keys[order[j]] == keys[order[i]]:
            j += 1
        for slot in order[i:j]:
            predicted[slot] = (i + 1, j)
        i = j
    return predicted


def position_report(
    block: ChainBlock,
    retained: Sequence[BtcTx] | Sequence[EthTx],
    pool: str = UNKNOWN_POOL,
) -> list[PositionReport]:
    """Per-tx predicted-vs-observed report over the retained transactions.

    Observed positions are re-indexed 1..N over ``retained``. With predicted
    range [lo, hi] and observed p: d = 0 inside the range, lo - p above it,
    hi - p below it; sppe = 100 * d / N.
    """
    n = len(retained)
    if n == 0:
        raise EmptyBlock(block.height)
    predicted = predict_positions(retained, block.chain, block.base_fee_per_gas)
    reports = []
    for obs, (tx, (lo, hi)) in enumerate(zip(retained, predicted), 1):
        if lo <= obs <= hi:
            d = 0
        elif obs < lo:
            d = lo - obs
        else:
            d = hi - obs
        sppe = Fraction(100 * d, n)
        reports.append(
            PositionReport(
                tx_id=tx.txid if isinstance(tx, BtcTx) else tx.hash,
                observed_position=obs,
                predicted_lo=lo,
                predicted_hi=hi,
                ppe=abs(sppe),
                sppe=sppe,
                height=block.height,
                pool=pool,
            )
        )
    return reports


def block_ppe(reports: Sequence[PositionReport]) -> Fraction:
    """Block-level PPE: mean of the per-tx error magnitudes."""
    if not reports:
        raise ValueError("block_ppe of empty report list")
    return Fraction(sum(r.ppe for r in reports), len(reports))


def analyze_block(
    block: ChainBlock, registry: PoolRegistry | None = None
) -> list[PositionReport] | None:
    """Attribution + exclusions + position report for one block.

    Returns None for blocks with no eligible transactions (callers count
    those instead of failing the corpus pass).
    """
    pool = attribute_pool(block, registry) if registry is not None else UNKNOWN_POOL
    if block.chain == "btc":
        _, retained = cpfp_partition(block)
    else:
        retained = list(block.txs)
    try:
        return position_report(block, retained, pool=pool)
    except EmptyBlock:
        return None


# ---------------------------------------------------------------------------
# Acceleration flagging


def _check_threshold(threshold: Fraction) -> Fraction:
    threshold = Fraction(threshold)
    if not 0 < threshold <= 100:
        raise ValueError(f"threshold must be in (0, 100], got {threshold}")
    return threshold


@dataclass(frozen=True)
class PoolFlagShare:
    blocks: int
    flagged_blocks: int

    @property
    def share(self) -> Fraction:
        return Fraction(100 * self.flagged_blocks, self.blocks)


@dataclass(frozen=True)
class FlagResult:
    threshold: Fraction
    flagged: frozenset[str]
    pool_blocks: dict[str, PoolFlagShare]


def flag_accelerated(
    reports: Iterable[PositionReport], threshold: Fraction | int = SPPE_STRICT
) -> FlagResult:
    """Transactions with sppe >= threshold, plus the per-pool fraction of
    blocks containing at least one flagged tx."""
    threshold = _check_threshold(threshold)
    flagged: set[str] = set()
    blocks_by_pool: dict[str, set[int]] = defaultdict(set)
    flagged_blocks_by_pool: dict[str, set[int]] = defaultdict(set)
    for r in reports:
        blocks_by_pool[r.pool].add(r.height)
        if r.sppe >= threshold:
            flagged.add(r.tx_id)
            flagged_blocks_by_pool[r.pool].add(r.height)
    pool_blocks = {
        pool: PoolFlagShare(len(heights), len(flagged_blocks_by_pool[pool]))
        for pool, heights in blocks_by_pool.items()
    }
    return FlagResult(threshold, frozenset(flagged), pool_blocks)


# ---------------------------------------------------------------------------
# Private-inclusion detection


def first_seen_times(snapshots: Sequence[MempoolSnapshot]) -> dict[str, int]:
    """Earliest snapshot timestamp at which each tx was observed pending."""
    first: dict[str, int] = {}
    for snap in snapshots:
        for tx in snap.pending:
            if tx not in first:
                first[tx] = snap.timestamp
    return first


@dataclass(frozen=True)
class PrivateReport:
    per_block: dict[int, frozenset[str]]
    per_pool: dict[str, int]
    uncovered_blocks: int


def detect_private_inclusions(
    blocks: Iterable[ChainBlock],
    snapshots: Sequence[MempoolSnapshot],
    registry: PoolRegistry | None = None,
) -> PrivateReport:
    """Transactions included in a block but never observed pending before it.

    A tx is private iff it appears in no snapshot with timestamp strictly
    before its block's. Blocks preceded by no snapshot at all are excluded
    and counted (privacy is undecidable for them). The btc coinbase is never
    pending by construction and is ignored.
    """
    first_seen = first_seen_times(snapshots)
    earliest = snapshots[0].timestamp if snapshots else None
    per_block: dict[int, frozenset[str]] = {}
    per_pool: Counter[str] = Counter()
    uncovered = 0
    for block in blocks:
        if earliest is None or block.timestamp <= earliest:
            uncovered += 1
            log.debug("block %d has no preceding snapshot", block.height)
            continue
        ids = block.tx_ids()
        if block.chain == "btc":
            ids = ids[1:]
        private = frozenset(
            tx for tx in ids
            if tx not in first_seen or first_seen[tx] >= block.timestamp
        )
        per_block[block.height] = private
        if private:
            pool = attribute_pool(block, registry) if registry is not None else UNKNOWN_POOL
            per_pool[pool] += len(private)
    return PrivateReport(per_block, dict(per_pool), uncovered)


# ---------------------------------------------------------------------------
# Windowed shares


@dataclass(frozen=True)
class WindowShares:
    """Counts per (window start, pool) with exact percentage shares."""

    window: str
    unit: str
    counts: dict[tuple[str, str], int]
    totals: dict[str, int]

    def share(self, window_start: str, pool: str) -> Fraction:
        return Fraction(100 * self.counts.get((window_start, pool), 0), self.totals[window_start])

    def subset_share(self, window_start: str, pools: Iterable[str]) -> Fraction:
        hits = sum(self.counts.get((window_start, p), 0) for p in set(pools))
        return Fraction(100 * hits, self.totals[window_start])

    def rows(self) -> list[tuple[str, str, int, Fraction]]:
        return [
            (w, pool, n, self.share(w, pool))
            for (w, pool), n in sorted(self.counts.items())
        ]


def pool_shares(
    blocks: Iterable[ChainBlock], registry: PoolRegistry, window: str = "day"
) -> WindowShares:
    """Blocks mined per pool per UTC calendar window, as counts and shares."""
    counts: Counter[tuple[str, str]] = Counter()
    totals: Counter[str] = Counter()
    for block in blocks:
        start = window_start_utc(block.timestamp, window)
        counts[(start, attribute_pool(block, registry))] += 1
        totals[start] += 1
    if not totals:
        raise ValueError("pool_shares requires at least one block")
    return WindowShares(window, "blocks", dict(counts), dict(totals))


def accel_share_timeseries(
    txids: Iterable[str],
    blocks: Iterable[ChainBlock],
    registry: PoolRegistry,
    window: str = "month",
) -> WindowShares:
    """Per-window share of accelerated-tx inclusions attributed to each pool."""
    wanted = set(txids)
    counts: Counter[tuple[str, str]] = Counter()
    totals: Counter[str] = Counter()
    for block in blocks:
        hits = sum(1 for tx in block.tx_ids() if tx in wanted)
        if not hits:
            continue
        start = window_start_utc(block.timestamp, window)
        counts[(start, attribute_pool(block, registry))] += hits
        totals[start] += hits
    return WindowShares(window, "txs", dict(counts), dict(totals))


# ---------------------------------------------------------------------------
# Delay / position statistics


@dataclass(frozen=True)
class GroupDelayStats:
    delay_blocks: SummaryStats | None
    percentile_position: SummaryStats | None
    unconfirmed: frozenset[str]


@dataclass(frozen=True)
class DelayPositionStats:
    accelerated: GroupDelayStats | None
    non_accelerated: GroupDelayStats | None


def delay_position_stats(
    flagged: Iterable[str],
    first_seen: Mapping[str, int],
    blocks: Iterable[ChainBlock],
) -> DelayPositionStats:
    """Inclusion delay and in-block position summaries, split by group.

    For each tx in ``first_seen``: the reference block is the first block (in
    height order) mined at or after the first-seen time, and
    delay = inclusion_height - reference_height + 1, so a tx included in the
    very next mined block has delay 1. Percentile position is
    100 * position / block size over the raw block (coinbase included).
    Transactions never included are reported separately per group.
    """
    flagged = set(flagged)
    heights: list[tuple[int, int]] = []  # (height, timestamp) of every block
    included: dict[str, tuple[int, int, int]] = {}  # tx -> (height, position, size)
    wanted = set(first_seen)
    for block in blocks:
        heights.append((block.height, block.timestamp))
        if not wanted:
            continue
        size = len(block.txs)
        for pos, tx in enumerate(block.tx_ids(), 1):
            if tx in wanted:
                included[tx] = (block.height, pos, size)
    heights.sort()

    def reference_height(ts: int) -> int | None:
        for h, block_ts in heights:
            if block_ts >= ts:
                return h
        return None

    groups: dict[str, tuple[list[int], list[Fraction], set[str]]] = {
        "accelerated": ([], [], set()),
        "non_accelerated": ([], [], set()),
    }
    for tx, seen_ts in first_seen.items():
        delays, percentiles, unconfirmed = groups[
            "accelerated" if tx in flagged else "non_accelerated"
        ]
        if tx not in included:
            unconfirmed.add(tx)
            continue
        height, pos, size = included[tx]
        ref = reference_height(seen_ts)
        delay = height - ref + 1 if ref is not None and ref <= height else 1
        delays.append(delay)
        percentiles.append(Fraction(100 * pos, size))

    def build(name: str) -> GroupDelayStats | None:
        delays, percentiles, unconfirmed = groups[name]
        if not delays and not unconfirmed:
            return None
        if not delays:
            return GroupDelayStats(None, None, frozenset(unconfirmed))
        return GroupDelayStats(summarize(delays), summarize(percentiles), frozenset(unconfirmed))

    return DelayPositionStats(build("accelerated"), build("non_accelerated"))


# ---------------------------------------------------------------------------
# Value transferred and label crosschecks


@dataclass(frozen=True)
class ValueReport:
    flagged_sat: int
    total_sat: int

    @property
    def share(self) -> Fraction:
        if self.total_sat == 0:
            return Fraction(0)
        return Fraction(100 * self.flagged_sat, self.total_sat)


def value_transferred(flagged: Iterable[str], blocks: Iterable[ChainBlock]) -> ValueReport:
    """Output value carried by flagged txs versus all non-coinbase txs."""
    flagged = set(flagged)
    flagged_sat = 0
    total_sat = 0
    for block in blocks:
        for tx in block.txs[1:] if block.chain == "btc" else block.txs:
            if not isinstance(tx, BtcTx):
                raise ValueError("value_transferred applies to btc corpora")
            total_sat += tx.total_output_value
            if tx.txid in flagged:
                flagged_sat += tx.total_output_value
    return ValueReport(flagged_sat, total_sat)


@dataclass(frozen=True)
class CrosscheckCounts:
    both: int
    flagged_only: int
    labeled_only: int


def accel_label_crosscheck(flagged: Iterable[str], labels: Iterable[str]) -> CrosscheckCounts:
    """Confusion counts between metric-flagged txs and external labels."""
    flagged = set(flagged)
    labels = set(labels)
    return CrosscheckCounts(
        both=len(flagged & labels),
        flagged_only=len(flagged - labels),
        labeled_only=len(labels - flagged),
    )


# ---------------------------------------------------------------------------
# CSV emitters (fixed column orders; percentages 2 digits, half-even)


def write_sppe_csv(reports: Iterable[PositionReport], path) -> None:
    write_csv(
        path,
        ["txid", "height", "pool", "p_obs", "lo", "hi", "ppe", "sppe"],
        (
            (
                r.tx_id,
                str(r.height),
                r.pool,
                str(r.observed_position),
                str(r.predicted_lo),
                str(r.predicted_hi),
                fmt_pct(r.ppe),
                fmt_pct(r.sppe),
            )
            for r in reports
        ),
    )


def write_pool_shares_csv(shares: WindowShares, path) -> None:
    write_csv(
        path,
        ["window_start", "pool", shares.unit, "share_pct"],
        ((w, pool, str(n), fmt_pct(s)) for w, pool, n, s in shares.rows()),
    )


def write_flag_shares_csv(result: FlagResult, path) -> None:
    write_csv(
        path,
        ["pool", "blocks", "flagged_blocks", "share_pct"],
        (
            (pool, str(fs.blocks), str(fs.flagged_blocks), fmt_pct(fs.share))
            for pool, fs in sorted(result.pool_blocks.items())
        ),
    )


def write_private_csv(
    report: PrivateReport, pools_by_height: Mapping[int, str], path
) -> None:
    rows = []
    for height in sorted(report.per_block):
        pool = pools_by_height.get(height, UNKNOWN_POOL)
        for tx in sorted(report.per_block[height]):
            rows.append((tx, str(height), pool))
    write_csv(path, ["txid", "height", "pool"], rows)


def _stats_row(group: str, metric: str, s: SummaryStats) -> tuple[str, ...]:
    return (
        group,
        metric,
        str(s.n),
        fmt_pct(s.minimum),
        fmt_pct(s.p25),
        fmt_pct(s.median),
        fmt_pct(s.p75),
        fmt_pct(s.maximum),
        fmt_pct(s.mean),
    )


def write_delay_stats_csv(stats: DelayPositionStats, path) -> None:
    rows = []
    for group, gs in (("accelerated", stats.accelerated), ("non_accelerated", stats.non_accelerated)):
        if gs is None or gs.delay_blocks is None:
            continue
        rows.append(_stats_row(group, "delay_blocks", gs.delay_blocks))
        rows.append(_stats_row(group, "percentile_position", gs.percentile_position))
    write_csv(
        path,
        ["group", "metric", "n", "min", "p25", "median", "p75", "max", "mean"],
        rows,
    )
