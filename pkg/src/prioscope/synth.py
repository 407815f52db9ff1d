"""Seeded synthetic corpora with known ground truth.

Everything is derived from a SplitMix64 stream (Steele/Lea/Flood constants:
increment 0x9E3779B97F4A7C15, mixers 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB) over pure integer arithmetic, so a given spec produces
byte-identical files on any platform. Plants are constructed to be exactly
recoverable:

* accelerated txs get strictly distinct fee metrics below the organic
  minimum and sit at positions 1..k; with k*100 <= block size their SPPE is
  guaranteed >= 99 while every organic tx errs weakly downward,
* private txs (and the private legs of planted bundles) are withheld from
  all mempool snapshots,
* capture-pattern bundles are appended at the tail of their blocks, public
  leg first seen in a snapshot, and satisfy exactly the heuristic
  conditions; decoy bundles violate them by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .errors import InfeasibleSpec
from .ingest import block_to_line, bundle_to_line, snapshot_to_line
from .model import BtcTx, BundleRecord, ChainBlock, EthTx, MempoolSnapshot

_MASK64 = (1 << 64) - 1
_GWEI = 10**9

BTC_BASE_HEIGHT = 700_000
ETH_BASE_HEIGHT = 15_000_000
BASE_TIMESTAMP = 1_600_000_000
BLOCK_SPACING = 600

POOLS = ("PoolA", "PoolB", "PoolC", "PoolD", "PoolE")
_ETH_POOL_ADDR = {p: f"{0xAA00 + i:040x}" for i, p in enumerate(POOLS)}


class SplitMix64:
    """The reference SplitMix64 sequence; fixed constants, 64-bit wrapping."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def hex_id(self, prefix: str, length: int) -> str:
        out = prefix
        while len(out) < length:
            out += f"{self.next_u64():016x}"
        return out[:length]


def _log_uniform(rng: SplitMix64, lo: int, hi: int) -> int:
    """Integer roughly log-uniform on [lo, hi]: uniform decade, then uniform
    within it. Avoids floating point entirely."""
    bounds = [lo]
    p = 10
    while p <= hi:
        if p > lo:
            bounds.append(p)
        p *= 10
    bounds.append(hi + 1)
    i = rng.below(len(bounds) - 1)
    return bounds[i] + rng.below(bounds[i + 1] - bounds[i])


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 42
    chain: str = "btc"
    blocks: int = 5
    txs_lo: int = 100
    txs_hi: int = 140
    fee_lo: int = 1  # sat/vbyte for btc, gwei tip for eth
    fee_hi: int = 1000
    accel_per_block: int = 1
    h2_bundles: int = 0
    h3_bundles: int = 0
    decoy_bundles: int = 0
    private_share: Fraction = Fraction(1, 20)

    def __post_init__(self):
        object.__setattr__(self, "private_share", Fraction(self.private_share))
        self._validate()

    def _validate(self) -> None:
        if self.chain not in ("btc", "eth"):
            raise InfeasibleSpec(f"unknown chain {self.chain!r}")
        if self.blocks < 1:
            raise InfeasibleSpec("need at least one block")
        if not 1 <= self.txs_lo <= self.txs_hi:
            raise InfeasibleSpec("txs_per_block range must satisfy 1 <= lo <= hi")
        if not 1 <= self.fee_lo <= self.fee_hi:
            raise InfeasibleSpec("fee range must satisfy 1 <= lo <= hi")
        if self.accel_per_block < 0 or min(self.h2_bundles, self.h3_bundles, self.decoy_bundles) < 0:
            raise InfeasibleSpec("plant counts must be >= 0")
        if self.accel_per_block > 999:
            raise InfeasibleSpec("at most 999 accelerations per block")
        if self.accel_per_block and 100 * self.accel_per_block > self.txs_lo:
            raise InfeasibleSpec(
                "accelerated plants need blocks of >= 100 txs each to guarantee SPPE >= 99"
            )
        if not 0 <= self.private_share < 1:
            raise InfeasibleSpec("private_share must be in [0, 1)")
        total_bundles = self.h2_bundles + self.h3_bundles + self.decoy_bundles
        if total_bundles and self.chain != "eth":
            raise InfeasibleSpec("bundle plants require an eth corpus")
        bundle_blocks = -(-total_bundles // 3) if total_bundles else 0
        if total_bundles and self.txs_lo < 10:
            raise InfeasibleSpec("bundle plants need blocks of >= 10 txs")
        if bundle_blocks + (1 if self.accel_per_block else 0) > self.blocks:
            raise InfeasibleSpec(
                f"{bundle_blocks} bundle-hosting blocks plus acceleration blocks "
                f"exceed {self.blocks} total blocks"
            )

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InfeasibleSpec(f"unknown spec fields: {sorted(unknown)}")
        if "private_share" in raw:
            raw["private_share"] = Fraction(str(raw["private_share"]))
        return cls(**raw)


@dataclass(frozen=True)
class GroundTruth:
    accelerated: frozenset[str]
    private: frozenset[str]
    h2_bundles: tuple[tuple[int, int], ...]
    h3_bundles: tuple[tuple[int, int], ...]

    def to_manifest(self) -> dict:
        return {
            "accelerated": sorted(self.accelerated),
            "private": sorted(self.private),
            "h2_bundles": [list(r) for r in sorted(self.h2_bundles)],
            "h3_bundles": [list(r) for r in sorted(self.h3_bundles)],
        }

    @classmethod
    def from_manifest(cls, manifest: dict) -> "GroundTruth":
        return cls(
            accelerated=frozenset(manifest["accelerated"]),
            private=frozenset(manifest["private"]),
            h2_bundles=tuple(tuple(r) for r in manifest["h2_bundles"]),
            h3_bundles=tuple(tuple(r) for r in manifest["h3_bundles"]),
        )


class _Builder:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.rng = SplitMix64(spec.seed)
        self.blocks: list[ChainBlock] = []
        self.bundles: list[BundleRecord] = []
        self.public: list[str] = []  # ids that must appear in a snapshot
        self.accelerated: set[str] = set()
        self.private: set[str] = set()
        self.h2_refs: list[tuple[int, int]] = []
        self.h3_refs: list[tuple[int, int]] = []
        self._bundle_serial = 0

    # -- transaction factories ------------------------------------------

    def _organic_btc(self) -> BtcTx:
        rng = self.rng
        vsize = 100 + rng.below(901)
        rate = _log_uniform(rng, self.spec.fee_lo, self.spec.fee_hi)
        return BtcTx(
            txid=rng.hex_id("aa", 64),
            vsize=vsize,
            fee=rate * vsize,
            inputs=((rng.hex_id("ee", 64), rng.below(4)),),
            total_output_value=10_000 + rng.below(10**9),
        )

    def _organic_eth(self, base_fee: int) -> EthTx:
        rng = self.rng
        tip = _log_uniform(rng, self.spec.fee_lo, self.spec.fee_hi) * _GWEI
        return EthTx(
            hash=rng.hex_id("aa", 64),
            issuer=rng.hex_id("bb", 40),
            recipient=rng.hex_id("cc", 40),
            gas_used=21_000 + rng.below(180_001),
            max_fee_per_gas=base_fee + tip + rng.below(6) * _GWEI,
            max_priority_fee_per_gas=tip,
            coinbase_transfer=0,
            status="ok",
        )

    def _tail_eth(self, issuer: str, tip: int, transfer: int, base_fee: int) -> EthTx:
        rng = self.rng
        return EthTx(
            hash=rng.hex_id("ba", 64),
            issuer=issuer,
            recipient=rng.hex_id("cc", 40),
            gas_used=60_000 + rng.below(120_001),
            max_fee_per_gas=base_fee + tip,
            max_priority_fee_per_gas=tip,
            coinbase_transfer=transfer,
            status="ok",
        )

    # -- block assembly ---------------------------------------------------

    def _sample_private(self, txs: Iterable[BtcTx | EthTx]) -> None:
        share = self.spec.private_share
        for tx in txs:
            tx_id = tx.txid if isinstance(tx, BtcTx) else tx.hash
            if share and self.rng.below(share.denominator) < share.numerator:
                self.private.add(tx_id)
            else:
                self.public.append(tx_id)

    def _btc_block(self, height: int, ts: int, pool: str, accel: int) -> ChainBlock:
        rng = self.rng
        n = self.spec.txs_lo + rng.below(self.spec.txs_hi - self.spec.txs_lo + 1)
        organic = sorted(
            (self._organic_btc() for _ in range(n - accel)),
            key=lambda t: t.fee_rate(),
            reverse=True,
        )
        planted = []
        for i in range(1, accel + 1):
            tx = BtcTx(
                txid=rng.hex_id("ac", 64),
                vsize=1000,
                fee=accel - i + 1,  # strictly descending rates, all below organic
                inputs=((rng.hex_id("ee", 64), 0),),
                total_output_value=10_000 + rng.below(10**9),
            )
            planted.append(tx)
            self.accelerated.add(tx.txid)
            self.public.append(tx.txid)
        coinbase = BtcTx(
            txid=rng.hex_id("cb", 64),
            vsize=200,
            fee=0,
            inputs=(),
            total_output_value=625_000_000,
        )
        self._sample_private(organic)
        return ChainBlock(
            chain="btc",
            height=height,
            timestamp=ts,
            miner_marker=f"/{pool}/node/",
            base_fee_per_gas=None,
            txs=tuple([coinbase] + planted + organic),
        )

    def _eth_block(
        self, height: int, ts: int, pool: str, accel: int, bundle_kinds: list[str]
    ) -> ChainBlock:
        rng = self.rng
        base_fee = (10 + rng.below(191)) * _GWEI
        n = self.spec.txs_lo + rng.below(self.spec.txs_hi - self.spec.txs_lo + 1)
        tail_len = sum(2 if k in ("h2", "decoy2") else 3 for k in bundle_kinds)
        organic = sorted(
            (self._organic_eth(base_fee) for _ in range(max(n - accel - tail_len, 1))),
            key=lambda t: t.max_priority_fee_per_gas,
            reverse=True,
        )
        planted = []
        for i in range(1, accel + 1):
            tip = accel - i + 1  # wei; far below the >= 1 gwei organic tips
            tx = EthTx(
                hash=rng.hex_id("ac", 64),
                issuer=rng.hex_id("bb", 40),
                recipient=rng.hex_id("cc", 40),
                gas_used=21_000 + rng.below(180_001),
                max_fee_per_gas=base_fee + tip,
                max_priority_fee_per_gas=tip,
                coinbase_transfer=0,
                status="ok",
            )
            planted.append(tx)
            self.accelerated.add(tx.hash)
            self.public.append(tx.hash)
        self._sample_private(organic)

        tail: list[EthTx] = []
        for kind in bundle_kinds:
            serial = self._bundle_serial
            self._bundle_serial += 1
            issuer_a = rng.hex_id("dd", 40)
            issuer_b = rng.hex_id("df", 40)
            if kind == "h2":
                txs = [
                    self._tail_eth(issuer_a, 1000 + serial, 0, base_fee),
                    self._tail_eth(issuer_b, 0, 4 * 10**14 + serial, base_fee),
                ]
                self.public.append(txs[0].hash)
                self.private.add(txs[1].hash)
            elif kind == "h3":
                txs = [
                    self._tail_eth(issuer_a, 0, 0, base_fee),
                    self._tail_eth(issuer_b, 2000 + serial, 0, base_fee),
                    self._tail_eth(issuer_a, 0, 5 * 10**14 + serial, base_fee),
                ]
                self.public.append(txs[1].hash)
                self.private.update((txs[0].hash, txs[2].hash))
            elif kind == "decoy2":
                txs = [
                    self._tail_eth(issuer_a, 700 + serial, 0, base_fee),
                    self._tail_eth(issuer_b, 600 + serial, 0, base_fee),
                ]
                self.public.extend(t.hash for t in txs)
            else:  # decoy3
                txs = [
                    self._tail_eth(issuer_a, 500 + serial, 0, base_fee),
                    self._tail_eth(issuer_b, 400 + serial, 0, base_fee),
                    self._tail_eth(issuer_a, 300 + serial, 0, base_fee),
                ]
                self.public.extend(t.hash for t in txs)
            record = BundleRecord(
                block_number=height,
                bundle_index=len([b for b in self.bundles if b.block_number == height]),
                tx_hashes=tuple(t.hash for t in txs),
                tag="rogue" if kind.startswith("decoy") else "flashbots",
            )
            self.bundles.append(record)
            if kind == "h2":
                self.h2_refs.append(record.ref)
            elif kind == "h3":
                self.h3_refs.append(record.ref)
            tail.extend(txs)

        return ChainBlock(
            chain="eth",
            height=height,
            timestamp=ts,
            miner_marker=_ETH_POOL_ADDR[pool],
            base_fee_per_gas=base_fee,
            txs=tuple(planted + organic + tail),
        )

    # -- corpus assembly --------------------------------------------------

    def build(self) -> GroundTruth:
        spec = self.spec
        kinds = (
            ["h2"] * spec.h2_bundles
            + ["h3"] * spec.h3_bundles
            + [("decoy2" if i % 2 == 0 else "decoy3") for i in range(spec.decoy_bundles)]
        )
        per_block_kinds: list[list[str]] = []
        for i in range(0, len(kinds), 3):
            per_block_kinds.append(kinds[i : i + 3])
        base_height = BTC_BASE_HEIGHT if spec.chain == "btc" else ETH_BASE_HEIGHT
        for i in range(spec.blocks):
            height = base_height + i
            ts = BASE_TIMESTAMP + i * BLOCK_SPACING
            pool = POOLS[self.rng.below(len(POOLS))]
            bundle_kinds = per_block_kinds[i] if i < len(per_block_kinds) else []
            accel = 0 if bundle_kinds else spec.accel_per_block
            if spec.chain == "btc":
                self.blocks.append(self._btc_block(height, ts, pool, accel))
            else:
                self.blocks.append(self._eth_block(height, ts, pool, accel, bundle_kinds))
        return GroundTruth(
            accelerated=frozenset(self.accelerated),
            private=frozenset(self.private),
            h2_bundles=tuple(self.h2_refs),
            h3_bundles=tuple(self.h3_refs),
        )

    def snapshots(self) -> list[MempoolSnapshot]:
        buckets: list[set[str]] = [set(), set(), set()]
        for tx_id in self.public:
            buckets[self.rng.below(3)].add(tx_id)
        return [
            MempoolSnapshot(BASE_TIMESTAMP - 300 + 100 * i, frozenset(b))
            for i, b in enumerate(buckets)
        ]


def gen_corpus(spec: SynthSpec, out_dir: str | Path) -> GroundTruth:
    """Generate a corpus under ``out_dir`` in the standard ingest formats,
    plus ``ground_truth.json``; deterministic for a fixed spec."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    builder = _Builder(spec)
    truth = builder.build()
    snapshots = builder.snapshots()

    with open(out / "blocks.jsonl", "w", encoding="utf-8") as fh:
        for block in builder.blocks:
            fh.write(block_to_line(block) + "\n")
    with open(out / "snapshots.jsonl", "w", encoding="utf-8") as fh:
        for snap in snapshots:
            fh.write(snapshot_to_line(snap) + "\n")
    with open(out / "bundles.jsonl", "w", encoding="utf-8") as fh:
        for bundle in builder.bundles:
            fh.write(bundle_to_line(bundle) + "\n")
    with open(out / "pools.tsv", "w", encoding="utf-8") as fh:
        for pool in POOLS:
            marker = _ETH_POOL_ADDR[pool] if spec.chain == "eth" else f"/{pool}/"
            fh.write(f"{marker}\t{pool}\n")
    with open(out / "ground_truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth.to_manifest(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    return truth
