"""Fixture corpora used across the test suite.

Two fixed experiment data sets are encoded here:

* an Ethereum private-relay inclusion experiment: 8 transactions (4 public,
  4 private) across 8 blocks, with wei-precision fee fields whose 8-digit
  gwei display strings are recorded alongside,
* a Bitcoin acceleration experiment: 10 low-fee-rate transactions
  accelerated off-chain, with their inclusion blocks, positions, and
  per-transaction block delays.

Fixture lines are produced with plain ``json.dumps`` on purpose, independent
of the package serializers, so parser round-trip bugs cannot cancel out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path


def _ts(text: str) -> int:
    return int(datetime.strptime(text, "%Y-%m-%d %H:%M:%S").replace(tzinfo=timezone.utc).timestamp())


# ---------------------------------------------------------------------------
# Ethereum private-relay experiment


@dataclass(frozen=True)
class EthExperimentRow:
    kind: str  # public | private
    tx_hash: str
    block_number: int
    miner_pool: str
    base_fee_wei: int
    max_fee_wei: int
    tip_wei: int
    timestamp: int
    # printed 8-digit gwei / ETH display strings for the same quantities
    printed_base: str
    printed_max: str
    printed_tip: str
    printed_gas_price: str
    printed_fee_eth: str

    @property
    def gas_price_wei(self) -> int:
        return min(self.max_fee_wei, self.base_fee_wei + self.tip_wei)


ETH_EXPERIMENT = [
    EthExperimentRow(
        "public", "bbe88eae757acf6697d498575dd1d50b3ad9915318cd1ff8d409210d20a4f000",
        13183516, "Nanopool", 88980829386, 116528357490, 1728366048,
        _ts("2021-09-08 06:39:18"),
        "88.98082939", "116.52835749", "1.72836605", "90.70919543", "0.00190489",
    ),
    EthExperimentRow(
        "private", "c46b7556a20865c9f50166373baf7094104f300ab26ad8e1de894e1318ead538",
        13183520, "Babel Pool", 105513914586, 120565862320, 1728366048,
        _ts("2021-09-08 06:40:29"),
        "105.51391459", "120.56586232", "1.72836605", "107.24228063", "0.00225209",
    ),
    EthExperimentRow(
        "public", "6d994f516f43b8ed3763fe4f81c7cb86146203fda1047cc85e697eefa7c1aadd",
        13183561, "Binance", 114954828460, 137640147050, 1301006826,
        _ts("2021-09-08 06:49:26"),
        "114.95482846", "137.64014705", "1.30100683", "116.25583529", "0.00244137",
    ),
    EthExperimentRow(
        "private", "a4d4ae2f6f3a798dc6cf5d5f4e15222320d3ee90b023763efe0017e51142ebf5",
        13183565, "Spark Pool", 113450599606, 137640147050, 1301006826,
        _ts("2021-09-08 06:50:12"),
        "113.45059961", "137.64014705", "1.30100683", "114.75160643", "0.00240978",
    ),
    EthExperimentRow(
        "public", "725743c1700241a6e89b957faf963018f2d169f7f1ec6b9256a92811510a6c45",
        13183634, "Unknown", 123272161850, 135213932220, 2108056850,
        _ts("2021-09-08 07:06:31"),
        "123.27216185", "135.21393222", "2.10805685", "125.38021870", "0.00263298",
    ),
    EthExperimentRow(
        "private", "f2beec913ed6c0667fdde4829a004fe9418916af22218d77adf5f38a7c15cdf1",
        13183635, "Spark Pool", 120495620770, 135213932220, 2108056850,
        _ts("2021-09-08 07:06:44"),
        "120.49562077", "135.21393222", "2.10805685", "122.60367762", "0.00257468",
    ),
    EthExperimentRow(
        "public", "e21695cc9e1f29f45f38b0fd8323a6e928bd7b55dc84974f217c7042322c1574",
        13183679, "Ethermine", 104695107482, 108952625740, 1701644534,
        _ts("2021-09-08 07:18:37"),
        "104.69510748", "108.95262574", "1.70164453", "106.39675202", "0.00223433",
    ),
    EthExperimentRow(
        "private", "4c482b0416b38de9b2995b986d8c0f974018c0aeda02ce6fdc8b196bce87c76f",
        13183690, "Babel Pool", 83973236546, 108952625740, 1701644534,
        _ts("2021-09-08 07:20:12"),
        "83.97323655", "108.95262574", "1.70164453", "85.67488108", "0.00179917",
    ),
]

_ETH_MINERS = {
    "Nanopool": "1111111111111111111111111111111111111111",
    "Babel Pool": "2222222222222222222222222222222222222222",
    "Binance": "3333333333333333333333333333333333333333",
    "Spark Pool": "4444444444444444444444444444444444444444",
    "Unknown": "9999999999999999999999999999999999999999",
    "Ethermine": "5555555555555555555555555555555555555555",
}


def write_eth_experiment(dir_path: Path) -> dict[str, Path]:
    """Blocks file (one block per experiment tx) plus a pool registry."""
    dir_path.mkdir(parents=True, exist_ok=True)
    blocks = dir_path / "blocks.jsonl"
    with open(blocks, "w", encoding="utf-8") as fh:
        for row in ETH_EXPERIMENT:
            fh.write(json.dumps({
                "chain": "eth",
                "number": row.block_number,
                "timestamp": row.timestamp,
                "miner": _ETH_MINERS[row.miner_pool],
                "base_fee_per_gas_wei": row.base_fee_wei,
                "txs": [{
                    "hash": row.tx_hash,
                    "from": "ab" * 20,
                    "to": "cd" * 20,
                    "gas_used": 21000,
                    "max_fee_per_gas_wei": row.max_fee_wei,
                    "max_priority_fee_per_gas_wei": row.tip_wei,
                    "coinbase_transfer_wei": 0,
                    "status": "ok",
                }],
            }) + "\n")
    pools = dir_path / "pools.tsv"
    with open(pools, "w", encoding="utf-8") as fh:
        for name, addr in _ETH_MINERS.items():
            if name != "Unknown":
                fh.write(f"{addr}\t{name}\n")
    return {"blocks": blocks, "pools": pools}


# ---------------------------------------------------------------------------
# Bitcoin acceleration experiment


@dataclass(frozen=True)
class BtcExperimentRow:
    txid: str
    height: int
    miner_pool: str
    position: int  # 1-indexed raw block position (coinbase is 1)
    delay_blocks: int
    fee_rate: int  # sat per vbyte
    accel_time: int


BTC_EXPERIMENT = [
    BtcExperimentRow(
        "35b18e7a119173c8136c460e45d5d2a87d69304f69546f22ebed2c5f3852dbc1",
        658805, "Huobi", 2, 2, 2, _ts("2020-11-26 19:10:00")),
    BtcExperimentRow(
        "65765c65acc86bde3d305b2594229af0839b3636aabea49e7255521412baede2",
        658898, "F2Pool", 73, 1, 2, _ts("2020-11-27 11:06:00")),
    BtcExperimentRow(
        "0c2098e3b3c993f5fc1d188da3b9d0a8731961bb946c4048d7a99fa83129fbf0",
        658912, "AntPool", 2, 2, 1, _ts("2020-11-27 13:38:00")),
    BtcExperimentRow(
        "1515a78b711558a1508400b36f554d798a31bd97e3852de5bae598e020179af3",
        658971, "Binance", 2, 3, 1, _ts("2020-11-27 21:55:00")),
    BtcExperimentRow(
        "48a0a55252bc029286e4af6215d1673e6744216ffc86b3c7b36eeafe640ddaec",
        659335, "ViaBTC", 3, 1, 1, _ts("2020-11-30 10:09:00")),
    BtcExperimentRow(
        "9a17cfef7e7bda668415a4a4918195669086f0507786a0c971df24a1c3f3734c",
        659341, "Huobi", 2, 2, 1, _ts("2020-11-30 10:28:00")),
    BtcExperimentRow(
        "831b246f748db46d4f52318e39171b0b587165282be3f07135d978ef0795d421",
        659351, "AntPool", 2, 1, 1, _ts("2020-11-30 12:22:00")),
    BtcExperimentRow(
        "1f59bfc1ef2de7b2bc9d3dd3f3e35dba437c25a93d53533a76d604284047096c",
        659355, "F2Pool", 111, 3, 1, _ts("2020-11-30 12:58:00")),
    BtcExperimentRow(
        "6942e0751586aa8f37b6cad4eb036373035d74f40ba36277a7d1ef17ca8c06c3",
        659362, "Huobi", 2, 2, 1, _ts("2020-11-30 14:49:00")),
    BtcExperimentRow(
        "8e49e27c5eb6959e26dec8ab36d4dc6508105447ce8892d71c2837934eae825f",
        659481, "ViaBTC", 6, 1, 2, _ts("2020-12-01 10:40:00")),
]

BTC_POOLS = ("Huobi", "F2Pool", "AntPool", "Binance", "ViaBTC")

_counter = 0


def _fresh_id(prefix: str) -> str:
    global _counter
    _counter += 1
    return f"{prefix}{_counter:0{64 - len(prefix)}x}"


def _btc_tx(txid: str, vsize: int, fee: int, out_sat: int = 1_200_000) -> dict:
    return {
        "txid": txid,
        "vsize": vsize,
        "fee_sat": fee,
        "inputs": [{"txid": _fresh_id("ee"), "vout": 0}],
        "out_sat": out_sat,
    }


def _btc_block(height: int, ts: int, pool: str | None, txs: list[dict]) -> dict:
    coinbase = {
        "txid": _fresh_id("cb"),
        "vsize": 200,
        "fee_sat": 0,
        "inputs": [],
        "out_sat": 625_000_000,
    }
    tag = f"/{pool}/" if pool else "/nobody/"
    return {
        "chain": "btc",
        "height": height,
        "timestamp": ts,
        "coinbase_tag": tag,
        "txs": [coinbase] + txs,
    }


def write_btc_experiment(dir_path: Path, trailing: int = 30) -> dict[str, Path]:
    """Blocks, snapshots, labels and pool registry for the acceleration runs.

    For each experiment tx the corpus contains the block right before its
    acceleration time, the reference block (first mined at/after it), and
    every block up to inclusion, so inclusion delays reproduce exactly. The
    accelerated tx sits at its recorded position among higher-fee-rate
    fillers.
    """
    dir_path.mkdir(parents=True, exist_ok=True)
    blocks_path = dir_path / "blocks.jsonl"
    snaps_path = dir_path / "snapshots.jsonl"
    labels_path = dir_path / "labels.txt"
    pools_path = dir_path / "pools.tsv"

    blocks: list[dict] = []
    for row in BTC_EXPERIMENT:
        ref = row.height - row.delay_blocks + 1
        for height in range(ref - 1, row.height + 1):
            if height == ref - 1:
                ts = row.accel_time - 300
            else:
                ts = row.accel_time + 60 + 600 * (height - ref)
            if height == row.height:
                fillers = [
                    _btc_tx(_fresh_id("ff"), 250, 250 * (150 - i))
                    for i in range(row.position - 2 + trailing)
                ]
                accel = _btc_tx(row.txid, 110, 110 * row.fee_rate, out_sat=900_000)
                txs = fillers[: row.position - 2] + [accel] + fillers[row.position - 2:]
                blocks.append(_btc_block(height, ts, row.miner_pool, txs))
            else:
                txs = [_btc_tx(_fresh_id("ff"), 250, 250 * (40 - i)) for i in range(3)]
                blocks.append(_btc_block(height, ts, None, txs))

    with open(blocks_path, "w", encoding="utf-8") as fh:
        for block in blocks:
            fh.write(json.dumps(block) + "\n")
    with open(snaps_path, "w", encoding="utf-8") as fh:
        for row in BTC_EXPERIMENT:
            fh.write(json.dumps({"timestamp": row.accel_time, "pending": [row.txid]}) + "\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        for row in BTC_EXPERIMENT:
            fh.write(row.txid + "\n")
    with open(pools_path, "w", encoding="utf-8") as fh:
        for pool in BTC_POOLS:
            fh.write(f"/{pool}/\t{pool}\n")
    return {
        "blocks": blocks_path,
        "snapshots": snaps_path,
        "labels": labels_path,
        "pools": pools_path,
    }


# ---------------------------------------------------------------------------
# Daily pool-share fixture: 1000 blocks in one UTC day


POOL_DAY_COUNTS = {
    "F2Pool": 199,   # 19.9%
    "AntPool": 125,  # 12.5%
    "Binance": 96,   # 9.6%
    "Huobi": 81,     # 8.1%
    "ViaBTC": 51,    # 5.1%
    None: 448,       # unattributed remainder
}

POOL_DAY_SUBSET = ("F2Pool", "AntPool", "Binance", "Huobi", "ViaBTC")


def write_pool_day(dir_path: Path) -> dict[str, Path]:
    dir_path.mkdir(parents=True, exist_ok=True)
    blocks_path = dir_path / "blocks.jsonl"
    pools_path = dir_path / "pools.tsv"
    day0 = _ts("2020-12-01 00:00:00")
    height = 660_000
    with open(blocks_path, "w", encoding="utf-8") as fh:
        i = 0
        for pool, count in POOL_DAY_COUNTS.items():
            for _ in range(count):
                fh.write(json.dumps(_btc_block(height + i, day0 + 80 * i, pool, [])) + "\n")
                i += 1
    with open(pools_path, "w", encoding="utf-8") as fh:
        for pool in POOL_DAY_SUBSET:
            fh.write(f"/{pool}/\t{pool}\n")
    return {"blocks": blocks_path, "pools": pools_path}
