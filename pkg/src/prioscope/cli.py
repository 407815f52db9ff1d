"""Command-line surface: ingestion, analyses, and CSV report emission.

Exit codes: 0 success, 1 usage error, 2 data error (malformed or inconsistent
input under the default fail-fast policy). Analysis subcommands are fully
deterministic: identical inputs and flags produce byte-identical CSVs
regardless of --workers; the only randomness lives in `synth` behind an
explicit --seed. Set PRIOSCOPE_LOG={error,info,debug} to control logging.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import partial
from pathlib import Path

from . import bundles as bundles_mod
from . import defi as defi_mod
from . import priometrics as prio
from .errors import MalformedLine, PrioscopeError
from .ingest import (
    LoadStats,
    PoolRegistry,
    attribute_pool,
    load_accel_labels,
    load_blocks,
    load_bundles,
    load_contract_registry,
    load_events,
    load_prices,
    load_snapshots,
    load_thresholds,
)
from .model import ChainBlock
from .synth import SynthSpec, gen_corpus
from .util import default_workers, fmt_pct, parallel_map, write_csv

log = logging.getLogger("prioscope.cli")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the documented contract is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    """Validated per-run options shared by the analysis subcommands."""

    command: str
    out: Path
    chain: str = "btc"
    threshold: Fraction = prio.SPPE_STRICT
    window: str = "day"
    skip_bad: bool = False
    force: bool = False
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.threshold <= 100:
            raise UsageError(f"--threshold must be in (0, 100], got {self.threshold}")
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="prioscope", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory for CSV reports")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--skip-bad", action="store_true",
                        help="skip and count malformed input lines instead of failing")
    common.add_argument("--workers", type=int, default=default_workers(),
                        help="worker processes for per-block analysis")

    chain_opt = argparse.ArgumentParser(add_help=False)
    chain_opt.add_argument("--chain", choices=("btc", "eth"), default="btc")

    p = sub.add_parser("sppe", parents=[common, chain_opt],
                       help="position-prediction errors and acceleration flags")
    p.add_argument("--blocks", required=True)
    p.add_argument("--pools", help="pool registry TSV (marker<TAB>pool)")
    p.add_argument("--threshold", type=_fraction, default=prio.SPPE_STRICT)

    p = sub.add_parser("pools", parents=[common, chain_opt],
                       help="windowed per-pool block shares")
    p.add_argument("--blocks", required=True)
    p.add_argument("--pools", required=True)
    p.add_argument("--window", choices=("day", "week", "month"), default="day")
    p.add_argument("--subset", help="comma-separated pool names for a combined share")

    p = sub.add_parser("private", parents=[common, chain_opt],
                       help="transactions never seen pending before inclusion")
    p.add_argument("--blocks", required=True)
    p.add_argument("--snapshots", required=True)
    p.add_argument("--pools")

    p = sub.add_parser("bundles", parents=[common],
                       help="bundle economics, capture heuristics, DEX census")
    p.add_argument("--blocks", required=True)
    p.add_argument("--bundles")
    p.add_argument("--contracts", help="contract registry TSV (address<TAB>protocol)")
    p.add_argument("--economics", action="store_true",
                   help="also emit per-transaction gas-price economics")

    p = sub.add_parser("defi", parents=[common],
                       help="oracle/liquidation patterns and liquidator profits")
    p.add_argument("--blocks", required=True)
    p.add_argument("--bundles", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--prices", required=True)
    p.add_argument("--thresholds", help="liquidation threshold TSV overrides")

    p = sub.add_parser("delay", parents=[common, chain_opt],
                       help="inclusion delay and position statistics")
    p.add_argument("--blocks", required=True)
    p.add_argument("--snapshots", required=True)
    p.add_argument("--labels", help="externally labeled accelerated txids")
    p.add_argument("--threshold", type=_fraction, default=prio.SPPE_STRICT)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a seeded synthetic corpus with ground truth")
    p.add_argument("--spec", help="JSON SynthSpec file; defaults are used otherwise")
    p.add_argument("--seed", type=int, help="override the spec seed")

    p = sub.add_parser("crosscheck", parents=[common, chain_opt],
                       help="compare SPPE flags against external acceleration labels")
    p.add_argument("--blocks", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--pools")
    p.add_argument("--threshold", type=_fraction, default=prio.SPPE_STRICT)
    p.add_argument("--window", choices=("day", "week", "month"), default="month")

    return parser


def _prepare_out(out_dir: str, names: list[str], force: bool) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not force:
        clashes = [str(out / n) for n in names if (out / n).exists()]
        if clashes:
            raise UsageError(
                "refusing to overwrite existing outputs (use --force): " + ", ".join(clashes)
            )
    return out


def _registry(path: str | None) -> PoolRegistry | None:
    return PoolRegistry.from_tsv(path) if path else None


def _stream_blocks(args, cfg: RunConfig, stats: LoadStats | None = None):
    return load_blocks(args.blocks, cfg.chain, skip_bad=cfg.skip_bad, stats=stats)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_sppe(args, cfg: RunConfig) -> int:
    out = _prepare_out(args.out, ["sppe.csv", "flag_shares.csv"], cfg.force)
    registry = _registry(args.pools)
    stats = LoadStats()
    reports = []
    empty_blocks = 0
    worker = partial(prio.analyze_block, registry=registry)
    for block_reports in parallel_map(worker, _stream_blocks(args, cfg, stats), cfg.workers):
        if block_reports is None:
            empty_blocks += 1
        else:
            reports.extend(block_reports)
    result = prio.flag_accelerated(reports, args.threshold)
    prio.write_sppe_csv(reports, out / "sppe.csv")
    prio.write_flag_shares_csv(result, out / "flag_shares.csv")
    log.info(
        "%d reports, %d flagged at sppe >= %s, %d empty blocks skipped, %d bad lines skipped",
        len(reports), len(result.flagged), args.threshold, empty_blocks, stats.skipped,
    )
    return 0


def _cmd_pools(args, cfg: RunConfig) -> int:
    names = ["pool_shares.csv"] + (["subset_share.csv"] if args.subset else [])
    out = _prepare_out(args.out, names, cfg.force)
    registry = PoolRegistry.from_tsv(args.pools)
    shares = prio.pool_shares(_stream_blocks(args, cfg), registry, cfg.window)
    prio.write_pool_shares_csv(shares, out / "pool_shares.csv")
    if args.subset:
        subset = [s.strip() for s in args.subset.split(",") if s.strip()]
        rows = [
            (w, fmt_pct(shares.subset_share(w, subset)))
            for w in sorted(shares.totals)
        ]
        write_csv(out / "subset_share.csv", ["window_start", "share_pct"], rows)
    return 0


def _cmd_private(args, cfg: RunConfig) -> int:
    out = _prepare_out(args.out, ["private.csv"], cfg.force)
    registry = _registry(args.pools)
    snapshots = load_snapshots(args.snapshots, skip_bad=cfg.skip_bad)
    pools_by_height: dict[int, str] = {}

    def annotate(stream):
        for block in stream:
            pools_by_height[block.height] = (
                attribute_pool(block, registry) if registry else "Unknown"
            )
            yield block

    report = prio.detect_private_inclusions(
        annotate(_stream_blocks(args, cfg)), snapshots, registry
    )
    prio.write_private_csv(report, pools_by_height, out / "private.csv")
    total = sum(len(v) for v in report.per_block.values())
    log.info("%d private txs across %d blocks; %d uncovered blocks",
             total, len(report.per_block), report.uncovered_blocks)
    return 0


def _cmd_bundles(args, cfg: RunConfig) -> int:
    if not args.bundles and not args.economics:
        raise UsageError("bundles: need --bundles, --economics, or both")
    names = []
    if args.economics:
        names.append("tx_econ.csv")
    if args.bundles:
        names += ["bundle_econ.csv", "h2.csv", "h3.csv", "fee_gap_cdf.csv"]
        if args.contracts:
            names.append("dex_census.csv")
    out = _prepare_out(args.out, names, cfg.force)

    eth_cfg = RunConfig(cfg.command, cfg.out, "eth", workers=cfg.workers,
                        skip_bad=cfg.skip_bad, force=cfg.force)
    if args.economics:
        bundles_mod.write_tx_econ_csv(_stream_blocks(args, eth_cfg), out / "tx_econ.csv")

    if args.bundles:
        records = load_bundles(args.bundles, skip_bad=cfg.skip_bad)
        wanted = {b.block_number for b in records}
        blocks_by_number: dict[int, ChainBlock] = {}
        total_blocks = 0
        for block in _stream_blocks(args, eth_cfg):
            total_blocks += 1
            if block.height in wanted:
                blocks_by_number[block.height] = block

        missing = [b for b in records if b.block_number not in blocks_by_number]
        if missing:
            raise PrioscopeError(
                f"{len(missing)} bundles reference blocks missing from --blocks "
                f"(first: block {missing[0].block_number})"
            )
        econs = [
            bundles_mod.bundle_economics(b, blocks_by_number[b.block_number])
            for b in records
        ]
        bundles_mod.write_bundle_econ_csv(econs, out / "bundle_econ.csv")

        matches = bundles_mod.match_public_bundles(records, blocks_by_number)
        gaps = bundles_mod.fee_gaps(matches, blocks_by_number)
        bundles_mod.write_match_csv(gaps, "h2", out / "h2.csv")
        bundles_mod.write_match_csv(gaps, "h3", out / "h3.csv")
        bundles_mod.write_fee_gap_cdf_csv(
            bundles_mod.fee_gap_distribution(gaps), out / "fee_gap_cdf.csv"
        )
        if args.contracts:
            census = bundles_mod.dex_call_census(
                records, blocks_by_number, load_contract_registry(args.contracts)
            )
            bundles_mod.write_dex_census_csv(census, out / "dex_census.csv")
        log.info(
            "%d bundles in %s%% of %d supplied blocks; %d h2 / %d h3 matches",
            len(records),
            fmt_pct(Fraction(100 * len(wanted), total_blocks)),
            total_blocks,
            sum(1 for g in gaps if g.match.kind == "h2"),
            sum(1 for g in gaps if g.match.kind == "h3"),
        )
    return 0


def _cmd_defi(args, cfg: RunConfig) -> int:
    out = _prepare_out(args.out, ["patterns.csv", "profits.csv", "enabled.csv"], cfg.force)
    liquidations, updates = load_events(args.events, skip_bad=cfg.skip_bad)
    records = load_bundles(args.bundles, skip_bad=cfg.skip_bad)
    prices = load_prices(args.prices, skip_bad=cfg.skip_bad)
    thresholds = load_thresholds(args.thresholds) if args.thresholds else None

    updates_by_hash = {u.tx_hash: u for u in updates}
    liq_by_hash = {ev.tx_hash: ev for ev in liquidations}
    patterns = [
        defi_mod.classify_bundle_pattern(b, updates_by_hash, liq_by_hash) for b in records
    ]
    defi_mod.write_patterns_csv(patterns, out / "patterns.csv")

    wanted = set(liq_by_hash)
    tx_blocks: dict[str, int] = {}
    eth_cfg = RunConfig(cfg.command, cfg.out, "eth", skip_bad=cfg.skip_bad, force=cfg.force)
    for block in _stream_blocks(args, eth_cfg):
        for tx_id in block.tx_ids():
            if tx_id in wanted:
                tx_blocks[tx_id] = block.height

    unresolved = [ev for ev in liquidations if ev.tx_hash not in tx_blocks]
    if unresolved and not cfg.skip_bad:
        raise PrioscopeError(
            f"{len(unresolved)} liquidations not found in any supplied block "
            f"(first: {unresolved[0].tx_hash})"
        )
    resolved = [ev for ev in liquidations if ev.tx_hash in tx_blocks]
    result = defi_mod.profit_by_bundling_class(resolved, patterns, records, prices, tx_blocks)
    defi_mod.write_profits_csv(result.rows, out / "profits.csv")

    enabled_rows = []
    possible_before = 0
    for ev in resolved:
        block_number = tx_blocks[ev.tx_hash]
        enabled = defi_mod.enabled_by_update(ev, prices, block_number, thresholds)
        if defi_mod.liquidatable_at(ev, prices, block_number - 1, thresholds):
            possible_before += 1
        enabled_rows.append((ev, enabled))
    defi_mod.write_enabled_csv(enabled_rows, out / "enabled.csv")
    log.info(
        "%d liquidations (%d skipped), %d enabled by same-block update, "
        "%d already possible in the previous block",
        len(resolved), len(unresolved),
        sum(1 for _, e in enabled_rows if e), possible_before,
    )
    return 0


def _cmd_delay(args, cfg: RunConfig) -> int:
    out = _prepare_out(args.out, ["delay_stats.csv"], cfg.force)
    snapshots = load_snapshots(args.snapshots, skip_bad=cfg.skip_bad)
    first_seen = prio.first_seen_times(snapshots)
    if args.labels:
        flagged = load_accel_labels(args.labels)
    else:
        reports = []
        for block_reports in parallel_map(
            prio.analyze_block, _stream_blocks(args, cfg), cfg.workers
        ):
            if block_reports:
                reports.extend(block_reports)
        flagged = prio.flag_accelerated(reports, args.threshold).flagged
    stats = prio.delay_position_stats(flagged, first_seen, _stream_blocks(args, cfg))
    prio.write_delay_stats_csv(stats, out / "delay_stats.csv")
    for name, group in (("accelerated", stats.accelerated),
                        ("non_accelerated", stats.non_accelerated)):
        if group and group.unconfirmed:
            log.info("%d %s txs were never included", len(group.unconfirmed), name)
    return 0


def _cmd_synth(args, cfg: RunConfig) -> int:
    spec = SynthSpec.from_json(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    names = ["blocks.jsonl", "snapshots.jsonl", "bundles.jsonl", "pools.tsv",
             "ground_truth.json"]
    out = _prepare_out(args.out, names, cfg.force)
    truth = gen_corpus(spec, out)
    log.info(
        "corpus: %d blocks, %d accelerated, %d private, %d h2, %d h3",
        spec.blocks, len(truth.accelerated), len(truth.private),
        len(truth.h2_bundles), len(truth.h3_bundles),
    )
    return 0


def _cmd_crosscheck(args, cfg: RunConfig) -> int:
    out = _prepare_out(args.out, ["crosscheck.csv", "accel_timeseries.csv"], cfg.force)
    labels = load_accel_labels(args.labels)
    registry = _registry(args.pools)
    reports = []
    worker = partial(prio.analyze_block, registry=registry)
    for block_reports in parallel_map(worker, _stream_blocks(args, cfg), cfg.workers):
        if block_reports:
            reports.extend(block_reports)
    flagged = prio.flag_accelerated(reports, args.threshold).flagged
    counts = prio.accel_label_crosscheck(flagged, labels)
    write_csv(
        out / "crosscheck.csv",
        ["flagged_and_labeled", "flagged_only", "labeled_only"],
        [(str(counts.both), str(counts.flagged_only), str(counts.labeled_only))],
    )
    series = prio.accel_share_timeseries(
        labels, _stream_blocks(args, cfg), registry or PoolRegistry(), cfg.window
    )
    prio.write_pool_shares_csv(series, out / "accel_timeseries.csv")
    return 0


_COMMANDS = {
    "sppe": _cmd_sppe,
    "pools": _cmd_pools,
    "private": _cmd_private,
    "bundles": _cmd_bundles,
    "defi": _cmd_defi,
    "delay": _cmd_delay,
    "synth": _cmd_synth,
    "crosscheck": _cmd_crosscheck,
}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("PRIOSCOPE_LOG", "error").lower()
    logging.basicConfig(
        level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
            level, logging.ERROR
        ),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = RunConfig(
            command=args.command,
            out=Path(args.out),
            chain=getattr(args, "chain", "btc"),
            threshold=getattr(args, "threshold", prio.SPPE_STRICT),
            window=getattr(args, "window", "day"),
            skip_bad=args.skip_bad,
            force=args.force,
            workers=args.workers,
        )
        return _COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"prioscope: error: {exc}", file=sys.stderr)
        return 1
    except MalformedLine as exc:
        print(f"prioscope: {exc.path}:{exc.line_no}: {exc.reason}", file=sys.stderr)
        return 2
    except PrioscopeError as exc:
        print(f"prioscope: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
