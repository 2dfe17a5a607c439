"""Command-line front end for the simulator and the analysis tools."""

from __future__ import annotations

import argparse
import csv
import os
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from .core import Configuration, Member, NodeId, ProtocolParams
from .sensitivity import bound_monte_carlo, conflict_bound, sensitivity_sweep, sweep_csv
from .simnet import (FlipFlop, LinkFault, RunReport, Scenario, SimulationInvariantError,
                     bootstrap_scenario, crash_scenario, endpoint_for, partition_scenario, run)
from .topology import SpectralReport, build, spectral_gap

SCENARIO_FILE = "scenario.json"
SUMMARY_FILE = "summary.json"
TIMESERIES_FILE = "timeseries.csv"


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser, n: int, duration: int) -> None:
    p.add_argument("--n", type=int, default=n, help="cluster size")
    p.add_argument("--k", type=int, default=10, help="number of rings")
    p.add_argument("--h", type=int, default=9, help="high watermark")
    p.add_argument("--l", type=int, default=3, help="low watermark")
    p.add_argument("--seed", type=int, default=0, help="scenario seed (RAPID_SEED overrides)")
    p.add_argument("--duration", type=int, default=duration, help="ticks to simulate")
    p.add_argument("--mode", choices=("decentralized", "centralized"), default="decentralized")
    p.add_argument("--aux", type=int, default=3, help="auxiliary nodes in centralized mode")
    p.add_argument("--delay", type=_ints, default=[1, 1], help="min,max message delay in ticks")
    p.add_argument("--out", type=Path, help="directory for scenario, summary and timeseries")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rapidmem", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bootstrap", help="joiners arriving through a single seed")
    _common(p, 500, 200)
    p.add_argument("--spread", type=int, default=10, help="ticks over which joiners arrive")

    p = sub.add_parser("crash", help="simultaneous crash failures")
    _common(p, 100, 150)
    p.add_argument("--fail", type=int, default=10)
    p.add_argument("--at", type=int, default=50)

    p = sub.add_parser("partition", help="cut a group of nodes off, then heal")
    _common(p, 20, 250)
    p.add_argument("--side", type=int, default=3)
    p.add_argument("--at", type=int, default=20)
    p.add_argument("--heal", type=int, default=120)
    p.add_argument("--rejoin", action="store_true", help="removed nodes rejoin with new ids")

    p = sub.add_parser("loss", help="asymmetric packet loss on a few nodes")
    _common(p, 100, 300)
    p.add_argument("--faulty", type=int, default=1)
    p.add_argument("--at", type=int, default=20)
    p.add_argument("--egress", type=float, default=0.8)
    p.add_argument("--ingress", type=float, default=0.0)
    p.add_argument("--flip-flop", action="store_true",
                   help="alternate full ingress blackout on/off instead")
    p.add_argument("--period", type=_ints, default=[20, 20], help="on,off ticks for --flip-flop")

    p = sub.add_parser("sensitivity", help="conflict rate over H, L and F")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--hs", type=_ints, default=[6, 7, 8, 9])
    p.add_argument("--ls", type=_ints, default=[1, 2, 3, 4])
    p.add_argument("--fs", type=_ints, default=[2, 4, 8, 16])
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="CSV file (stdout when omitted)")

    p = sub.add_parser("spectral", help="second eigenvalue of random K-ring overlays")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", type=Path, help="CSV file (stdout when omitted)")

    p = sub.add_parser("bound", help="asymptotic conflict upper bound")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--mc", type=int, default=0, help="also estimate by Monte Carlo")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("replay", help="re-run a saved scenario file")
    p.add_argument("scenario", type=Path)
    p.add_argument("--out", type=Path)
    return ap


def _seed(args) -> int:
    env = os.environ.get("RAPID_SEED")
    return int(env, 0) if env else args.seed


def _params(ap, args) -> ProtocolParams:
    try:
        return ProtocolParams(K=args.k, H=args.h, L=args.l)
    except ValueError as exc:
        ap.error(str(exc))


def _scenario(ap, args) -> Scenario:
    params = _params(ap, args)
    seed = _seed(args)
    kw = dict(params=params, seed=seed, duration=args.duration, delay=tuple(args.delay))
    if args.mode == "centralized":
        kw.update(mode="centralized", aux_count=args.aux)
    cmd = args.command
    try:
        if cmd == "bootstrap":
            return bootstrap_scenario(args.n, spread=args.spread, **kw)
        if cmd == "crash":
            if not 0 < args.fail < args.n:
                ap.error("--fail must satisfy 0 < fail < n")
            return crash_scenario(args.n, args.fail, tick=args.at, **kw)
        if cmd == "partition":
            return partition_scenario(args.n, args.side, tick=args.at, end=args.heal,
                                      auto_rejoin=args.rejoin, **kw)
        rng = random.Random(seed)
        lo = args.aux if args.mode == "centralized" else 0
        nodes = tuple(sorted(rng.sample(range(lo, args.n), args.faulty)))
        if args.flip_flop:
            on, off = args.period
            ev = FlipFlop(args.at, nodes, on, off, "ingress")
        else:
            ev = LinkFault(args.at, nodes, ingress=args.ingress, egress=args.egress)
        return Scenario(n=args.n, events=(ev,), **kw)
    except ValueError as exc:
        ap.error(str(exc))


def write_report(report: RunReport, out: Optional[Path]) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / SCENARIO_FILE).write_text(report.scenario.dumps())
    (out / SUMMARY_FILE).write_text(report.summary_json())
    (out / TIMESERIES_FILE).write_text(report.timeseries_csv())


def _simulate(sc: Scenario, out: Optional[Path]) -> int:
    try:
        report = run(sc)
    except SimulationInvariantError as exc:
        print(f"agreement=FAILED: {exc}", file=sys.stderr)
        return 1
    write_report(report, out)
    print(report.line())
    return 0


def _spectral(args) -> int:
    rows = []
    seed = _seed(args)
    params = ProtocolParams(K=args.k, H=args.k, L=1)
    for s in range(args.seeds):
        rng = random.Random(seed * 1_000_003 + s)
        members = [Member(NodeId(rng.getrandbits(128)), endpoint_for(i)) for i in range(args.n)]
        rep = spectral_gap(build(Configuration.initial(members, params)), tol=args.tol, seed=s)
        rows.append([s] + rep.row())
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed",) + SpectralReport.CSV_HEADER)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    cmd = args.command
    if cmd in ("bootstrap", "crash", "partition", "loss"):
        return _simulate(_scenario(ap, args), args.out)
    if cmd == "replay":
        try:
            sc = Scenario.loads(args.scenario.read_text())
        except (OSError, ValueError, KeyError) as exc:
            ap.error(f"cannot load scenario: {exc}")
        return _simulate(sc, args.out)
    if cmd == "sensitivity":
        if args.n < 2 or args.reps < 1:
            ap.error("need --n >= 2 and --reps >= 1")
        try:
            rows = sensitivity_sweep(args.n, args.k, args.hs, args.ls, args.fs, args.reps,
                                     _seed(args))
        except ValueError as exc:
            ap.error(str(exc))
        text = sweep_csv(rows)
        if args.out:
            args.out.write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    if cmd == "spectral":
        if args.n < 3:
            ap.error("spectral analysis needs --n >= 3")
        return _spectral(args)
    if cmd == "bound":
        try:
            value = conflict_bound(args.k, args.delta, args.t)
        except ValueError as exc:
            ap.error(str(exc))
        print(f"{value:.3g}")
        if args.mc:
            p, se = bound_monte_carlo(args.k, args.delta, args.t, args.mc, _seed(args))
            print(f"monte_carlo={p:.6f} stderr={se:.6f} within_bound={p <= value + 3 * se}")
        return 0
    ap.error(f"unknown command {cmd}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
