#!/usr/bin/env python3
"""Sweep the corpus: check every program, co-simulate the accepted ones
across sizes and schedulers, and confirm the rejected ones fail for the
stated reason.  Prints one line per (network, size) combination.

Usage: python scripts/run_corpus.py [--sizes 1,2,4,8] [--seeds 5]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sdflow.conformance import check_preservation
from sdflow.parser import parse_program_or_raise
from sdflow.syntax import SizeKind
from sdflow.typecheck import check_network

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="1,2,4,8")
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(x) for x in args.sizes.split(",")]
    schedulers = [("roundRobin", 0)] + [("random", s) for s in range(1, args.seeds + 1)]

    t0 = time.time()
    bad = 0
    for f in sorted((ROOT / "corpus" / "good").glob("*.sdf")):
        net = parse_program_or_raise(f.read_text())
        res = check_network(net)
        if not res.ok:
            print(f"{f.name:<28} CHECK FAILED: {res.diagnostics[0]}")
            bad += 1
            continue
        params = [n for n, k in net.tenv.items if isinstance(k, SizeKind)]
        for v in sizes:
            worst = 0
            steps = 0
            for sched, seed in schedulers:
                rep = check_preservation(net, {p: v for p in params},
                                         sched, seed, name=f.name)
                worst += len(rep.violations)
                steps = max(steps, rep.steps)
            status = "ok" if worst == 0 else f"{worst} violations"
            print(f"{f.name:<28} v={v:<2} steps={steps:<5} {status}")
            bad += worst != 0

    for f in sorted((ROOT / "corpus" / "rejected").glob("*.sdf")):
        net = parse_program_or_raise(f.read_text())
        res = check_network(net)
        verdict = "rejected" if not res.ok else "WRONGLY ACCEPTED"
        rule = res.diagnostics[0].rule if res.diagnostics else "-"
        print(f"{f.name:<28} {verdict} ({rule})")
        bad += res.ok

    print(f"\n{time.time() - t0:.1f}s elapsed, {'all clean' if not bad else f'{bad} problems'}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
